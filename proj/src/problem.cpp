#include "pwlbvp/problem.hpp"

#include "pwlbvp/errors.hpp"

#include <cmath>
#include <limits>

namespace pwlbvp {

BoundaryCondition BoundaryCondition::separable(ScalarFn beta0, ScalarFn beta1) {
    BoundaryCondition bc;
    bc.kind_ = Kind::Separable;
    bc.beta0_ = std::move(beta0);
    bc.beta1_ = std::move(beta1);
    return bc;
}

BoundaryCondition BoundaryCondition::general(CoupledFn beta) {
    BoundaryCondition bc;
    bc.kind_ = Kind::General;
    bc.beta_ = std::move(beta);
    return bc;
}

double BoundaryCondition::beta0(const Vec& a) const {
    if (kind_ != Kind::Separable) throw DomainError("beta0 requested from a general boundary condition");
    return beta0_(a);
}

double BoundaryCondition::beta1(const Vec& c) const {
    if (kind_ != Kind::Separable) throw DomainError("beta1 requested from a general boundary condition");
    return beta1_(c);
}

double BoundaryCondition::evaluate(const Vec& a, const Vec& c) const {
    if (kind_ == Kind::General) return beta_(a, c);
    const double b0 = beta0_(a);
    const double b1 = beta1_(c);
    return b0 * b0 + b1 * b1;
}

Vec BoundaryCondition::residuals(const Vec& a, const Vec& c) const {
    if (kind_ == Kind::General) {
        Vec r(1);
        r(0) = beta_(a, c);
        return r;
    }
    Vec r(2);
    r(0) = beta0_(a);
    r(1) = beta1_(c);
    return r;
}

Mat jacobian_at(const Problem& problem, const Vec& x, double t) {
    if (problem.jacobian) {
        Mat j = (*problem.jacobian)(x, t);
        if (!j.allFinite()) throw DomainError("jacobian_at: non-finite Jacobian entry");
        return j;
    }
    const auto n = x.size();
    const double root_eps = std::sqrt(std::numeric_limits<double>::epsilon());
    Mat j(n, n);
    Vec xp = x;
    Vec xm = x;
    for (Eigen::Index c = 0; c < n; ++c) {
        const double h = root_eps * (1.0 + std::abs(x(c)));
        xp(c) = x(c) + h;
        xm(c) = x(c) - h;
        j.col(c) = (problem.f(xp, t) - problem.f(xm, t)) / (2.0 * h);
        xp(c) = x(c);
        xm(c) = x(c);
    }
    if (!j.allFinite()) throw DomainError("jacobian_at: non-finite field value");
    return j;
}

}  // namespace pwlbvp
