#pragma once

#include "pwlbvp/types.hpp"

#include <functional>
#include <optional>

namespace pwlbvp {

using FieldFn = std::function<Vec(const Vec& x, double t)>;
using JacobianFn = std::function<Mat(const Vec& x, double t)>;
using ScalarFn = std::function<double(const Vec& x)>;
using CoupledFn = std::function<double(const Vec& a, const Vec& c)>;

/// Boundary condition β. Separable conditions are two independent scalar
/// constraints β0(x(0)) = 0 and β1(x(1)) = 0; general ones a single coupled
/// constraint β(x(0), x(1)) = 0.
class BoundaryCondition {
public:
    enum class Kind { Separable, General };

    static BoundaryCondition separable(ScalarFn beta0, ScalarFn beta1);
    static BoundaryCondition general(CoupledFn beta);

    Kind kind() const { return kind_; }
    bool is_separable() const { return kind_ == Kind::Separable; }

    double beta0(const Vec& a) const;
    double beta1(const Vec& c) const;

    /// Coupled value. Separable conditions are folded into β0(a)² + β1(c)².
    double evaluate(const Vec& a, const Vec& c) const;

    /// Residual vector: (β0(a), β1(c)) for separable, (β(a, c)) for general.
    Vec residuals(const Vec& a, const Vec& c) const;

private:
    Kind kind_ = Kind::General;
    ScalarFn beta0_;
    ScalarFn beta1_;
    CoupledFn beta_;
};

struct Problem {
    int dim = 1;
    FieldFn field;
    std::optional<JacobianFn> jacobian;
    BoundaryCondition boundary = BoundaryCondition::general([](const Vec&, const Vec&) { return 0.0; });
    Box state_box;

    Vec f(const Vec& x, double t) const { return field(x, t); }
};

/// ∂f/∂x at (x, t): the analytic Jacobian when supplied, otherwise central
/// differences with step √ε·(1 + |x_j|). Non-finite values are a DomainError.
Mat jacobian_at(const Problem& problem, const Vec& x, double t);

/// Free boundary function (always satisfied).
inline ScalarFn free_boundary() {
    return [](const Vec&) { return 0.0; };
}

}  // namespace pwlbvp
