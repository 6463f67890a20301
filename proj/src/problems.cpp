#include "pwlbvp/problems.hpp"

#include "pwlbvp/errors.hpp"
#include "pwlbvp/expression.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <set>

namespace pwlbvp {

namespace {

class Params {
public:
    Params(std::string name, const std::map<std::string, double>& given) : name_(std::move(name)), given_(given) {}

    double get(const std::string& key, double fallback) {
        used_.insert(key);
        auto it = given_.find(key);
        return it == given_.end() ? fallback : it->second;
    }

    Box box(Vec lo, Vec hi) {
        const double all_lo = get("box_lo", std::nan(""));
        const double all_hi = get("box_hi", std::nan(""));
        for (Eigen::Index d = 0; d < lo.size(); ++d) {
            if (!std::isnan(all_lo)) lo(d) = all_lo;
            if (!std::isnan(all_hi)) hi(d) = all_hi;
            lo(d) = get("box_lo" + std::to_string(d + 1), lo(d));
            hi(d) = get("box_hi" + std::to_string(d + 1), hi(d));
        }
        if (!((hi.array() > lo.array()).all())) throw DomainError("builtin '" + name_ + "': empty state box");
        return {lo, hi};
    }

    void finish() const {
        for (const auto& [key, value] : given_)
            if (!used_.count(key)) throw DomainError("builtin '" + name_ + "' has no parameter '" + key + "'");
    }

private:
    std::string name_;
    const std::map<std::string, double>& given_;
    std::set<std::string> used_;
};

Vec constant(int n, double v) { return Vec::Constant(n, v); }

Mat scalar_mat(double v) { return Mat::Constant(1, 1, v); }

Problem linear_scalar(Params& p) {
    const double a = p.get("a", 1.0);
    const double x0 = p.get("x0", 1.0);
    Problem pr;
    pr.dim = 1;
    pr.field = [a](const Vec& x, double) { return Vec(a * x); };
    pr.jacobian = [a](const Vec&, double) { return scalar_mat(a); };
    pr.boundary = BoundaryCondition::separable([x0](const Vec& s) { return s(0) - x0; }, free_boundary());
    pr.state_box = p.box(constant(1, 0.0), constant(1, 3.0));
    return pr;
}

Problem linear_system(Params& p) {
    const double nd = p.get("n", 2.0);
    if (nd < 1 || nd > 9 || std::trunc(nd) != nd) throw DomainError("builtin 'linear_system': n must be 1..9");
    const int n = static_cast<int>(nd);
    Mat l = Mat::Zero(n, n);
    if (n >= 2) {
        l(0, 1) = 1.0;
        l(1, 0) = -1.0;
    }
    Vec c = Vec::Zero(n);
    Vec x0 = Vec::Zero(n);
    x0(0) = 1.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) l(i, j) = p.get("L" + std::to_string(i + 1) + std::to_string(j + 1), l(i, j));
        c(i) = p.get("c" + std::to_string(i + 1), c(i));
        x0(i) = p.get("x0" + std::to_string(i + 1), x0(i));
    }
    Problem pr;
    pr.dim = n;
    pr.field = [l, c](const Vec& x, double) { return Vec(l * x + c); };
    pr.jacobian = [l](const Vec&, double) { return l; };
    pr.boundary = BoundaryCondition::separable([x0](const Vec& s) { return (s - x0).cwiseAbs().sum(); },
                                               free_boundary());
    pr.state_box = p.box(constant(n, -2.0), constant(n, 2.0));
    return pr;
}

Problem logistic(Params& p) {
    const double r = p.get("r", 1.0);
    const double x0 = p.get("x0", 0.5);
    Problem pr;
    pr.dim = 1;
    pr.field = [r](const Vec& x, double) { return Vec(r * x.cwiseProduct(constant(1, 1.0) - x)); };
    pr.jacobian = [r](const Vec& x, double) { return scalar_mat(r * (1.0 - 2.0 * x(0))); };
    pr.boundary = BoundaryCondition::separable([x0](const Vec& s) { return s(0) - x0; }, free_boundary());
    pr.state_box = p.box(constant(1, 0.0), constant(1, 1.0));
    return pr;
}

Problem bratu_system(Params& p) {
    const double lambda = p.get("lambda", 1.0);
    Problem pr;
    pr.dim = 2;
    pr.field = [lambda](const Vec& x, double) {
        Vec f(2);
        f << x(1), -lambda * std::exp(x(0));
        return f;
    };
    pr.jacobian = [lambda](const Vec& x, double) {
        Mat j(2, 2);
        j << 0.0, 1.0, -lambda * std::exp(x(0)), 0.0;
        return j;
    };
    pr.boundary = BoundaryCondition::separable([](const Vec& s) { return s(0); }, [](const Vec& s) { return s(0); });
    Vec lo(2);
    Vec hi(2);
    lo << -0.1, -0.7;
    hi << 0.3, 0.7;
    pr.state_box = p.box(lo, hi);
    return pr;
}

Problem sum_boundary(Params& p) {
    const double a = p.get("a", 0.0);
    const double c = p.get("c", 1.0);
    const double k = p.get("K", 1.0);
    Problem pr;
    pr.dim = 1;
    pr.field = [a, c](const Vec& x, double) { return Vec(a * x + constant(1, c)); };
    pr.jacobian = [a](const Vec&, double) { return scalar_mat(a); };
    pr.boundary = BoundaryCondition::general([k](const Vec& s0, const Vec& s1) { return s0(0) + s1(0) - k; });
    pr.state_box = p.box(constant(1, -1.0), constant(1, 2.0));
    return pr;
}

Problem quadratic_decay(Params& p) {
    const double k = p.get("k", 1.0);
    const double x0 = p.get("x0", 1.0);
    Problem pr;
    pr.dim = 1;
    pr.field = [k](const Vec& x, double) { return Vec(-k * x.cwiseProduct(x)); };
    pr.jacobian = [k](const Vec& x, double) { return scalar_mat(-2.0 * k * x(0)); };
    pr.boundary = BoundaryCondition::separable([x0](const Vec& s) { return s(0) - x0; }, free_boundary());
    pr.state_box = p.box(constant(1, 0.0), constant(1, 1.5));
    return pr;
}

using Factory = Problem (*)(Params&);

const std::map<std::string, Factory>& registry() {
    static const std::map<std::string, Factory> r{
        {"bratu_system", bratu_system}, {"linear_scalar", linear_scalar}, {"linear_system", linear_system},
        {"logistic", logistic},         {"quadratic_decay", quadratic_decay}, {"sum_boundary", sum_boundary},
    };
    return r;
}

Expression parse_checked(const std::string& text, int dim, const char* what, bool coupled) {
    Expression e = parse_expression(text);
    if (e.max_index('x') > dim) throw DomainError(std::string(what) + " uses a state index above " + std::to_string(dim));
    if (coupled) {
        if (e.max_index('a') > dim || e.max_index('c') > dim)
            throw DomainError(std::string(what) + " uses a boundary index above " + std::to_string(dim));
        if (e.max_index('x') > 0 || e.uses_time())
            throw DomainError(std::string(what) + " may only use a1..an and c1..cn");
    } else if (e.max_index('a') > 0 || e.max_index('c') > 0) {
        throw DomainError(std::string(what) + " may only use t and x1..xn");
    }
    return e;
}

}  // namespace

std::vector<std::string> builtin_names() {
    std::vector<std::string> out;
    for (const auto& [name, _] : registry()) out.push_back(name);
    return out;
}

Problem builtin(const std::string& name, const std::map<std::string, double>& params) {
    auto it = registry().find(name);
    if (it == registry().end()) throw DomainError("unknown builtin problem '" + name + "'");
    Params p(name, params);
    Problem pr = it->second(p);
    p.finish();
    return pr;
}

Problem make_problem(const ProblemSpec& spec) {
    if (spec.is_builtin()) {
        Problem pr = builtin(spec.builtin, spec.params);
        if (spec.box) {
            if (spec.box->dim() != pr.dim) throw DomainError("state box dimension does not match the builtin");
            pr.state_box = *spec.box;
        }
        return pr;
    }
    const int n = spec.dim;
    if (n < 1) throw DomainError("expression problem needs dim >= 1");
    if (static_cast<int>(spec.field.size()) != n) throw DomainError("expression problem needs one field expression per dimension");
    if (!spec.box) throw DomainError("expression problem needs a state box");
    if (spec.box->dim() != n) throw DomainError("state box dimension does not match dim");

    auto exprs = std::make_shared<std::vector<Expression>>();
    for (std::size_t i = 0; i < spec.field.size(); ++i)
        exprs->push_back(parse_checked(spec.field[i], n, ("field component " + std::to_string(i + 1)).c_str(), false));

    Problem pr;
    pr.dim = n;
    pr.field = [exprs](const Vec& x, double t) {
        Vec f(static_cast<Eigen::Index>(exprs->size()));
        for (std::size_t i = 0; i < exprs->size(); ++i)
            f(static_cast<Eigen::Index>(i)) = eval_expression((*exprs)[i], t, x);
        return f;
    };
    pr.state_box = *spec.box;

    if (!spec.beta.empty()) {
        if (!spec.beta0.empty() || !spec.beta1.empty())
            throw DomainError("give either a coupled boundary expression or a separable pair, not both");
        auto b = std::make_shared<Expression>(parse_checked(spec.beta, n, "boundary expression", true));
        pr.boundary = BoundaryCondition::general(
            [b](const Vec& a, const Vec& c) { return eval_expression(*b, Bindings{0.0, nullptr, &a, &c}); });
    } else {
        auto side = [n](const std::string& text, double t, const char* what) -> ScalarFn {
            if (text.empty()) return free_boundary();
            auto e = std::make_shared<Expression>(parse_checked(text, n, what, false));
            return [e, t](const Vec& x) { return eval_expression(*e, t, x); };
        };
        pr.boundary = BoundaryCondition::separable(side(spec.beta0, 0.0, "beta0"), side(spec.beta1, 1.0, "beta1"));
    }
    return pr;
}

VectorFn make_control(const PwlModel& model, const Problem& problem) {
    auto shared = std::make_shared<const PwlModel>(model);
    FieldFn f = problem.field;
    return [shared, f](double t) { return Vec(model_derivative(*shared, t) - f(eval_model(*shared, t), t)); };
}

double control_energy(const PwlModel& model, const Problem& problem, const QuadratureRule& quad) {
    const VectorFn u = make_control(model, problem);
    double sum = 0.0;
    for (const auto& piece : model.pieces())
        sum += quad.integrate(piece.start(), piece.end(), [&](double t) { return u(t).squaredNorm(); });
    return sum;
}

}  // namespace pwlbvp
