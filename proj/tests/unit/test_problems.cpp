#include "doctest.h"

#include "support/oracles.hpp"

#include "pwlbvp/error_functionals.hpp"
#include "pwlbvp/errors.hpp"
#include "pwlbvp/problems.hpp"
#include "pwlbvp/refine.hpp"

#include <cmath>
#include <random>

using namespace pwlbvp;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }

PwlModel constant_model(const Vec& value, int intervals = 8) {
    Mesh mesh = Mesh::uniform(intervals);
    std::vector<Vec> vals(static_cast<std::size_t>(intervals) + 1, value);
    std::vector<Vec> slopes(vals.size(), Vec::Zero(value.size()));
    return PwlModel::hermite(mesh, vals, slopes);
}

// Classical RK4 for x'' = -λ e^x from (0, s), returning x and x' at t.
std::pair<double, double> bratu_rk4(double lambda, double s, double t_end, int steps) {
    auto rhs = [lambda](double x, double v) { return std::pair{v, -lambda * std::exp(x)}; };
    double x = 0.0, v = s;
    const double h = t_end / steps;
    for (int i = 0; i < steps; ++i) {
        auto [k1x, k1v] = rhs(x, v);
        auto [k2x, k2v] = rhs(x + 0.5 * h * k1x, v + 0.5 * h * k1v);
        auto [k3x, k3v] = rhs(x + 0.5 * h * k2x, v + 0.5 * h * k2v);
        auto [k4x, k4v] = rhs(x + h * k3x, v + h * k3v);
        x += h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x);
        v += h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v);
    }
    return {x, v};
}

double bratu_shooting_slope(double lambda) {
    double s0 = 0.3, s1 = 0.7;
    double f0 = bratu_rk4(lambda, s0, 1.0, 4000).first;
    double f1 = bratu_rk4(lambda, s1, 1.0, 4000).first;
    for (int it = 0; it < 50 && std::abs(f1) > 1e-14; ++it) {
        const double s2 = s1 - f1 * (s1 - s0) / (f1 - f0);
        s0 = s1;
        f0 = f1;
        s1 = s2;
        f1 = bratu_rk4(lambda, s1, 1.0, 4000).first;
    }
    return s1;
}

}  // namespace

TEST_CASE("builtin registry") {
    const auto names = builtin_names();
    CHECK(names.size() == 6);
    for (const auto& n : names) CHECK_NOTHROW(builtin(n));
    CHECK_THROWS_AS(builtin("no_such_problem"), DomainError);
    CHECK_THROWS_AS(builtin("logistic", {{"rate", 2.0}}), DomainError);
    CHECK_THROWS_AS(builtin("logistic", {{"box_lo", 1.0}, {"box_hi", 0.5}}), DomainError);
    CHECK_THROWS_AS(builtin("linear_system", {{"n", 2.5}}), DomainError);

    Problem p = builtin("bratu_system", {{"box_hi2", 0.9}});
    CHECK(p.state_box.upper(1) == 0.9);
    CHECK(p.state_box.lower(0) == -0.1);
    CHECK(builtin("linear_system", {{"n", 3}}).dim == 3);
}

TEST_CASE("builtin Jacobians agree with central differences") {
    std::mt19937_64 rng(7);
    for (const auto& name : builtin_names()) {
        Problem p = builtin(name);
        REQUIRE(p.jacobian.has_value());
        Problem fd = p;
        fd.jacobian.reset();
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int k = 0; k < 5; ++k) {
            Vec x(p.dim);
            for (int d = 0; d < p.dim; ++d)
                x(d) = p.state_box.lower(d) + u(rng) * (p.state_box.upper(d) - p.state_box.lower(d));
            const double t = u(rng);
            CHECK((jacobian_at(p, x, t) - jacobian_at(fd, x, t)).cwiseAbs().maxCoeff() <= 1e-6);
        }
    }
}

TEST_CASE("linear_scalar refines to the exponential") {
    Problem p = builtin("linear_scalar");
    RefineConfig cfg;
    auto r = refine_loop(constant_model(v1(1.0)), p, cfg);
    CHECK(r.log.converged);
    CHECK(std::abs(eval_model(r.model, 1.0)(0) - std::exp(1.0)) <= 1e-6);
    CHECK(std::abs(eval_model(r.model, 0.0)(0) - 1.0) <= 1e-8);
}

TEST_CASE("logistic refines to the sigmoid") {
    Problem p = builtin("logistic");
    auto r = refine_loop(constant_model(v1(0.5)), p, RefineConfig{});
    CHECK(r.log.converged);
    CHECK(std::abs(eval_model(r.model, 1.0)(0) - 0.731058579) <= 1e-6);
    for (double t : {0.25, 0.5, 0.75})
        CHECK(std::abs(eval_model(r.model, t)(0) - 1.0 / (1.0 + std::exp(-t))) <= 1e-6);
}

TEST_CASE("bratu_system matches a shooting reference") {
    const double s = bratu_shooting_slope(1.0);
    CHECK(std::abs(bratu_rk4(1.0, s, 1.0, 4000).first) <= 1e-12);

    Problem p = builtin("bratu_system");
    Vec zero = Vec::Zero(2);
    auto r = refine_loop(constant_model(zero), p, RefineConfig{});
    CHECK(r.log.converged);
    CHECK(std::abs(eval_model(r.model, 0.0)(1) - s) <= 1e-6);
    for (double t : {0.2, 0.5, 0.8, 1.0}) {
        auto [x, v] = bratu_rk4(1.0, s, t, 4000);
        CHECK(std::abs(eval_model(r.model, t)(0) - x) <= 1e-6);
        CHECK(std::abs(eval_model(r.model, t)(1) - v) <= 1e-6);
    }

    // The field evaluated on the reference trajectory reproduces its derivative.
    for (double t : {0.1, 0.4, 0.9}) {
        auto [x, v] = bratu_rk4(1.0, s, t, 4000);
        auto [xh, vh] = bratu_rk4(1.0, s, t + 1e-4, 4000);
        auto [xl, vl] = bratu_rk4(1.0, s, t - 1e-4, 4000);
        Vec state(2);
        state << x, v;
        Vec deriv(2);
        deriv << (xh - xl) / 2e-4, (vh - vl) / 2e-4;
        CHECK((p.f(state, t) - deriv).norm() <= 1e-6);
    }
}

TEST_CASE("sum_boundary is a general condition") {
    Problem p = builtin("sum_boundary", {{"K", 2.0}});
    CHECK_FALSE(p.boundary.is_separable());
    CHECK(p.boundary.evaluate(v1(0.5), v1(1.5)) == 0.0);
    CHECK(p.boundary.evaluate(v1(0.0), v1(1.0)) == -1.0);
}

TEST_CASE("expression problems") {
    ProblemSpec spec;
    spec.dim = 2;
    spec.field = {"x2", "-x1 + t"};
    spec.beta0 = "x1";
    spec.box = Box{Vec::Constant(2, -1.0), Vec::Constant(2, 1.0)};
    Problem p = make_problem(spec);
    Vec x(2);
    x << 0.3, -0.2;
    CHECK(p.f(x, 0.5)(0) == -0.2);
    CHECK(p.f(x, 0.5)(1) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(p.boundary.is_separable());
    CHECK(p.boundary.beta0(x) == 0.3);
    CHECK(p.boundary.beta1(x) == 0.0);
    CHECK_FALSE(p.jacobian.has_value());
    Mat j = jacobian_at(p, x, 0.5);
    CHECK(std::abs(j(0, 1) - 1.0) <= 1e-7);
    CHECK(std::abs(j(1, 0) + 1.0) <= 1e-7);

    ProblemSpec bad = spec;
    bad.field = {"x3", "x1"};
    CHECK_THROWS_AS(make_problem(bad), DomainError);
    bad = spec;
    bad.field = {"x2"};
    CHECK_THROWS_AS(make_problem(bad), DomainError);
    bad = spec;
    bad.beta = "a1 + c2";
    CHECK_THROWS_AS(make_problem(bad), DomainError);
    bad.beta0.clear();
    CHECK_NOTHROW(make_problem(bad));
    bad.beta = "a1 + x1";
    CHECK_THROWS_AS(make_problem(bad), DomainError);
    bad = spec;
    bad.beta0 = "a1";
    CHECK_THROWS_AS(make_problem(bad), DomainError);
    bad = spec;
    bad.box.reset();
    CHECK_THROWS_AS(make_problem(bad), DomainError);
    bad = spec;
    bad.field = {"x2", "x1 +"};
    CHECK_THROWS_AS(make_problem(bad), ParseError);

    ProblemSpec b;
    b.builtin = "logistic";
    b.box = Box{v1(0.1), v1(0.9)};
    CHECK(make_problem(b).state_box.lower(0) == 0.1);
    b.box = Box{Vec::Zero(2), Vec::Ones(2)};
    CHECK_THROWS_AS(make_problem(b), DomainError);
}

TEST_CASE("make_control identities") {
    Problem logi = builtin("logistic");

    // The exact solution in closed form, sampled as a Hermite model, has a
    // control of the size of the interpolation error only.
    Mesh mesh = Mesh::uniform(64);
    std::vector<Vec> vals, slopes;
    for (double t : mesh.nodes()) {
        const double x = 1.0 / (1.0 + std::exp(-t));
        vals.push_back(v1(x));
        slopes.push_back(v1(x * (1 - x)));
    }
    auto exact = PwlModel::hermite(mesh, vals, slopes);
    auto u = make_control(exact, logi);
    for (double t : mesh.nodes()) CHECK(std::abs(u(t)(0)) <= 1e-15);
    CHECK(std::abs(u(0.37)(0)) <= 1e-8);

    // y = t with the zero field: u = 1.
    Problem zero = logi;
    zero.field = [](const Vec& x, double) { return Vec::Zero(x.size()); };
    Mesh m4 = Mesh::uniform(4);
    std::vector<Vec> ramp, ones;
    for (double t : m4.nodes()) {
        ramp.push_back(v1(t));
        ones.push_back(v1(1.0));
    }
    auto line = PwlModel::hermite(m4, ramp, ones);
    auto ul = make_control(line, zero);
    for (double t : {0.0, 0.1, 0.5, 0.99, 1.0}) CHECK(std::abs(ul(t)(0) - 1.0) <= 1e-14);
    CHECK(std::abs(control_energy(line, zero) - 1.0) <= 1e-14);

    // ∫u² is the additive error and u(t) the piece residual.
    std::mt19937_64 rng(99);
    for (int k = 0; k < 5; ++k) {
        auto rh = oracle::random_hermite(rng, 1, 6);
        auto model = rh.model();
        ErrorSettings s;
        const double e = total_error(model, logi.field, ErrorAccumulator::additive(), s);
        CHECK(std::abs(control_energy(model, logi) - e) <= 1e-10 * std::max(1.0, e));
        auto uc = make_control(model, logi);
        std::uniform_real_distribution<double> ut(0.0, 1.0);
        for (int j = 0; j < 20; ++j) {
            const double t = ut(rng);
            const int i = model.mesh().interval_of(t);
            CHECK((uc(t) - residual(model.piece(i), logi.field, t)).norm() <= 1e-12);
        }
    }
}
