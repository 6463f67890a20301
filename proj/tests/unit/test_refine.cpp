#include "doctest.h"

#include "pwlbvp/error_functionals.hpp"
#include "pwlbvp/errors.hpp"
#include "pwlbvp/linear_flow.hpp"
#include "pwlbvp/refine.hpp"

#include <cmath>
#include <random>

using namespace pwlbvp;

namespace {

Vec v1(double x) { return Vec::Constant(1, x); }
Mat m1(double x) { return Mat::Constant(1, 1, x); }

RefineState linear_state(const Mat& a, const Vec& b, int intervals = 8) {
    return make_refine_state(Mesh::uniform(intervals), MatrixField::fixed(a), [b](double) { return b; });
}

PwlModel constant_model(const Vec& value, int intervals = 8) {
    Mesh mesh = Mesh::uniform(intervals);
    std::vector<Vec> vals(static_cast<std::size_t>(intervals) + 1, value);
    std::vector<Vec> slopes(vals.size(), Vec::Zero(value.size()));
    return PwlModel::hermite(mesh, vals, slopes);
}

Problem scalar_problem(FieldFn f, BoundaryCondition bc, double lo, double hi) {
    Problem p;
    p.dim = 1;
    p.field = std::move(f);
    p.boundary = std::move(bc);
    p.state_box = {v1(lo), v1(hi)};
    return p;
}

const FieldFn zero_field = [](const Vec& x, double) { return Vec::Zero(x.size()); };
const FieldFn neg_square = [](const Vec& x, double) { return Vec(-x.array().square()); };

}  // namespace

TEST_CASE("jacobian_at examples") {
    Problem sq = scalar_problem([](const Vec& x, double) { return Vec(x.array().square()); },
                                BoundaryCondition::separable(free_boundary(), free_boundary()), -5, 5);
    CHECK(jacobian_at(sq, v1(3), 0.0)(0, 0) == doctest::Approx(6.0).epsilon(1e-7));

    Mat lin(2, 2);
    lin << 1, -2, 0.5, 3;
    Problem lp;
    lp.dim = 2;
    lp.field = [lin](const Vec& x, double) -> Vec { return lin * x; };
    Vec x(2);
    x << 10, -7;
    CHECK((jacobian_at(lp, x, 0.3) - lin).cwiseAbs().maxCoeff() <= 1e-6);

    Problem nl;
    nl.dim = 2;
    nl.field = [](const Vec& z, double) {
        Vec r(2);
        r << z(0) * z(1), std::sin(z(0));
        return r;
    };
    x << 0.3, 0.7;
    Mat exact(2, 2);
    exact << 0.7, 0.3, std::cos(0.3), 0.0;
    CHECK((jacobian_at(nl, x, 0.0) - exact).cwiseAbs().maxCoeff() <= 1e-6);

    nl.jacobian = [](const Vec&, double) { return Mat::Constant(2, 2, 42.0); };
    CHECK(jacobian_at(nl, x, 0.0)(1, 1) == 42.0);

    Problem bad = scalar_problem([](const Vec& z, double) { return Vec(z.array().log()); },
                                 BoundaryCondition::separable(free_boundary(), free_boundary()), -1, 1);
    CHECK_THROWS_AS(jacobian_at(bad, v1(-1.0), 0.0), DomainError);
}

TEST_CASE("correction_zero_iv examples") {
    auto none = linear_state(m1(-1), v1(0));
    auto y0 = correction_zero_iv(none);
    for (double t : {0.0, 0.4, 1.0}) CHECK(y0(t).norm() == 0.0);

    auto ramp = linear_state(m1(0), v1(1));
    auto y1 = correction_zero_iv(ramp);
    CHECK(y1(0.0)(0) == 0.0);
    for (double t : {0.3, 0.55, 1.0}) CHECK(y1(t)(0) == doctest::Approx(t).epsilon(1e-13));
    for (int i = 0; i <= 8; ++i) CHECK(y1.nodes[static_cast<std::size_t>(i)](0) == doctest::Approx(i / 8.0).epsilon(1e-13));

    Problem p = scalar_problem(neg_square, BoundaryCondition::separable(free_boundary(), free_boundary()), 0, 2);
    auto state = make_refine_state(constant_model(v1(1)), p);
    CHECK(state.a_field(0.3)(0, 0) == doctest::Approx(-2.0).epsilon(1e-7));
    CHECK(state.b_field(0.3)(0) == doctest::Approx(-1.0));
    auto y = correction_zero_iv(state);
    CHECK(y(1.0)(0) == doctest::Approx((std::exp(-2.0) - 1.0) / 2.0).epsilon(1e-7));
}

TEST_CASE("correction_pointwise_newton examples") {
    auto none = linear_state(m1(3), v1(0));
    CHECK(correction_pointwise_newton(none)(0.2).norm() == 0.0);
    auto s = linear_state(m1(2), v1(4));
    CHECK(correction_pointwise_newton(s)(0.7)(0) == doctest::Approx(-2.0));
    Mat rot(2, 2);
    rot << 0, 1, -1, 0;
    auto r = correction_pointwise_newton(linear_state(rot, Vec::Ones(2)));
    CHECK(r(0.5)(0) == doctest::Approx(1.0));
    CHECK(r(0.5)(1) == doctest::Approx(-1.0));

    auto singular = make_refine_state(Mesh::uniform(4), MatrixField::varying([](double t) { return m1(t - 0.5); }),
                                      [](double) { return v1(1); });
    try {
        correction_pointwise_newton(singular);
        FAIL("expected PointwiseUnavailable");
    } catch (const PointwiseUnavailable& e) {
        CHECK(e.time() == 0.5);
    }
}

TEST_CASE("apply_correction examples") {
    Problem p = scalar_problem(neg_square, BoundaryCondition::separable(free_boundary(), free_boundary()), 0, 2);
    auto x = constant_model(v1(1));
    auto zero = CorrectionCurve::from_function(x.mesh(), [](double) { return v1(0); });
    auto once = apply_correction(x, zero, p);
    for (int i = 0; i <= 8; ++i) {
        CHECK(once.theta(i)(0) == 1.0);
        CHECK(node_slope(once, i)(0) == doctest::Approx(-1.0));
    }
    auto twice = apply_correction(once, zero, p);
    for (int i = 0; i <= 8; ++i) CHECK(node_slope(twice, i)(0) == node_slope(once, i)(0));

    auto origin = constant_model(v1(0));
    auto ramp = CorrectionCurve::from_function(origin.mesh(), [](double t) { return v1(t); });
    auto moved = apply_correction(origin, ramp, p);
    for (int i = 0; i <= 8; ++i) CHECK(moved.theta(i)(0) == origin.mesh().node(i));

    // one correction step on x' = -x² from x ≡ 1
    auto state = make_refine_state(x, p);
    double before = residual_l2(state);
    auto next = apply_correction(x, correction_zero_iv(state), p);
    double after = residual_l2(make_refine_state(next, p));
    CHECK(after < before);
}

TEST_CASE("eta_objective examples") {
    auto none = linear_state(m1(0), v1(0));
    CHECK(eta_objective(none, v1(2.5)) == 0.0);
    auto one = linear_state(m1(0), v1(1));
    for (double e : {-1.0, 0.0, 3.0}) CHECK(eta_objective(one, v1(e)) == doctest::Approx(1.0).epsilon(1e-14));
    auto growth = linear_state(m1(1), v1(0));
    CHECK(eta_objective(growth, v1(1)) == doctest::Approx((std::exp(2.0) - 1.0) / 2.0).epsilon(1e-9));
}

TEST_CASE("optimal_eta examples") {
    RefineConfig cfg;
    for (auto strategy : {EtaStrategy::GradientDescent, EtaStrategy::NewtonHessian, EtaStrategy::ClosedFormQuadratic}) {
        CHECK(optimal_eta(linear_state(m1(1.5), v1(0)), strategy, cfg).eta.norm() <= 1e-14);
        CHECK(optimal_eta(linear_state(m1(0), v1(1)), strategy, cfg).eta.norm() <= 1e-10);
    }
    auto singular = optimal_eta(linear_state(m1(0), v1(1)), EtaStrategy::NewtonHessian, cfg);
    CHECK(singular.fell_back);
    CHECK_FALSE(singular.warning.empty());

    auto s = linear_state(m1(1), v1(1));
    auto newton = optimal_eta(s, EtaStrategy::NewtonHessian, cfg);
    auto closed = optimal_eta(s, EtaStrategy::ClosedFormQuadratic, cfg);
    CHECK(std::abs(newton.eta(0) - closed.eta(0)) <= 1e-8);
    // y' = e^t (η + 1): minimized at η = -1
    CHECK(closed.eta(0) == doctest::Approx(-1.0).epsilon(1e-10));
    const auto& q = eta_quadratic(s);
    CHECK(q.gradient(closed.eta).norm() <= 1e-8);
    CHECK(q.gradient(newton.eta).norm() <= 1e-8);

    auto gd = optimal_eta(s, EtaStrategy::GradientDescent, cfg);
    CHECK(eta_objective(s, gd.eta) < eta_objective(s, v1(0)));
}

TEST_CASE("eta objective gradient and quadraticity on random linear instances") {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 1 + trial % 3;
        Mat a0(n, n), a1(n, n);
        Vec b0(n), b1(n);
        for (int i = 0; i < n * n; ++i) {
            a0.data()[i] = g(rng);
            a1.data()[i] = g(rng);
        }
        for (int i = 0; i < n; ++i) {
            b0(i) = g(rng);
            b1(i) = g(rng);
        }
        auto state = make_refine_state(Mesh::uniform(6), MatrixField::varying([=](double t) -> Mat { return a0 + t * a1; }),
                                       [=](double t) -> Vec { return b0 + std::cos(3 * t) * b1; });
        const auto& q = eta_quadratic(state);
        std::function<double(const Vec&)> obj = [&](const Vec& e) { return eta_objective(state, e); };
        Vec g0 = fd_gradient(obj, Vec::Zero(n), 1e-3);
        Vec exact = q.gradient(Vec::Zero(n));
        CHECK((g0 - exact).norm() <= 1e-6 * std::max(1.0, exact.norm()));

        Mat h = q.hessian();
        double f0 = obj(Vec::Zero(n));
        for (int k = 0; k < 5; ++k) {
            Vec eta = Vec::Random(n);
            eta /= std::max(1.0, eta.norm());
            double defect = obj(eta) - f0 - exact.dot(eta) - 0.5 * eta.dot(h * eta);
            CHECK(std::abs(defect) <= 1e-8 * std::max(1.0, f0));
        }
        RefineConfig cfg;
        for (auto strategy : {EtaStrategy::NewtonHessian, EtaStrategy::ClosedFormQuadratic}) {
            auto r = optimal_eta(state, strategy, cfg);
            CHECK(q.gradient(r.eta).norm() <= 1e-8 * std::max(1.0, q.hessian().norm()));
        }
    }
}

TEST_CASE("boundary_eta_step examples") {
    RefineConfig cfg;
    // β already zero
    {
        auto bc = BoundaryCondition::general([](const Vec& a, const Vec&) { return a(0) - 1; });
        auto p = scalar_problem(zero_field, bc, -1, 2);
        auto state = make_refine_state(constant_model(v1(1)), p);
        auto r = boundary_eta_step(state, p, cfg);
        CHECK(r.eta.norm() == 0.0);
    }
    // x' = 0, β = a - 1, θ_0 = 0: minimizer h = 1
    {
        auto bc = BoundaryCondition::general([](const Vec& a, const Vec&) { return a(0) - 1; });
        auto p = scalar_problem(zero_field, bc, -1, 2);
        auto state = make_refine_state(constant_model(v1(0)), p);
        auto r = boundary_eta_step(state, p, cfg);
        CHECK(r.eta(0) == doctest::Approx(1.0).epsilon(1e-5));
        CHECK(r.step == doctest::Approx(1.0).epsilon(1e-5));
        CHECK(std::abs(boundary_residual(state, p, r.eta)(0)) <= 1e-5);
    }
    // x' = x, β = c - 1 from x ≡ 0 (b ≡ 0, Φ(1,0) = e)
    {
        auto bc = BoundaryCondition::general([](const Vec&, const Vec& c) { return c(0) - 1; });
        auto p = scalar_problem([](const Vec& x, double) { return x; }, bc, -1, 2);
        auto state = make_refine_state(constant_model(v1(0)), p);
        auto r = boundary_eta_step(state, p, cfg);
        CHECK(r.eta(0) > 0.0);
        double b0 = boundary_residual(state, p, v1(0)).squaredNorm();
        double b1 = boundary_residual(state, p, r.eta).squaredNorm();
        CHECK(b1 < b0);
        CHECK(r.eta(0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-4));
    }
}

TEST_CASE("boundary_eta_newton examples") {
    RefineConfig cfg;
    {
        auto bc = BoundaryCondition::general([](const Vec& a, const Vec&) { return a(0) - 1; });
        auto p = scalar_problem(zero_field, bc, -1, 2);
        auto r = boundary_eta_newton(make_refine_state(constant_model(v1(1)), p), p, cfg);
        CHECK(r.eta.norm() == 0.0);
    }
    {
        // linear β and linear flow: one Newton step lands on the line-search minimizer
        auto bc = BoundaryCondition::general([](const Vec& a, const Vec& c) { return a(0) + 2 * c(0) - 1; });
        auto p = scalar_problem([](const Vec& x, double) { return Vec(-x); }, bc, -1, 2);
        auto state = make_refine_state(constant_model(v1(0)), p);
        auto n = boundary_eta_newton(state, p, cfg);
        auto s = boundary_eta_step(state, p, cfg);
        CHECK(n.beta_history.size() >= 1);
        CHECK(n.beta_history.front() <= 1e-8);
        CHECK(std::abs(n.eta(0) - s.eta(0)) <= 1e-5);
    }
    {
        auto bc = BoundaryCondition::general([](const Vec& a, const Vec&) { return a(0) * a(0) - 1; });
        auto p = scalar_problem(zero_field, bc, -3, 3);
        auto r = boundary_eta_newton(make_refine_state(constant_model(v1(2)), p), p, cfg);
        CHECK(std::abs(r.eta(0) + 1.0) <= 1e-8);
        REQUIRE(r.beta_history.size() >= 6);
        CHECK(r.beta_history[5] <= 1e-8);
    }
}

TEST_CASE("refine_loop keeps an exact solution") {
    auto bc = BoundaryCondition::separable([](const Vec& a) { return a(0) - 1; }, free_boundary());
    auto p = scalar_problem([](const Vec& x, double) { return x; }, bc, 0, 3);
    p.jacobian = [](const Vec&, double) { return m1(1); };
    Mesh mesh = Mesh::uniform(8);
    std::vector<Piece> pieces;
    for (int i = 0; i < 8; ++i)
        pieces.push_back(Piece::constant(mesh.node(i), mesh.node(i + 1), m1(1), v1(0), v1(std::exp(mesh.node(i)))));
    PwlModel exact(mesh, pieces, v1(std::exp(1.0)));
    auto r = refine_loop(exact, p);
    CHECK(r.log.converged);
    CHECK(r.log.entries.size() == 1);
    for (double t : {0.0, 0.13, 0.5, 0.81, 1.0})
        CHECK(std::abs(eval_model(r.model, t)(0) - std::exp(t)) <= 1e-10);
}

TEST_CASE("refine_loop on x' = -x^2 from x = 1") {
    auto bc = BoundaryCondition::general([](const Vec& a, const Vec&) { return a(0) - 1; });
    auto p = scalar_problem(neg_square, bc, 0, 1.5);
    p.jacobian = [](const Vec& x, double) { return m1(-2 * x(0)); };
    RefineConfig cfg;
    cfg.min_intervals = 512;
    auto r = refine_loop(constant_model(v1(1)), p, cfg);
    CHECK(r.log.converged);
    const auto& e = r.log.entries;
    for (std::size_t j = 1; j < e.size(); ++j) CHECK(e[j].residual_l2 < e[j - 1].residual_l2);
    CHECK(e.back().residual_l2 <= 1e-8);
    CHECK(std::abs(eval_model(r.model, 1.0)(0) - 0.5) <= 1e-6);
    for (double t : {0.25, 0.5, 0.75}) CHECK(std::abs(eval_model(r.model, t)(0) - 1.0 / (1.0 + t)) <= 1e-6);
}

TEST_CASE("refine_loop with the step update and the objective source") {
    auto bc = BoundaryCondition::general([](const Vec& a, const Vec&) { return a(0) - 1; });
    auto p = scalar_problem(neg_square, bc, 0, 1.5);
    RefineConfig cfg;
    cfg.boundary_update = BoundaryUpdate::Step;
    auto r = refine_loop(constant_model(v1(1)), p, cfg);
    CHECK(r.log.entries.back().residual_l2 <= 1e-7);

    RefineConfig obj;
    obj.eta_source = EtaSource::Objective;
    obj.max_iterations = 6;
    auto q = refine_loop(constant_model(v1(1)), p, obj);
    CHECK(q.log.entries.back().residual_l2 < q.log.entries.front().residual_l2);
}

TEST_CASE("refine_loop divergence guard returns the best iterate") {
    // x' = x² with x(0) = 2 blows up at t = 0.5
    auto bc = BoundaryCondition::general([](const Vec& a, const Vec&) { return a(0) - 2; });
    auto p = scalar_problem([](const Vec& x, double) { return Vec(x.array().square()); }, bc, 0, 4);
    RefineConfig cfg;
    cfg.min_intervals = 64;
    auto r = refine_loop(constant_model(v1(2)), p, cfg);
    CHECK(r.log.diverged);
    CHECK_FALSE(r.log.converged);
    const auto& best = r.log.entries[static_cast<std::size_t>(r.log.returned_iteration)];
    for (const auto& e : r.log.entries)
        if (std::isfinite(e.residual_l2)) CHECK(best.residual_l2 + best.beta <= e.residual_l2 + e.beta);
}

TEST_CASE("pointwise correction stalls once node slopes are collocated") {
    auto bc = BoundaryCondition::general([](const Vec& a, const Vec&) { return a(0) - 1; });
    auto p = scalar_problem(neg_square, bc, 0, 1.5);
    RefineConfig cfg;
    cfg.correction = CorrectionMode::Pointwise;
    cfg.max_iterations = 4;
    cfg.min_intervals = 16;
    auto r = refine_loop(constant_model(v1(1)), p, cfg);
    const auto& e = r.log.entries;
    REQUIRE(e.size() == 5);
    CHECK_FALSE(r.log.converged);
    for (std::size_t j = 2; j < e.size(); ++j) CHECK(e[j].residual_l2 == e[1].residual_l2);
}
