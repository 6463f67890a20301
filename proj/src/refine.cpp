#include "pwlbvp/refine.hpp"

#include "pwlbvp/errors.hpp"

#include <Eigen/LU>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>

namespace pwlbvp {

namespace {

const double kRootEps = std::sqrt(std::numeric_limits<double>::epsilon());

/// Step used for finite differences of the η objective; exact for quadratics
/// up to roundoff, so it can be large.
constexpr double kQuadraticStep = 1e-3;

/// Minimizer of fn on [0, hi] by golden-section search to tolerance tol.
double golden_section(const std::function<double(double)>& fn, double hi, double tol) {
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = 0.0;
    double b = hi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = fn(c);
    double fd = fn(d);
    while (b - a > tol) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = fn(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = fn(d);
        }
    }
    const double mid = 0.5 * (a + b);
    return fn(hi) < fn(mid) ? hi : mid;
}

Vec fd_partial(const std::function<double(const Vec&)>& fn, const Vec& x) {
    Vec g(x.size());
    Vec xp = x;
    Vec xm = x;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = kRootEps * (1.0 + std::abs(x(j)));
        xp(j) = x(j) + h;
        xm(j) = x(j) - h;
        g(j) = (fn(xp) - fn(xm)) / (2.0 * h);
        xp(j) = x(j);
        xm(j) = x(j);
    }
    return g;
}

const PwlModel& require_model(const RefineState& state) {
    if (!state.model) throw DomainError("refine state has no model for boundary updates");
    return *state.model;
}

/// Boundary residual B(η) and its Jacobian with respect to η.
struct BoundaryMap {
    const BoundaryCondition* bc;
    Vec theta0;
    Vec thetaN;
    Mat phi_end;
    Vec p_end;

    Vec start(const Vec& eta) const { return theta0 + eta; }
    Vec end(const Vec& eta) const { return thetaN + phi_end * eta + p_end; }

    Vec residual(const Vec& eta) const { return bc->residuals(start(eta), end(eta)); }

    Mat jacobian(const Vec& eta) const {
        const Vec a = start(eta);
        const Vec c = end(eta);
        if (bc->is_separable()) {
            Mat j(2, eta.size());
            j.row(0) = fd_partial([&](const Vec& x) { return bc->beta0(x); }, a).transpose();
            j.row(1) = (phi_end.transpose() * fd_partial([&](const Vec& x) { return bc->beta1(x); }, c)).transpose();
            return j;
        }
        const Vec da = fd_partial([&](const Vec& x) { return bc->evaluate(x, c); }, a);
        const Vec dc = fd_partial([&](const Vec& x) { return bc->evaluate(a, x); }, c);
        Mat j(1, eta.size());
        j.row(0) = (da + phi_end.transpose() * dc).transpose();
        return j;
    }

    /// ∇ ½‖B‖² = Jᵀ B.
    Vec gradient(const Vec& eta) const { return jacobian(eta).transpose() * residual(eta); }
};

BoundaryMap boundary_map(const RefineState& state, const Problem& problem, const FlowOptions& opts) {
    const auto& model = require_model(state);
    const auto& flow = node_flow(state, opts);
    return {&problem.boundary, model.theta(0), model.theta_end(), flow.end_transition(), flow.end_particular()};
}

/// Largest h in [0, bound] keeping every node value θ_i + y(t_i; η0 + h d) in `box`.
double box_cap(const RefineState& state, const MeshFlow& flow, const Vec& eta0, const Vec& d, const Box& box,
               double bound) {
    const auto& model = require_model(state);
    double cap = bound;
    for (int i = 0; i <= model.intervals(); ++i) {
        const Vec u = model.theta(i) + flow.at_node(i, eta0);
        const Vec w = flow.transition[static_cast<std::size_t>(i)] * d;
        for (Eigen::Index c = 0; c < u.size(); ++c) {
            if (u(c) < box.lower(c) || u(c) > box.upper(c)) return 0.0;
            if (w(c) > 0.0) cap = std::min(cap, (box.upper(c) - u(c)) / w(c));
            if (w(c) < 0.0) cap = std::min(cap, (box.lower(c) - u(c)) / w(c));
        }
    }
    return std::max(cap, 0.0);
}

EtaResult line_search_from(const RefineState& state, const Problem& problem, const RefineConfig& cfg,
                           const Vec& eta0) {
    const auto map = boundary_map(state, problem, cfg.flow);
    const auto& flow = node_flow(state, cfg.flow);
    EtaResult out;
    out.eta = eta0;
    out.iterations = 1;
    const double f0 = map.residual(eta0).squaredNorm();
    out.beta_history.push_back(std::sqrt(f0));
    if (f0 == 0.0) return out;
    const Vec d = -map.gradient(eta0);
    if (d.norm() == 0.0) {
        out.stalled = true;
        return out;
    }
    const double cap = box_cap(state, flow, eta0, d, problem.state_box.inflated(1.0), cfg.search_bound);
    if (cap <= 0.0) {
        out.stalled = true;
        return out;
    }
    auto along = [&](double h) { return map.residual(eta0 + h * d).squaredNorm(); };
    const double h = golden_section(along, cap, cfg.search_tol * cfg.search_bound);
    const double fh = along(h);
    if (!(fh < f0)) {
        out.stalled = true;
        return out;
    }
    out.eta = eta0 + h * d;
    out.step = h;
    out.beta_history.back() = std::sqrt(fh);
    return out;
}

}  // namespace

double EtaQuadratic::value(const Vec& eta) const {
    double sum = 0.0;
    for (std::size_t q = 0; q < m.size(); ++q) sum += (m[q] * eta + r[q]).squaredNorm();
    return sum;
}

Vec EtaQuadratic::gradient(const Vec& eta) const {
    Vec g = Vec::Zero(eta.size());
    for (std::size_t q = 0; q < m.size(); ++q) g += 2.0 * m[q].transpose() * (m[q] * eta + r[q]);
    return g;
}

Mat EtaQuadratic::hessian() const {
    const auto n = m.empty() ? 0 : m.front().cols();
    Mat h = Mat::Zero(n, n);
    for (const auto& mq : m) h += 2.0 * mq.transpose() * mq;
    return h;
}

RefineState make_refine_state(const PwlModel& model, const Problem& problem) {
    auto shared = std::make_shared<const PwlModel>(model);
    RefineState s;
    s.mesh = model.mesh();
    s.model = shared;
    s.problem = &problem;
    s.a_field = MatrixField::varying(
        [shared, &problem](double t) { return jacobian_at(problem, eval_model(*shared, t), t); });
    s.b_field = [shared, &problem](double t) {
        return Vec(problem.f(eval_model(*shared, t), t) - model_derivative(*shared, t));
    };
    return s;
}

RefineState make_refine_state(const Mesh& mesh, MatrixField a, VectorFn b) {
    RefineState s{mesh, nullptr, nullptr, std::move(a), std::move(b), 0, nullptr, nullptr};
    return s;
}

const MeshFlow& node_flow(const RefineState& state, const FlowOptions& opts) {
    if (!state.flow_cache)
        state.flow_cache = std::make_shared<MeshFlow>(flow_on_mesh(state.a_field, state.b_field, state.mesh, opts));
    return *state.flow_cache;
}

CorrectionCurve CorrectionCurve::from_function(const Mesh& mesh, VectorFn fn) {
    CorrectionCurve c{mesh, {}, std::move(fn)};
    for (double t : mesh.nodes()) c.nodes.push_back(c.eval(t));
    return c;
}

CorrectionCurve correction_with_eta(const RefineState& state, const Vec& eta, const FlowOptions& opts) {
    const auto& flow = node_flow(state, opts);
    CorrectionCurve c;
    c.mesh = state.mesh;
    for (int i = 0; i <= state.mesh.intervals(); ++i) c.nodes.push_back(flow.at_node(i, eta));
    auto nodes = c.nodes;
    auto mesh = state.mesh;
    auto a = state.a_field;
    auto b = state.b_field;
    c.eval = [nodes, mesh, a, b, opts](double t) {
        const int i = mesh.interval_of(t);
        const double lo = mesh.node(i);
        return Vec(fundamental_matrix(a, lo, t, opts.substeps).phi * nodes[static_cast<std::size_t>(i)] +
                   convolution(a, b, lo, t, opts));
    };
    return c;
}

CorrectionCurve correction_zero_iv(const RefineState& state, int substeps) {
    FlowOptions opts;
    opts.substeps = substeps;
    const auto n = state.b_field(0.0).size();
    if (state.flow_cache) {
        RefineState fresh = state;
        fresh.flow_cache.reset();
        return correction_with_eta(fresh, Vec::Zero(n), opts);
    }
    return correction_with_eta(state, Vec::Zero(n), opts);
}

CorrectionCurve correction_pointwise_newton(const RefineState& state, double condition_bound) {
    auto a = state.a_field;
    auto b = state.b_field;
    auto solve = [a, b, condition_bound](double t) -> Vec {
        const Mat at = a(t);
        Eigen::JacobiSVD<Mat> svd(at);
        const auto& sv = svd.singularValues();
        const double smin = sv(sv.size() - 1);
        if (!(smin > 0.0) || sv(0) / smin > condition_bound)
            throw PointwiseUnavailable(t, "pointwise correction unavailable: A(t) is near singular at t = " +
                                              std::to_string(t));
        return at.fullPivLu().solve(-b(t));
    };
    return CorrectionCurve::from_function(state.mesh, solve);
}

PwlModel apply_correction(const PwlModel& x, const CorrectionCurve& y, const Problem& problem) {
    const int nodes = x.intervals() + 1;
    if (static_cast<int>(y.nodes.size()) != nodes) throw DomainError("correction does not match the model mesh");
    std::vector<Vec> values;
    std::vector<Vec> slopes;
    values.reserve(static_cast<std::size_t>(nodes));
    slopes.reserve(static_cast<std::size_t>(nodes));
    for (int i = 0; i < nodes; ++i) {
        values.push_back(x.theta(i) + y.nodes[static_cast<std::size_t>(i)]);
        slopes.push_back(problem.f(values.back(), x.mesh().node(i)));
    }
    return PwlModel::hermite(x.mesh(), values, slopes);
}

PwlModel resample(const PwlModel& model, const Mesh& mesh) {
    std::vector<Vec> values;
    std::vector<Vec> slopes;
    for (int i = 0; i <= mesh.intervals(); ++i) {
        const double t = mesh.node(i);
        values.push_back(eval_model(model, t));
        slopes.push_back(model_derivative(model, t));
    }
    return PwlModel::hermite(mesh, values, slopes);
}

const EtaQuadratic& eta_quadratic(const RefineState& state, const FlowOptions& opts, const QuadratureRule& quad) {
    if (state.quadratic_cache) return *state.quadratic_cache;
    const auto& flow = node_flow(state, opts);
    auto out = std::make_shared<EtaQuadratic>();
    for (int i = 0; i < state.mesh.intervals(); ++i) {
        const double lo = state.mesh.node(i);
        const auto k = static_cast<std::size_t>(i);
        quad.for_each_node(lo, state.mesh.node(i + 1), [&](double tau, double w) {
            const Mat step = fundamental_matrix(state.a_field, lo, tau, opts.substeps).phi;
            const Mat phi = step * flow.transition[k];
            const Vec p = step * flow.particular[k] + convolution(state.a_field, state.b_field, lo, tau, opts);
            const Mat a = state.a_field(tau);
            const double sw = std::sqrt(w);
            out->m.push_back(sw * a * phi);
            out->r.push_back(sw * (a * p + state.b_field(tau)));
        });
    }
    state.quadratic_cache = std::move(out);
    return *state.quadratic_cache;
}

double eta_objective(const RefineState& state, const Vec& eta, const FlowOptions& opts, const QuadratureRule& quad) {
    return eta_quadratic(state, opts, quad).value(eta);
}

Vec fd_gradient(const std::function<double(const Vec&)>& fn, const Vec& x, double step) {
    Vec g(x.size());
    Vec xp = x;
    Vec xm = x;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        xp(j) = x(j) + step;
        xm(j) = x(j) - step;
        g(j) = (fn(xp) - fn(xm)) / (2.0 * step);
        xp(j) = x(j);
        xm(j) = x(j);
    }
    return g;
}

Mat fd_hessian(const std::function<double(const Vec&)>& fn, const Vec& x, double step) {
    const auto n = x.size();
    Mat h(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            Vec pp = x, pm = x, mp = x, mm = x;
            pp(i) += step;
            pp(j) += step;
            pm(i) += step;
            pm(j) -= step;
            mp(i) -= step;
            mp(j) += step;
            mm(i) -= step;
            mm(j) -= step;
            h(i, j) = (fn(pp) - fn(pm) - fn(mp) + fn(mm)) / (4.0 * step * step);
        }
    }
    return 0.5 * (h + h.transpose());
}

EtaResult optimal_eta(const RefineState& state, EtaStrategy strategy, const RefineConfig& cfg) {
    const auto& quadratic = eta_quadratic(state, cfg.flow, cfg.quad);
    const auto n = state.b_field(0.0).size();
    const std::function<double(const Vec&)> objective = [&](const Vec& eta) { return quadratic.value(eta); };
    EtaResult out;
    out.eta = Vec::Zero(n);

    auto gradient_descent = [&]() {
        const Vec g = fd_gradient(objective, Vec::Zero(n), kQuadraticStep);
        out.iterations = 1;
        if (g.norm() == 0.0) return;
        auto along = [&](double h) { return objective(-h * g); };
        const double h = golden_section(along, cfg.search_bound, cfg.search_tol * cfg.search_bound);
        if (along(h) < objective(Vec::Zero(n))) {
            out.eta = -h * g;
            out.step = h;
        } else {
            out.stalled = true;
        }
    };

    switch (strategy) {
    case EtaStrategy::GradientDescent:
        gradient_descent();
        break;
    case EtaStrategy::NewtonHessian: {
        Vec eta = Vec::Zero(n);
        for (int j = 0; j < cfg.newton_max_iterations; ++j) {
            const Vec g = fd_gradient(objective, eta, kQuadraticStep);
            const Mat h = fd_hessian(objective, eta, kQuadraticStep);
            Eigen::FullPivLU<Mat> lu(h);
            lu.setThreshold(1e-12);
            if (!lu.isInvertible()) {
                out.fell_back = true;
                out.warning = "singular Hessian of the eta objective; using gradient descent";
                gradient_descent();
                return out;
            }
            const Vec step = -lu.solve(g);
            eta += step;
            out.iterations = j + 1;
            if (step.norm() <= cfg.newton_step_tol * (1.0 + eta.norm())) break;
        }
        out.eta = eta;
        out.step = 1.0;
        break;
    }
    case EtaStrategy::ClosedFormQuadratic: {
        Mat big(static_cast<Eigen::Index>(quadratic.m.size()) * n, n);
        Vec rhs(big.rows());
        for (std::size_t q = 0; q < quadratic.m.size(); ++q) {
            big.middleRows(static_cast<Eigen::Index>(q) * n, n) = quadratic.m[q];
            rhs.segment(static_cast<Eigen::Index>(q) * n, n) = -quadratic.r[q];
        }
        out.eta = big.completeOrthogonalDecomposition().solve(rhs);
        out.iterations = 1;
        out.step = 1.0;
        break;
    }
    }
    return out;
}

Vec boundary_residual(const RefineState& state, const Problem& problem, const Vec& eta, const FlowOptions& opts) {
    return boundary_map(state, problem, opts).residual(eta);
}

EtaResult boundary_eta_step(const RefineState& state, const Problem& problem, const RefineConfig& cfg) {
    return line_search_from(state, problem, cfg, Vec::Zero(require_model(state).dim()));
}

EtaResult boundary_eta_newton(const RefineState& state, const Problem& problem, const RefineConfig& cfg) {
    const auto map = boundary_map(state, problem, cfg.flow);
    const auto n = require_model(state).dim();
    EtaResult out;
    Vec eta = Vec::Zero(n);
    out.eta = eta;
    out.step = 1.0;
    if (map.residual(eta).norm() == 0.0) {
        out.beta_history.push_back(0.0);
        return out;
    }
    for (int j = 0; j < cfg.newton_max_iterations; ++j) {
        const Vec g = map.gradient(eta);
        if (g.norm() == 0.0) break;
        // Hessian of ½‖B‖²: JᵀJ plus Σ B_i ∇²B_i with ∇²B_i from second differences of B.
        const Mat jac = map.jacobian(eta);
        const Vec b0 = map.residual(eta);
        Mat h = jac.transpose() * jac;
        for (Eigen::Index r = 0; r < n; ++r) {
            for (Eigen::Index c = r; c < n; ++c) {
                const double dr = 1e-4 * (1.0 + std::abs(eta(r)));
                const double dc = 1e-4 * (1.0 + std::abs(eta(c)));
                auto at = [&](double sr, double sc) {
                    Vec e = eta;
                    e(r) += sr * dr;
                    e(c) += sc * dc;
                    return map.residual(e);
                };
                const Vec second = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * dr * dc);
                h(r, c) += b0.dot(second);
                if (c != r) h(c, r) += b0.dot(second);
            }
        }
        h = 0.5 * (h + h.transpose());
        Eigen::FullPivLU<Mat> lu(h);
        lu.setThreshold(1e-10);
        if (!h.allFinite() || !lu.isInvertible()) {
            EtaResult fb = line_search_from(state, problem, cfg, eta);
            fb.fell_back = true;
            fb.warning = "singular boundary Hessian; using the line-search step";
            fb.iterations += out.iterations;
            out.beta_history.insert(out.beta_history.end(), fb.beta_history.begin(), fb.beta_history.end());
            fb.beta_history = out.beta_history;
            return fb;
        }
        const Vec step = -lu.solve(g);
        eta += step;
        out.iterations = j + 1;
        const double beta = map.residual(eta).norm();
        out.beta_history.push_back(beta);
        if (step.norm() <= cfg.newton_step_tol * (1.0 + eta.norm()) || beta == 0.0) break;
    }
    out.eta = eta;
    return out;
}

double residual_l2(const RefineState& state, const QuadratureRule& quad) {
    double sum = 0.0;
    for (int i = 0; i < state.mesh.intervals(); ++i)
        sum += quad.integrate(state.mesh.node(i), state.mesh.node(i + 1),
                              [&](double t) { return state.b_field(t).squaredNorm(); });
    return std::sqrt(sum);
}

double residual_sup(const RefineState& state, int samples) {
    double sup = 0.0;
    for (int i = 0; i < state.mesh.intervals(); ++i)
        for (double t : chebyshev_lobatto(state.mesh.node(i), state.mesh.node(i + 1), samples))
            sup = std::max(sup, state.b_field(t).norm());
    return sup;
}

RefineResult refine_loop(const PwlModel& initial, const Problem& problem, const RefineConfig& cfg) {
    if (cfg.residual_tol <= 0.0 || cfg.boundary_tol <= 0.0) throw DomainError("refine tolerances must be positive");
    const int n_int = initial.intervals();
    const int parts = std::max(1, (cfg.min_intervals + n_int - 1) / n_int);
    PwlModel x = parts > 1 ? resample(initial, initial.mesh().subdivided(parts)) : initial;

    ConvergenceLog log;
    std::optional<PwlModel> best;
    double best_score = std::numeric_limits<double>::infinity();
    double previous = std::numeric_limits<double>::infinity();
    int growth = 0;

    for (int j = 0;; ++j) {
        RefineState state = make_refine_state(x, problem);
        state.iteration = j;
        ConvergenceEntry entry;
        entry.iteration = j;
        entry.residual_l2 = residual_l2(state, cfg.quad);
        entry.residual_sup = residual_sup(state, cfg.sup_samples);
        entry.beta = problem.boundary.residuals(x.theta(0), x.theta_end()).norm();

        const bool finite = std::isfinite(entry.residual_l2) && std::isfinite(entry.beta);
        const double score = entry.residual_l2 + entry.beta;
        if (finite && score < best_score) {
            best_score = score;
            best = x;
            log.returned_iteration = j;
        }
        if (!finite) {
            log.entries.push_back(entry);
            log.diverged = true;
            break;
        }
        if (entry.residual_l2 <= cfg.residual_tol && entry.beta <= cfg.boundary_tol) {
            log.entries.push_back(entry);
            log.converged = true;
            log.returned_iteration = j;
            return {x, log};
        }
        growth = entry.residual_l2 > previous * (1.0 + 1e-6) ? growth + 1 : 0;
        previous = entry.residual_l2;
        if (growth >= cfg.divergence_window) {
            log.entries.push_back(entry);
            log.diverged = true;
            break;
        }
        if (j == cfg.max_iterations) {
            log.entries.push_back(entry);
            log.returned_iteration = j;
            return {x, log};
        }

        CorrectionCurve y;
        if (cfg.correction == CorrectionMode::Pointwise) {
            y = correction_pointwise_newton(state, cfg.condition_bound);
        } else {
            EtaResult eta;
            if (cfg.eta_source == EtaSource::Objective) {
                eta = optimal_eta(state, cfg.eta_strategy, cfg);
            } else if (cfg.boundary_update == BoundaryUpdate::Step) {
                eta = boundary_eta_step(state, problem, cfg);
            } else {
                eta = boundary_eta_newton(state, problem, cfg);
            }
            if (!eta.warning.empty()) log.warnings.push_back("iteration " + std::to_string(j) + ": " + eta.warning);
            entry.eta_norm = eta.eta.norm();
            entry.step = eta.step;
            y = correction_with_eta(state, eta.eta, cfg.flow);
        }
        log.entries.push_back(entry);
        x = apply_correction(x, y, problem);
    }
    if (!best) throw DomainError("refinement produced no finite iterate");
    return {*best, log};
}

}  // namespace pwlbvp
