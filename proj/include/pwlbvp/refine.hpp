#pragma once

#include "pwlbvp/linear_flow.hpp"
#include "pwlbvp/mesh.hpp"
#include "pwlbvp/model.hpp"
#include "pwlbvp/problem.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace pwlbvp {

enum class EtaStrategy { GradientDescent, NewtonHessian, ClosedFormQuadratic };

/// Where the initial-value correction η comes from inside refine_loop.
enum class EtaSource { Boundary, Objective };

enum class BoundaryUpdate { Newton, Step };

enum class CorrectionMode { ZeroInitialValue, Pointwise };

struct RefineConfig {
    int max_iterations = 20;
    double residual_tol = 1e-8;
    double boundary_tol = 1e-8;
    EtaSource eta_source = EtaSource::Boundary;
    EtaStrategy eta_strategy = EtaStrategy::ClosedFormQuadratic;
    BoundaryUpdate boundary_update = BoundaryUpdate::Newton;
    CorrectionMode correction = CorrectionMode::ZeroInitialValue;

    double search_bound = 4.0;       ///< M of the line search on [0, M]
    double search_tol = 1e-6;        ///< golden-section tolerance relative to M
    int newton_max_iterations = 20;
    double newton_step_tol = 1e-12;  ///< relative to 1 + ‖η‖
    double condition_bound = 1e12;   ///< pointwise correction refuses worse-conditioned A(t)

    int min_intervals = 256;  ///< initial mesh is subdivided until it has at least this many intervals
    FlowOptions flow;
    QuadratureRule quad{5, 1};
    int sup_samples = 33;
    int divergence_window = 3;
};

/// Affine data of y'(t; η) at the quadrature points: √w·(A y + b) = M_q η + r_q.
struct EtaQuadratic {
    std::vector<Mat> m;
    std::vector<Vec> r;

    double value(const Vec& eta) const;
    Vec gradient(const Vec& eta) const;
    Mat hessian() const;
};

/// Current iterate with its linearization: A_field(t) = ∂f/∂x(x(t), t) and
/// b_field(t) = f(x(t), t) - x'(t).
struct RefineState {
    Mesh mesh = Mesh::uniform(2);
    std::shared_ptr<const PwlModel> model;  ///< absent for states built from raw fields
    const Problem* problem = nullptr;
    MatrixField a_field;
    VectorFn b_field;
    int iteration = 0;

    /// Lazily filled caches of the node flow and the η-objective data.
    mutable std::shared_ptr<MeshFlow> flow_cache;
    mutable std::shared_ptr<EtaQuadratic> quadratic_cache;
};

RefineState make_refine_state(const PwlModel& model, const Problem& problem);
RefineState make_refine_state(const Mesh& mesh, MatrixField a, VectorFn b);

/// y(t_i; η) = Φ(t_i, 0) η + ∫_0^{t_i} Φ(t_i, s) b(s) ds at every mesh node.
const MeshFlow& node_flow(const RefineState& state, const FlowOptions& opts = {});

/// A correction y(t) known at the mesh nodes and evaluable anywhere.
struct CorrectionCurve {
    Mesh mesh = Mesh::uniform(2);
    std::vector<Vec> nodes;
    VectorFn eval;

    Vec operator()(double t) const { return eval(t); }
    static CorrectionCurve from_function(const Mesh& mesh, VectorFn fn);
};

/// y(t) = ∫_0^t Φ(t, s) b(s) ds.
CorrectionCurve correction_zero_iv(const RefineState& state, int substeps = 8);

/// y(t; η) = Φ(t, 0) η + ∫_0^t Φ(t, s) b(s) ds.
CorrectionCurve correction_with_eta(const RefineState& state, const Vec& eta, const FlowOptions& opts = {});

/// y(t) = -A(t)^{-1} b(t); PointwiseUnavailable when A(t) is near singular at a node.
CorrectionCurve correction_pointwise_newton(const RefineState& state, double condition_bound = 1e12);

/// Node values θ_i + y(t_i) with slopes f(θ_i + y(t_i), t_i), as a Hermite model.
PwlModel apply_correction(const PwlModel& x, const CorrectionCurve& y, const Problem& problem);

/// Hermite model on `mesh` through the values and slopes of `model` at its nodes.
PwlModel resample(const PwlModel& model, const Mesh& mesh);

const EtaQuadratic& eta_quadratic(const RefineState& state, const FlowOptions& opts = {},
                                  const QuadratureRule& quad = QuadratureRule{5, 1});

/// 𝓕(η) = ∫_0^1 ‖A y(t; η) + b‖² dt.
double eta_objective(const RefineState& state, const Vec& eta, const FlowOptions& opts = {},
                     const QuadratureRule& quad = QuadratureRule{5, 1});

/// Central-difference gradient and symmetrized Hessian of a scalar function.
Vec fd_gradient(const std::function<double(const Vec&)>& fn, const Vec& x, double step);
Mat fd_hessian(const std::function<double(const Vec&)>& fn, const Vec& x, double step);

struct EtaResult {
    Vec eta;
    double step = 0.0;
    int iterations = 0;
    bool stalled = false;
    bool fell_back = false;
    std::string warning;
    std::vector<double> beta_history;  ///< ‖B‖ after each iterate, boundary updates only
};

EtaResult optimal_eta(const RefineState& state, EtaStrategy strategy, const RefineConfig& cfg);

/// Residual vector B(η) of the boundary condition after a correction with
/// initial value η: (β0, β1) for separable conditions, (β) otherwise.
Vec boundary_residual(const RefineState& state, const Problem& problem, const Vec& eta,
                      const FlowOptions& opts = {});

/// One line-search step along -Bᵀ(∂_{θ_0}B + ∂_{θ_N}B Φ(1,0)).
EtaResult boundary_eta_step(const RefineState& state, const Problem& problem, const RefineConfig& cfg);

/// Newton iteration on ½‖B(η)‖² from η = 0.
EtaResult boundary_eta_newton(const RefineState& state, const Problem& problem, const RefineConfig& cfg);

struct ConvergenceEntry {
    int iteration = 0;
    double residual_l2 = 0.0;
    double residual_sup = 0.0;
    double beta = 0.0;
    double eta_norm = 0.0;
    double step = 0.0;
};

struct ConvergenceLog {
    std::vector<ConvergenceEntry> entries;
    bool converged = false;
    bool diverged = false;
    int returned_iteration = 0;
    std::vector<std::string> warnings;
};

/// √(∫ ‖b(t)‖² dt) and the sampled sup of ‖b(t)‖ over the state's mesh.
double residual_l2(const RefineState& state, const QuadratureRule& quad = QuadratureRule{5, 1});
double residual_sup(const RefineState& state, int samples = 33);

struct RefineResult {
    PwlModel model;
    ConvergenceLog log;
};

RefineResult refine_loop(const PwlModel& initial, const Problem& problem, const RefineConfig& cfg = {});

}  // namespace pwlbvp
