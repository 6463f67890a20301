#pragma once

#include "pwlbvp/error_functionals.hpp"
#include "pwlbvp/mesh.hpp"
#include "pwlbvp/model.hpp"
#include "pwlbvp/problem.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace pwlbvp {

/// Value grids of one node: per-dimension θ points and per-dimension v points.
/// States are flattened as theta_index * v_count + v_index, each index
/// row-major with dimension 0 most significant.
class NodeGrid {
public:
    NodeGrid() = default;
    NodeGrid(std::vector<std::vector<double>> theta, std::vector<std::vector<double>> v);

    int dim() const { return static_cast<int>(theta_.size()); }
    const std::vector<std::vector<double>>& theta_axes() const { return theta_; }
    const std::vector<std::vector<double>>& v_axes() const { return v_; }

    std::size_t theta_count() const { return theta_count_; }
    std::size_t v_count() const { return v_count_; }
    std::size_t state_count() const { return theta_count_ * v_count_; }

    Vec theta_point(std::size_t theta_index) const;
    Vec v_point(std::size_t v_index) const;
    Vec theta_of(std::size_t state) const { return theta_point(state / v_count_); }
    Vec v_of(std::size_t state) const { return v_point(state % v_count_); }

    /// Largest gap between neighbouring θ points over all dimensions.
    double max_theta_spacing() const;

private:
    std::vector<std::vector<double>> theta_;
    std::vector<std::vector<double>> v_;
    std::size_t theta_count_ = 0;
    std::size_t v_count_ = 0;
};

/// Grids for nodes 0..N. A single entry is shared by every node.
struct StateGrid {
    std::vector<NodeGrid> nodes;

    const NodeGrid& node(int k) const {
        return nodes.size() == 1 ? nodes.front() : nodes[static_cast<std::size_t>(k)];
    }
    double max_theta_spacing() const;
};

struct DpState {
    int node = 0;
    std::size_t index = 0;
    Vec theta;
    Vec v;
};

DpState make_state(const StateGrid& grid, int node, std::size_t index);

enum class TransitionMode { Hermite, Exponential };

struct DpConfig {
    ErrorAccumulator accumulator = ErrorAccumulator::additive();
    ErrorSettings error;
    std::optional<double> eps_beta;  ///< default: half the θ spacing times a sampled Lipschitz bound of β
    double eps_cont = 1e-9;
    TransitionMode mode = TransitionMode::Hermite;
    std::vector<Mat> candidates;  ///< constant A matrices for Exponential mode

    int theta_points = 21;
    int v_points = 11;
    std::optional<Box> v_box;  ///< default: sampled range of f over the state box

    int tube_iterations = 2;
    double shrink = 0.5;

    unsigned threads = 0;  ///< 0: hardware concurrency
    std::uint64_t seed = 12345;
};

/// Per-stage forward tables. Separable case: entry [σ_k]. General case:
/// entry [slot * state_count(k) + σ_k] where slot indexes the admissible
/// initial states in `initial_slice`; stage 0 then holds one entry per slot.
struct DpTables {
    BoundaryCondition::Kind kind = BoundaryCondition::Kind::Separable;
    StateGrid grid;
    double eps_beta = 0.0;
    std::vector<std::size_t> initial_slice;
    std::vector<std::vector<double>> cost;
    std::vector<std::vector<std::int64_t>> back;
    std::vector<std::vector<int>> candidate;
    std::vector<std::uint64_t> admissible_transitions;
    std::vector<double> stage_seconds;

    int stages() const { return static_cast<int>(cost.size()); }
};

struct DpStats {
    std::vector<std::size_t> table_sizes;
    std::vector<std::uint64_t> admissible_transitions;
    std::vector<double> stage_seconds;
    std::vector<double> tube_costs;
    std::vector<double> eps_beta;
    double total_seconds = 0.0;
};

struct DpSolution {
    PwlModel model;
    double cost = 0.0;
    std::vector<DpState> path;
    DpStats stats;
};

/// Uniform grids including box endpoints (a single point sits at the centre).
StateGrid discretize_states(const Box& box, const Box& vbox, int theta_points, int v_points);

/// Per-component range of f sampled over the state box and t in [0, 1].
Box default_v_box(const Problem& problem, std::uint64_t seed, int samples = 512);

/// Half the largest θ spacing times the largest sampled ‖∇β‖₁; at least 1e-12.
double default_eps_beta(const Problem& problem, const StateGrid& grid, std::uint64_t seed, int samples = 64);

/// Piece joining two node states, or nullopt when the pair is outside Ω_k.
/// `candidate` selects the A matrix in Exponential mode.
std::optional<Piece> transition_piece(const DpState& prev, const DpState& next, const Mesh& mesh,
                                      const DpConfig& cfg, int candidate = 0);

/// Piece error of `piece` against the field under the configured metric.
double stage_cost(const Piece& piece, const FieldFn& f, const DpConfig& cfg);

struct TransitionCost {
    double cost;
    int candidate;
};

/// Cheapest admissible transition (smallest candidate index on ties).
std::optional<TransitionCost> best_transition(const DpState& prev, const DpState& next, const Problem& problem,
                                              const Mesh& mesh, const DpConfig& cfg);

DpTables forward_tabulate_separable(const Problem& problem, const Mesh& mesh, const StateGrid& grid,
                                    const DpConfig& cfg, double eps_beta);
DpTables forward_tabulate_general(const Problem& problem, const Mesh& mesh, const StateGrid& grid,
                                  const DpConfig& cfg, double eps_beta);

struct Backtracked {
    PwlModel model;
    double cost;
    std::vector<DpState> path;
};

Backtracked backtrack(const DpTables& tables, const Problem& problem, const Mesh& mesh, const DpConfig& cfg);

struct BruteForceResult {
    double cost;
    std::vector<std::size_t> path;  ///< state index per node
};

/// Exhaustive enumeration over all state sequences; refuses more than
/// `guard` sequences with GuardExceeded.
BruteForceResult brute_force_solve(const Problem& problem, const Mesh& mesh, const StateGrid& grid,
                                   const DpConfig& cfg, double eps_beta, double guard = 1e6);

/// Grids re-centred on the incumbent node states with half-widths scaled by
/// `shrink`. The incumbent is always a grid point.
StateGrid refine_tube(const std::vector<DpState>& incumbent, const StateGrid& grid, double shrink);
StateGrid refine_tube(const PwlModel& previous, const StateGrid& grid, double shrink);

DpSolution solve_dp(const Problem& problem, const Mesh& mesh, const DpConfig& cfg);

struct SpectrumSummary {
    double max_real = 0.0;
    double min_real = 0.0;
    double max_abs_imag = 0.0;
    double drift = 0.0;  ///< largest spectral radius of the finite-difference dA/dt
};

/// Eigenvalue summary of ∂f/∂x along the model, per piece.
std::vector<SpectrumSummary> stiffness_diagnostics(const PwlModel& model, const Problem& problem, int samples = 5);

}  // namespace pwlbvp
