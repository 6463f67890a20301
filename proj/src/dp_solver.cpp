#include "pwlbvp/dp_solver.hpp"

#include "pwlbvp/errors.hpp"
#include "pwlbvp/linear_flow.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <thread>

namespace pwlbvp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t axes_product(const std::vector<std::vector<double>>& axes) {
    std::size_t p = 1;
    for (const auto& a : axes) p *= a.size();
    return p;
}

Vec axes_point(const std::vector<std::vector<double>>& axes, std::size_t index) {
    const auto n = axes.size();
    Vec x(static_cast<Eigen::Index>(n));
    for (auto d = n; d-- > 0;) {
        const auto& a = axes[d];
        x(static_cast<Eigen::Index>(d)) = a[index % a.size()];
        index /= a.size();
    }
    return x;
}

void check_axes(const std::vector<std::vector<double>>& axes, const char* what) {
    for (const auto& a : axes) {
        if (a.empty()) throw DomainError(std::string(what) + " grid axis is empty");
        for (std::size_t i = 1; i < a.size(); ++i)
            if (!(a[i] > a[i - 1])) throw DomainError(std::string(what) + " grid axis must be strictly increasing");
    }
}

std::vector<double> uniform_axis(double lo, double hi, int count) {
    if (count < 1) throw DomainError("grid needs at least one point per dimension");
    if (count == 1) return {0.5 * (lo + hi)};
    if (!(hi > lo)) throw DomainError("degenerate box for a multi-point grid");
    std::vector<double> axis(static_cast<std::size_t>(count));
    const double step = (hi - lo) / (count - 1);
    for (int j = 0; j < count; ++j) axis[static_cast<std::size_t>(j)] = lo + j * step;
    axis.back() = hi;
    return axis;
}

std::vector<double> tube_axis(double center, double half_width, std::size_t count) {
    if (count == 1 || half_width <= 0.0) return {center};
    const double delta = 2.0 * half_width / static_cast<double>(count - 1);
    const auto mid = static_cast<double>(count / 2);
    std::vector<double> axis(count);
    for (std::size_t j = 0; j < count; ++j) axis[j] = center + (static_cast<double>(j) - mid) * delta;
    axis[count / 2] = center;
    return axis;
}

double axis_half_width(const std::vector<double>& a) { return 0.5 * (a.back() - a.front()); }

unsigned worker_count(const DpConfig& cfg, std::size_t work) {
    unsigned t = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    return static_cast<unsigned>(std::min<std::size_t>(t, std::max<std::size_t>(work, 1)));
}

/// Runs body(begin, end) over [0, count) split into contiguous blocks.
template <class Body>
void parallel_blocks(std::size_t count, unsigned workers, Body&& body) {
    if (workers <= 1) {
        body(std::size_t{0}, count);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (count + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi] { body(lo, hi); });
    }
    for (auto& th : pool) th.join();
}

Vec random_point(const Box& box, std::mt19937_64& rng) {
    Vec x(box.dim());
    for (int d = 0; d < box.dim(); ++d) {
        std::uniform_real_distribution<double> u(box.lower(d), box.upper(d));
        x(d) = box.lower(d) == box.upper(d) ? box.lower(d) : u(rng);
    }
    return x;
}

double fd_gradient_l1(const std::function<double(const Vec&)>& fn, const Vec& x) {
    const double root_eps = std::sqrt(std::numeric_limits<double>::epsilon());
    double sum = 0.0;
    Vec xp = x;
    Vec xm = x;
    for (Eigen::Index c = 0; c < x.size(); ++c) {
        const double h = root_eps * (1.0 + std::abs(x(c)));
        xp(c) = x(c) + h;
        xm(c) = x(c) - h;
        sum += std::abs(fn(xp) - fn(xm)) / (2.0 * h);
        xp(c) = x(c);
        xm(c) = x(c);
    }
    return sum;
}

bool initial_admissible(const BoundaryCondition& bc, const Vec& theta, double eps) {
    return std::abs(bc.beta0(theta)) <= eps;
}

bool terminal_admissible(const BoundaryCondition& bc, const Vec& theta, double eps) {
    return std::abs(bc.beta1(theta)) <= eps;
}

/// Initial states of the general case that admit some terminal grid point.
std::vector<std::size_t> general_slice(const BoundaryCondition& bc, const StateGrid& grid, int last, double eps) {
    const auto& g0 = grid.node(0);
    const auto& gn = grid.node(last);
    std::vector<Vec> terminal;
    terminal.reserve(gn.theta_count());
    for (std::size_t j = 0; j < gn.theta_count(); ++j) terminal.push_back(gn.theta_point(j));
    std::vector<std::size_t> slice;
    for (std::size_t i = 0; i < g0.theta_count(); ++i) {
        const Vec a = g0.theta_point(i);
        const bool ok = std::any_of(terminal.begin(), terminal.end(),
                                    [&](const Vec& c) { return std::abs(bc.evaluate(a, c)) <= eps; });
        if (!ok) continue;
        for (std::size_t v = 0; v < g0.v_count(); ++v) slice.push_back(i * g0.v_count() + v);
    }
    return slice;
}

void check_grid(const StateGrid& grid, const Mesh& mesh, int dim) {
    if (grid.nodes.empty()) throw DomainError("state grid is empty");
    if (grid.nodes.size() != 1 && static_cast<int>(grid.nodes.size()) != mesh.intervals() + 1)
        throw DomainError("state grid needs one node grid or one per mesh node");
    for (const auto& g : grid.nodes)
        if (g.dim() != dim) throw DomainError("state grid dimension does not match the problem");
}

std::vector<DpState> node_states(const StateGrid& grid, int k) {
    const auto count = grid.node(k).state_count();
    std::vector<DpState> out;
    out.reserve(count);
    for (std::size_t s = 0; s < count; ++s) out.push_back(make_state(grid, k, s));
    return out;
}

struct StageTimer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

}  // namespace

NodeGrid::NodeGrid(std::vector<std::vector<double>> theta, std::vector<std::vector<double>> v)
    : theta_(std::move(theta)), v_(std::move(v)) {
    if (theta_.empty() || theta_.size() != v_.size()) throw DomainError("node grid needs matching θ and v axes");
    check_axes(theta_, "theta");
    check_axes(v_, "v");
    theta_count_ = axes_product(theta_);
    v_count_ = axes_product(v_);
}

Vec NodeGrid::theta_point(std::size_t theta_index) const { return axes_point(theta_, theta_index); }
Vec NodeGrid::v_point(std::size_t v_index) const { return axes_point(v_, v_index); }

double NodeGrid::max_theta_spacing() const {
    double h = 0.0;
    for (const auto& a : theta_)
        for (std::size_t i = 1; i < a.size(); ++i) h = std::max(h, a[i] - a[i - 1]);
    return h;
}

double StateGrid::max_theta_spacing() const {
    double h = 0.0;
    for (const auto& g : nodes) h = std::max(h, g.max_theta_spacing());
    return h;
}

DpState make_state(const StateGrid& grid, int node, std::size_t index) {
    const auto& g = grid.node(node);
    if (index >= g.state_count()) throw DomainError("state index outside the node grid");
    return {node, index, g.theta_of(index), g.v_of(index)};
}

StateGrid discretize_states(const Box& box, const Box& vbox, int theta_points, int v_points) {
    if (box.dim() != vbox.dim() || box.dim() == 0) throw DomainError("state and derivative boxes differ in dimension");
    std::vector<std::vector<double>> theta;
    std::vector<std::vector<double>> v;
    for (int d = 0; d < box.dim(); ++d) {
        theta.push_back(uniform_axis(box.lower(d), box.upper(d), theta_points));
        v.push_back(uniform_axis(vbox.lower(d), vbox.upper(d), v_points));
    }
    return StateGrid{{NodeGrid(std::move(theta), std::move(v))}};
}

Box default_v_box(const Problem& problem, std::uint64_t seed, int samples) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ut(0.0, 1.0);
    const int n = problem.dim;
    Vec lo = Vec::Constant(n, kInf);
    Vec hi = Vec::Constant(n, -kInf);
    auto take = [&](const Vec& x, double t) {
        const Vec fx = problem.f(x, t);
        if (!fx.allFinite()) return;
        lo = lo.cwiseMin(fx);
        hi = hi.cwiseMax(fx);
    };
    const auto& box = problem.state_box;
    if (n <= 10) {
        for (int corner = 0; corner < (1 << n); ++corner) {
            Vec x(n);
            for (int d = 0; d < n; ++d) x(d) = (corner >> d) & 1 ? box.upper(d) : box.lower(d);
            take(x, 0.0);
            take(x, 1.0);
        }
    }
    take(box.center(), 0.5);
    for (int i = 0; i < samples; ++i) {
        const Vec x = random_point(box, rng);
        take(x, ut(rng));
    }
    if (!lo.allFinite() || !hi.allFinite()) throw DomainError("vector field is not finite on the state box");
    for (int d = 0; d < n; ++d) {
        if (hi(d) - lo(d) <= 1e-12 * (1.0 + std::abs(lo(d)))) {
            lo(d) -= 0.5 * (1.0 + std::abs(lo(d)));
            hi(d) += 0.5 * (1.0 + std::abs(hi(d)));
        }
    }
    return {lo, hi};
}

double default_eps_beta(const Problem& problem, const StateGrid& grid, std::uint64_t seed, int samples) {
    std::mt19937_64 rng(seed);
    const auto& bc = problem.boundary;
    const auto& box = problem.state_box;
    double lip = 0.0;
    for (int i = 0; i < samples; ++i) {
        const Vec a = random_point(box, rng);
        const Vec c = random_point(box, rng);
        if (bc.is_separable()) {
            lip = std::max(lip, fd_gradient_l1([&](const Vec& x) { return bc.beta0(x); }, a));
            lip = std::max(lip, fd_gradient_l1([&](const Vec& x) { return bc.beta1(x); }, c));
        } else {
            Vec ac(a.size() + c.size());
            ac << a, c;
            const auto n = a.size();
            lip = std::max(lip, fd_gradient_l1([&](const Vec& x) { return bc.evaluate(x.head(n), x.tail(n)); }, ac));
        }
    }
    return std::max(1e-12, 0.5 * grid.max_theta_spacing() * lip);
}

std::optional<Piece> transition_piece(const DpState& prev, const DpState& next, const Mesh& mesh,
                                      const DpConfig& cfg, int candidate) {
    if (next.node != prev.node + 1) throw DomainError("transition must join consecutive nodes");
    const double t0 = mesh.node(prev.node);
    const double t1 = mesh.node(next.node);
    if (cfg.mode == TransitionMode::Hermite) return Piece::hermite(t0, t1, prev.theta, prev.v, next.theta, next.v);

    if (candidate < 0 || candidate >= static_cast<int>(cfg.candidates.size()))
        throw DomainError("candidate index outside the candidate set");
    const Mat& a = cfg.candidates[static_cast<std::size_t>(candidate)];
    const Vec b = prev.v - a * prev.theta;
    Piece piece = Piece::constant(t0, t1, a, b, prev.theta);
    if ((propagate_piece(piece, t1) - next.theta).norm() > cfg.eps_cont) return std::nullopt;
    if ((a * next.theta + b - next.v).norm() > cfg.eps_cont) return std::nullopt;
    return piece;
}

double stage_cost(const Piece& piece, const FieldFn& f, const DpConfig& cfg) {
    return piece_error(piece, f, cfg.accumulator, cfg.error);
}

namespace {

/// Piece error of the Hermite transition evaluated from the cubic Hermite
/// basis directly, without building a Piece.
double hermite_cost(const DpState& prev, const DpState& next, double t0, double t1, const FieldFn& f,
                    const DpConfig& cfg) {
    const double h = t1 - t0;
    Vec y(prev.theta.size());
    Vec dy(prev.theta.size());
    auto residual_at = [&](double t) {
        const double s = (t - t0) / h;
        const double s2 = s * s;
        const double s3 = s2 * s;
        y = (2 * s3 - 3 * s2 + 1) * prev.theta + (h * (s3 - 2 * s2 + s)) * prev.v + (-2 * s3 + 3 * s2) * next.theta +
            (h * (s3 - s2)) * next.v;
        dy = ((6 * s2 - 6 * s) / h) * (prev.theta - next.theta) + (3 * s2 - 4 * s + 1) * prev.v +
             (3 * s2 - 2 * s) * next.v;
        return Vec(dy - f(y, t));
    };
    if (cfg.accumulator.metric() == PieceMetric::Supremum) {
        double sup = 0.0;
        for (double t : chebyshev_lobatto(t0, t1, cfg.error.samples.points)) sup = std::max(sup, residual_at(t).norm());
        return sup;
    }
    return cfg.error.quad.integrate(t0, t1, [&](double t) { return cfg.error.integrand(residual_at(t)); });
}

}  // namespace

std::optional<TransitionCost> best_transition(const DpState& prev, const DpState& next, const Problem& problem,
                                              const Mesh& mesh, const DpConfig& cfg) {
    if (cfg.mode == TransitionMode::Hermite) {
        if (next.node != prev.node + 1) throw DomainError("transition must join consecutive nodes");
        return TransitionCost{
            hermite_cost(prev, next, mesh.node(prev.node), mesh.node(next.node), problem.field, cfg), 0};
    }
    std::optional<TransitionCost> best;
    for (int c = 0; c < static_cast<int>(cfg.candidates.size()); ++c) {
        auto piece = transition_piece(prev, next, mesh, cfg, c);
        if (!piece) continue;
        const double e = stage_cost(*piece, problem.field, cfg);
        if (!best || e < best->cost) best = TransitionCost{e, c};
    }
    return best;
}

DpTables forward_tabulate_separable(const Problem& problem, const Mesh& mesh, const StateGrid& grid,
                                    const DpConfig& cfg, double eps_beta) {
    const auto& bc = problem.boundary;
    if (!bc.is_separable()) throw DomainError("forward_tabulate_separable needs separable boundary conditions");
    if (cfg.mode == TransitionMode::Exponential && cfg.candidates.empty())
        throw DomainError("Exponential mode needs at least one candidate matrix");
    check_grid(grid, mesh, problem.dim);
    const int n_int = mesh.intervals();
    const auto& acc = cfg.accumulator;

    DpTables t;
    t.kind = BoundaryCondition::Kind::Separable;
    t.grid = grid;
    t.eps_beta = eps_beta;
    t.cost.resize(static_cast<std::size_t>(n_int) + 1);
    t.back.resize(t.cost.size());
    t.candidate.resize(t.cost.size());
    t.admissible_transitions.assign(t.cost.size(), 0);
    t.stage_seconds.assign(t.cost.size(), 0.0);

    const auto& gn = grid.node(n_int);
    bool any_terminal = false;
    for (std::size_t j = 0; j < gn.theta_count() && !any_terminal; ++j)
        any_terminal = terminal_admissible(bc, gn.theta_point(j), eps_beta);

    StageTimer timer0;
    std::vector<DpState> prev_states = node_states(grid, 0);
    auto& c0 = t.cost[0];
    c0.assign(prev_states.size(), kInf);
    t.back[0].assign(prev_states.size(), -1);
    t.candidate[0].assign(prev_states.size(), -1);
    bool any = false;
    for (std::size_t s = 0; s < prev_states.size(); ++s) {
        if (initial_admissible(bc, prev_states[s].theta, eps_beta)) {
            c0[s] = acc.initial();
            any = true;
        }
    }
    t.stage_seconds[0] = timer0.seconds();
    if (!any) throw InfeasibleDiscretization("Omega_1", "no grid state satisfies the initial boundary condition");
    if (!any_terminal)
        throw InfeasibleDiscretization("Omega_N", "no grid state satisfies the terminal boundary condition");

    for (int k = 1; k <= n_int; ++k) {
        StageTimer timer;
        std::vector<DpState> states = node_states(grid, k);
        const auto& prev_cost = t.cost[static_cast<std::size_t>(k) - 1];
        auto& cost = t.cost[static_cast<std::size_t>(k)];
        auto& back = t.back[static_cast<std::size_t>(k)];
        auto& cand = t.candidate[static_cast<std::size_t>(k)];
        cost.assign(states.size(), kInf);
        back.assign(states.size(), -1);
        cand.assign(states.size(), -1);
        std::vector<std::uint64_t> counted(states.size(), 0);

        parallel_blocks(states.size(), worker_count(cfg, states.size()), [&](std::size_t lo, std::size_t hi) {
            for (std::size_t q = lo; q < hi; ++q) {
                double best = kInf;
                for (std::size_t p = 0; p < prev_states.size(); ++p) {
                    if (!std::isfinite(prev_cost[p])) continue;
                    auto tr = best_transition(prev_states[p], states[q], problem, mesh, cfg);
                    if (!tr) continue;
                    ++counted[q];
                    const double value = accumulate(acc, prev_cost[p], tr->cost);
                    if (value < best) {
                        best = value;
                        cost[q] = value;
                        back[q] = static_cast<std::int64_t>(p);
                        cand[q] = tr->candidate;
                    }
                }
            }
        });
        for (auto c : counted) t.admissible_transitions[static_cast<std::size_t>(k)] += c;

        if (k == n_int) {
            bool reachable = false;
            bool feasible = false;
            for (std::size_t q = 0; q < states.size(); ++q) {
                if (!std::isfinite(cost[q])) continue;
                reachable = true;
                if (terminal_admissible(bc, states[q].theta, eps_beta)) {
                    feasible = true;
                } else {
                    cost[q] = kInf;
                    back[q] = -1;
                    cand[q] = -1;
                }
            }
            if (!reachable) throw InfeasibleDiscretization("Omega_k", "stage " + std::to_string(k) + " is unreachable");
            if (!feasible)
                throw InfeasibleDiscretization("Omega_N", "no reachable state satisfies the terminal boundary condition");
        } else if (std::none_of(cost.begin(), cost.end(), [](double c) { return std::isfinite(c); })) {
            throw InfeasibleDiscretization("Omega_k", "stage " + std::to_string(k) + " is unreachable");
        }
        t.stage_seconds[static_cast<std::size_t>(k)] = timer.seconds();
        prev_states = std::move(states);
    }
    return t;
}

DpTables forward_tabulate_general(const Problem& problem, const Mesh& mesh, const StateGrid& grid,
                                  const DpConfig& cfg, double eps_beta) {
    const auto& bc = problem.boundary;
    if (bc.is_separable()) throw DomainError("forward_tabulate_general needs a general boundary condition");
    if (cfg.mode == TransitionMode::Exponential && cfg.candidates.empty())
        throw DomainError("Exponential mode needs at least one candidate matrix");
    check_grid(grid, mesh, problem.dim);
    const int n_int = mesh.intervals();
    const auto& acc = cfg.accumulator;

    DpTables t;
    t.kind = BoundaryCondition::Kind::General;
    t.grid = grid;
    t.eps_beta = eps_beta;
    t.cost.resize(static_cast<std::size_t>(n_int) + 1);
    t.back.resize(t.cost.size());
    t.candidate.resize(t.cost.size());
    t.admissible_transitions.assign(t.cost.size(), 0);
    t.stage_seconds.assign(t.cost.size(), 0.0);

    StageTimer timer0;
    t.initial_slice = general_slice(bc, grid, n_int, eps_beta);
    const std::size_t slots = t.initial_slice.size();
    if (slots == 0) throw InfeasibleDiscretization("Omega_1", "no initial grid state admits a terminal grid state");
    t.cost[0].assign(slots, acc.initial());
    t.back[0].assign(slots, -1);
    t.candidate[0].assign(slots, -1);
    t.stage_seconds[0] = timer0.seconds();

    std::vector<DpState> prev_states = node_states(grid, 0);
    for (int k = 1; k <= n_int; ++k) {
        StageTimer timer;
        std::vector<DpState> states = node_states(grid, k);
        const std::size_t width = states.size();
        const std::size_t prev_width = prev_states.size();
        const auto& prev_cost = t.cost[static_cast<std::size_t>(k) - 1];
        auto& cost = t.cost[static_cast<std::size_t>(k)];
        auto& back = t.back[static_cast<std::size_t>(k)];
        auto& cand = t.candidate[static_cast<std::size_t>(k)];
        cost.assign(slots * width, kInf);
        back.assign(slots * width, -1);
        cand.assign(slots * width, -1);
        std::vector<std::uint64_t> counted(width, 0);

        // Predecessors that are finite for at least one slot.
        std::vector<char> live(prev_width, 0);
        if (k == 1) {
            for (auto s0 : t.initial_slice) live[s0] = 1;
        } else {
            for (std::size_t slot = 0; slot < slots; ++slot)
                for (std::size_t p = 0; p < prev_width; ++p)
                    if (std::isfinite(prev_cost[slot * prev_width + p])) live[p] = 1;
        }

        parallel_blocks(width, worker_count(cfg, width), [&](std::size_t lo, std::size_t hi) {
            std::vector<double> e(prev_width);
            std::vector<int> ec(prev_width);
            for (std::size_t q = lo; q < hi; ++q) {
                for (std::size_t p = 0; p < prev_width; ++p) {
                    e[p] = kInf;
                    ec[p] = -1;
                    if (!live[p]) continue;
                    auto tr = best_transition(prev_states[p], states[q], problem, mesh, cfg);
                    if (!tr) continue;
                    ++counted[q];
                    e[p] = tr->cost;
                    ec[p] = tr->candidate;
                }
                for (std::size_t slot = 0; slot < slots; ++slot) {
                    const std::size_t at = slot * width + q;
                    if (k == 1) {
                        const auto p = t.initial_slice[slot];
                        if (ec[p] < 0) continue;
                        cost[at] = accumulate(acc, prev_cost[slot], e[p]);
                        back[at] = static_cast<std::int64_t>(p);
                        cand[at] = ec[p];
                        continue;
                    }
                    double best = kInf;
                    for (std::size_t p = 0; p < prev_width; ++p) {
                        const double pc = prev_cost[slot * prev_width + p];
                        if (ec[p] < 0 || !std::isfinite(pc)) continue;
                        const double value = accumulate(acc, pc, e[p]);
                        if (value < best) {
                            best = value;
                            cost[at] = value;
                            back[at] = static_cast<std::int64_t>(p);
                            cand[at] = ec[p];
                        }
                    }
                }
            }
        });
        for (auto c : counted) t.admissible_transitions[static_cast<std::size_t>(k)] += c;

        if (std::none_of(cost.begin(), cost.end(), [](double c) { return std::isfinite(c); }))
            throw InfeasibleDiscretization("Omega_k", "stage " + std::to_string(k) + " is unreachable");
        if (k == n_int) {
            bool feasible = false;
            for (std::size_t slot = 0; slot < slots; ++slot) {
                const Vec a = grid.node(0).theta_of(t.initial_slice[slot]);
                for (std::size_t q = 0; q < width; ++q) {
                    const std::size_t at = slot * width + q;
                    if (!std::isfinite(cost[at])) continue;
                    if (std::abs(bc.evaluate(a, states[q].theta)) <= eps_beta) {
                        feasible = true;
                    } else {
                        cost[at] = kInf;
                        back[at] = -1;
                        cand[at] = -1;
                    }
                }
            }
            if (!feasible)
                throw InfeasibleDiscretization("Omega_N", "no reachable pair satisfies the boundary condition");
        }
        t.stage_seconds[static_cast<std::size_t>(k)] = timer.seconds();
        prev_states = std::move(states);
    }
    return t;
}

Backtracked backtrack(const DpTables& tables, const Problem& problem, const Mesh& mesh, const DpConfig& cfg) {
    const int n_int = tables.stages() - 1;
    if (n_int != mesh.intervals()) throw DomainError("tables do not match the mesh");
    const auto& last = tables.cost.back();
    const bool general = tables.kind == BoundaryCondition::Kind::General;
    const std::size_t width = tables.grid.node(n_int).state_count();

    std::size_t best_at = 0;
    double best = kInf;
    for (std::size_t at = 0; at < last.size(); ++at) {
        if (last[at] < best) {
            best = last[at];
            best_at = at;
        }
    }
    if (!std::isfinite(best)) throw InfeasibleDiscretization("Omega_N", "no admissible terminal entry");

    const std::size_t slot = general ? best_at / width : 0;
    std::vector<std::size_t> idx(static_cast<std::size_t>(n_int) + 1);
    std::vector<int> cand(static_cast<std::size_t>(n_int) + 1, -1);
    idx.back() = general ? best_at % width : best_at;
    for (int k = n_int; k >= 1; --k) {
        const std::size_t w = tables.grid.node(k).state_count();
        const std::size_t at = general ? slot * w + idx[static_cast<std::size_t>(k)] : idx[static_cast<std::size_t>(k)];
        const auto p = tables.back[static_cast<std::size_t>(k)][at];
        if (p < 0) throw DomainError("broken back-link in DP tables");
        idx[static_cast<std::size_t>(k) - 1] = static_cast<std::size_t>(p);
        cand[static_cast<std::size_t>(k)] = tables.candidate[static_cast<std::size_t>(k)][at];
    }

    std::vector<DpState> path;
    path.reserve(idx.size());
    for (int k = 0; k <= n_int; ++k) path.push_back(make_state(tables.grid, k, idx[static_cast<std::size_t>(k)]));

    std::vector<Piece> pieces;
    pieces.reserve(static_cast<std::size_t>(n_int));
    for (int k = 1; k <= n_int; ++k) {
        auto piece = transition_piece(path[static_cast<std::size_t>(k) - 1], path[static_cast<std::size_t>(k)], mesh,
                                      cfg, std::max(0, cand[static_cast<std::size_t>(k)]));
        if (!piece) throw DomainError("backtracked transition is not admissible");
        pieces.push_back(std::move(*piece));
    }
    (void)problem;
    return {PwlModel(mesh, std::move(pieces), path.back().theta), best, std::move(path)};
}

BruteForceResult brute_force_solve(const Problem& problem, const Mesh& mesh, const StateGrid& grid,
                                   const DpConfig& cfg, double eps_beta, double guard) {
    check_grid(grid, mesh, problem.dim);
    if (cfg.mode == TransitionMode::Exponential && cfg.candidates.empty())
        throw DomainError("Exponential mode needs at least one candidate matrix");
    const int n_int = mesh.intervals();
    const auto& bc = problem.boundary;
    const bool general = !bc.is_separable();
    const auto& acc = cfg.accumulator;

    double sequences = 1.0;
    for (int k = 0; k <= n_int; ++k) sequences *= static_cast<double>(grid.node(k).state_count());
    if (sequences > guard) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "brute force refused: %.3g sequences exceed the guard of %.3g", sequences, guard);
        throw GuardExceeded(buf);
    }

    std::vector<std::vector<DpState>> states;
    for (int k = 0; k <= n_int; ++k) states.push_back(node_states(grid, k));

    // Initial and terminal admissibility.
    std::vector<char> start_ok(states[0].size(), 0);
    if (general) {
        for (auto s : general_slice(bc, grid, n_int, eps_beta)) start_ok[s] = 1;
    } else {
        for (std::size_t s = 0; s < states[0].size(); ++s)
            start_ok[s] = initial_admissible(bc, states[0][s].theta, eps_beta) ? 1 : 0;
    }
    if (std::none_of(start_ok.begin(), start_ok.end(), [](char c) { return c != 0; }))
        throw InfeasibleDiscretization("Omega_1", "no admissible initial state");
    if (!general) {
        bool any_terminal = false;
        for (const auto& s : states.back()) any_terminal = any_terminal || terminal_admissible(bc, s.theta, eps_beta);
        if (!any_terminal) throw InfeasibleDiscretization("Omega_N", "no admissible terminal state");
    }
    auto end_ok = [&](std::size_t s0, std::size_t sn) {
        if (general) return std::abs(bc.evaluate(states[0][s0].theta, states.back()[sn].theta)) <= eps_beta;
        return terminal_admissible(bc, states.back()[sn].theta, eps_beta);
    };

    // Dense transition cost matrices, inf when inadmissible.
    std::vector<std::vector<double>> trans(static_cast<std::size_t>(n_int) + 1);
    for (int k = 1; k <= n_int; ++k) {
        const auto& ps = states[static_cast<std::size_t>(k) - 1];
        const auto& qs = states[static_cast<std::size_t>(k)];
        auto& m = trans[static_cast<std::size_t>(k)];
        m.assign(ps.size() * qs.size(), kInf);
        for (std::size_t p = 0; p < ps.size(); ++p)
            for (std::size_t q = 0; q < qs.size(); ++q)
                if (auto tr = best_transition(ps[p], qs[q], problem, mesh, cfg)) m[p * qs.size() + q] = tr->cost;
    }

    // Pass 1: best prefix cost per (σ_0 if general, k, σ_k) and global best.
    const std::size_t n0 = states[0].size();
    std::vector<std::vector<double>> prefix(static_cast<std::size_t>(n_int) + 1);
    for (int k = 0; k <= n_int; ++k)
        prefix[static_cast<std::size_t>(k)].assign((general ? n0 : 1) * states[static_cast<std::size_t>(k)].size(), kInf);
    auto prefix_at = [&](std::size_t s0, int k, std::size_t s) -> double& {
        const auto w = states[static_cast<std::size_t>(k)].size();
        return prefix[static_cast<std::size_t>(k)][(general ? s0 * w : 0) + s];
    };

    std::vector<std::size_t> seq(static_cast<std::size_t>(n_int) + 1);
    std::vector<double> run(static_cast<std::size_t>(n_int) + 1);
    double global = kInf;
    int deepest = 0;

    auto dfs1 = [&](auto&& self, int k) -> void {
        const std::size_t s0 = seq[0];
        deepest = std::max(deepest, k);
        double& pf = prefix_at(s0, k, seq[static_cast<std::size_t>(k)]);
        pf = std::min(pf, run[static_cast<std::size_t>(k)]);
        if (k == n_int) {
            if (end_ok(s0, seq[static_cast<std::size_t>(k)])) global = std::min(global, run[static_cast<std::size_t>(k)]);
            return;
        }
        const auto& m = trans[static_cast<std::size_t>(k) + 1];
        const auto w = states[static_cast<std::size_t>(k) + 1].size();
        for (std::size_t q = 0; q < w; ++q) {
            const double e = m[seq[static_cast<std::size_t>(k)] * w + q];
            if (!std::isfinite(e)) continue;
            seq[static_cast<std::size_t>(k) + 1] = q;
            run[static_cast<std::size_t>(k) + 1] = accumulate(acc, run[static_cast<std::size_t>(k)], e);
            self(self, k + 1);
        }
    };
    for (std::size_t s0 = 0; s0 < n0; ++s0) {
        if (!start_ok[s0]) continue;
        seq[0] = s0;
        run[0] = acc.initial();
        dfs1(dfs1, 0);
    }
    if (!std::isfinite(global)) {
        if (deepest < n_int) throw InfeasibleDiscretization("Omega_k", "stage " + std::to_string(deepest + 1) + " is unreachable");
        throw InfeasibleDiscretization("Omega_N", "no reachable state satisfies the terminal boundary condition");
    }

    // Pass 2: among optimal sequences with optimal prefixes, the smallest key.
    std::vector<std::size_t> best_key;
    std::vector<std::size_t> best_seq;
    auto key_of = [&]() {
        std::vector<std::size_t> key;
        key.reserve(seq.size());
        if (general) key.push_back(seq[0]);
        for (int k = n_int; k >= (general ? 1 : 0); --k) key.push_back(seq[static_cast<std::size_t>(k)]);
        return key;
    };
    auto dfs2 = [&](auto&& self, int k) -> void {
        const std::size_t s0 = seq[0];
        if (run[static_cast<std::size_t>(k)] != prefix_at(s0, k, seq[static_cast<std::size_t>(k)])) return;
        if (k == n_int) {
            if (run[static_cast<std::size_t>(k)] != global || !end_ok(s0, seq[static_cast<std::size_t>(k)])) return;
            auto key = key_of();
            if (best_key.empty() || key < best_key) {
                best_key = std::move(key);
                best_seq = seq;
            }
            return;
        }
        const auto& m = trans[static_cast<std::size_t>(k) + 1];
        const auto w = states[static_cast<std::size_t>(k) + 1].size();
        for (std::size_t q = 0; q < w; ++q) {
            const double e = m[seq[static_cast<std::size_t>(k)] * w + q];
            if (!std::isfinite(e)) continue;
            seq[static_cast<std::size_t>(k) + 1] = q;
            run[static_cast<std::size_t>(k) + 1] = accumulate(acc, run[static_cast<std::size_t>(k)], e);
            self(self, k + 1);
        }
    };
    for (std::size_t s0 = 0; s0 < n0; ++s0) {
        if (!start_ok[s0]) continue;
        seq[0] = s0;
        run[0] = acc.initial();
        dfs2(dfs2, 0);
    }
    return {global, best_seq};
}

StateGrid refine_tube(const std::vector<DpState>& incumbent, const StateGrid& grid, double shrink) {
    if (!(shrink > 0.0 && shrink <= 1.0)) throw DomainError("tube shrink factor must lie in (0, 1]");
    StateGrid out;
    for (std::size_t k = 0; k < incumbent.size(); ++k) {
        const auto& g = grid.node(static_cast<int>(k));
        const auto& st = incumbent[k];
        std::vector<std::vector<double>> theta;
        std::vector<std::vector<double>> v;
        for (int d = 0; d < g.dim(); ++d) {
            const auto& ta = g.theta_axes()[static_cast<std::size_t>(d)];
            const auto& va = g.v_axes()[static_cast<std::size_t>(d)];
            theta.push_back(tube_axis(st.theta(d), shrink * axis_half_width(ta), ta.size()));
            v.push_back(tube_axis(st.v(d), shrink * axis_half_width(va), va.size()));
        }
        out.nodes.emplace_back(std::move(theta), std::move(v));
    }
    return out;
}

StateGrid refine_tube(const PwlModel& previous, const StateGrid& grid, double shrink) {
    std::vector<DpState> incumbent;
    for (int k = 0; k <= previous.intervals(); ++k)
        incumbent.push_back({k, 0, previous.theta(k), node_slope(previous, k)});
    return refine_tube(incumbent, grid, shrink);
}

namespace {

double incumbent_beta(const BoundaryCondition& bc, const Vec& a, const Vec& c) {
    if (bc.is_separable()) return std::max(std::abs(bc.beta0(a)), std::abs(bc.beta1(c)));
    return std::abs(bc.evaluate(a, c));
}

DpTables tabulate(const Problem& problem, const Mesh& mesh, const StateGrid& grid, const DpConfig& cfg, double eps) {
    if (problem.boundary.is_separable()) return forward_tabulate_separable(problem, mesh, grid, cfg, eps);
    return forward_tabulate_general(problem, mesh, grid, cfg, eps);
}

void record(DpStats& stats, const DpTables& t) {
    for (int k = 0; k < t.stages(); ++k) {
        stats.table_sizes.push_back(t.cost[static_cast<std::size_t>(k)].size());
        stats.admissible_transitions.push_back(t.admissible_transitions[static_cast<std::size_t>(k)]);
        stats.stage_seconds.push_back(t.stage_seconds[static_cast<std::size_t>(k)]);
    }
}

}  // namespace

DpSolution solve_dp(const Problem& problem, const Mesh& mesh, const DpConfig& cfg) {
    StageTimer total;
    if (cfg.eps_cont <= 0.0 || (cfg.eps_beta && *cfg.eps_beta <= 0.0))
        throw DomainError("DP tolerances must be positive");
    if (cfg.tube_iterations < 0) throw DomainError("tube iteration count must be nonnegative");
    const Box vbox = cfg.v_box ? *cfg.v_box : default_v_box(problem, cfg.seed);
    StateGrid grid = discretize_states(problem.state_box, vbox, cfg.theta_points, cfg.v_points);
    double eps = cfg.eps_beta ? *cfg.eps_beta : default_eps_beta(problem, grid, cfg.seed);

    DpStats stats;
    DpTables tables = tabulate(problem, mesh, grid, cfg, eps);
    record(stats, tables);
    Backtracked best = backtrack(tables, problem, mesh, cfg);
    stats.tube_costs.push_back(best.cost);
    stats.eps_beta.push_back(eps);

    for (int it = 0; it < cfg.tube_iterations; ++it) {
        grid = refine_tube(best.path, grid, cfg.shrink);
        if (!cfg.eps_beta) {
            const double held = incumbent_beta(problem.boundary, best.path.front().theta, best.path.back().theta);
            eps = std::max(default_eps_beta(problem, grid, cfg.seed), held);
        }
        tables = tabulate(problem, mesh, grid, cfg, eps);
        record(stats, tables);
        Backtracked next = backtrack(tables, problem, mesh, cfg);
        stats.tube_costs.push_back(next.cost);
        stats.eps_beta.push_back(eps);
        if (next.cost <= best.cost) best = std::move(next);
    }
    stats.total_seconds = total.seconds();
    return {std::move(best.model), best.cost, std::move(best.path), std::move(stats)};
}

std::vector<SpectrumSummary> stiffness_diagnostics(const PwlModel& model, const Problem& problem, int samples) {
    if (samples < 2) throw DomainError("stiffness diagnostics need at least two samples per piece");
    std::vector<SpectrumSummary> out;
    for (const auto& piece : model.pieces()) {
        SpectrumSummary s;
        s.max_real = -kInf;
        s.min_real = kInf;
        const double h = piece.length();
        const double dt = 1e-4 * h;
        auto jac = [&](double t) { return jacobian_at(problem, propagate_piece(piece, t), t); };
        for (int j = 0; j < samples; ++j) {
            const double t = piece.start() + h * j / (samples - 1);
            const Mat a = jac(t);
            Eigen::EigenSolver<Mat> es(a, false);
            for (const auto& lam : es.eigenvalues()) {
                s.max_real = std::max(s.max_real, lam.real());
                s.min_real = std::min(s.min_real, lam.real());
                s.max_abs_imag = std::max(s.max_abs_imag, std::abs(lam.imag()));
            }
            const double lo = std::max(piece.start(), t - dt);
            const double hi = std::min(piece.end(), t + dt);
            const Mat da = (jac(hi) - jac(lo)) / (hi - lo);
            Eigen::EigenSolver<Mat> ed(da, false);
            for (const auto& lam : ed.eigenvalues()) s.drift = std::max(s.drift, std::abs(lam));
        }
        out.push_back(s);
    }
    return out;
}

}  // namespace pwlbvp
