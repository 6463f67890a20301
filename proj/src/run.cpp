#include "pwlbvp/run.hpp"

#include "pwlbvp/dp_solver.hpp"
#include "pwlbvp/error_functionals.hpp"
#include "pwlbvp/errors.hpp"
#include "pwlbvp/problems.hpp"
#include "pwlbvp/refine.hpp"

#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>

namespace pwlbvp {

using nlohmann::json;

namespace {

const char* const kArtifacts[] = {"solution.json",    "trajectory.csv",   "plot.csv",  "dp_stats.json",
                                  "convergence.json", "diagnostics.json", "error.json"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) out << (i ? "," : "") << csv_field(fields[i]);
    out << "\r\n";
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    return out;
}

void write_json(const std::filesystem::path& path, const json& j) {
    auto out = open_out(path);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

json vec_json(const Vec& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

json mat_json(const Mat& m) {
    json a = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        a.push_back(row);
    }
    return a;
}

Vec json_vec(const json& j) {
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
}

Mat json_mat(const json& j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
    return m;
}

json spec_json(const ProblemSpec& spec) {
    json j;
    if (spec.is_builtin()) {
        j["builtin"] = spec.builtin;
        j["params"] = json::object();
        for (const auto& [k, v] : spec.params) j["params"][k] = v;
    } else {
        j["dim"] = spec.dim;
        j["field"] = spec.field;
        j["beta0"] = spec.beta0;
        j["beta1"] = spec.beta1;
        j["beta"] = spec.beta;
    }
    if (spec.box) j["box"] = {{"lo", vec_json(spec.box->lower)}, {"hi", vec_json(spec.box->upper)}};
    return j;
}

ProblemSpec json_spec(const json& j) {
    ProblemSpec spec;
    if (j.contains("builtin")) {
        spec.builtin = j.at("builtin").get<std::string>();
        for (const auto& [k, v] : j.at("params").items()) spec.params[k] = v.get<double>();
    } else {
        spec.dim = j.at("dim").get<int>();
        spec.field = j.at("field").get<std::vector<std::string>>();
        spec.beta0 = j.at("beta0").get<std::string>();
        spec.beta1 = j.at("beta1").get<std::string>();
        spec.beta = j.at("beta").get<std::string>();
    }
    if (j.contains("box")) spec.box = Box{json_vec(j["box"]["lo"]), json_vec(j["box"]["hi"])};
    return spec;
}

json model_json(const PwlModel& model) {
    json pieces = json::array();
    for (const auto& p : model.pieces()) {
        json a = json::array();
        for (const auto& m : p.a_coeffs()) a.push_back(mat_json(m));
        json b = json::array();
        for (const auto& v : p.b_coeffs()) b.push_back(vec_json(v));
        pieces.push_back({{"start", p.start()}, {"end", p.end()}, {"theta", vec_json(p.theta())}, {"a", a}, {"b", b}});
    }
    return pieces;
}

const char* mode_name(TransitionMode m) { return m == TransitionMode::Hermite ? "hermite" : "exponential"; }

void write_trajectory(const PwlModel& model, const Problem& problem, const std::filesystem::path& path, int samples) {
    auto out = open_out(path);
    const int n = model.dim();
    std::vector<std::string> header{"t"};
    for (int i = 1; i <= n; ++i) header.push_back("x" + std::to_string(i));
    for (int i = 1; i <= n; ++i) header.push_back("dx" + std::to_string(i));
    for (int i = 1; i <= n; ++i) header.push_back("f" + std::to_string(i));
    header.emplace_back("residual_norm");
    write_csv_row(out, header);
    for (int s = 0; s < samples; ++s) {
        const double t = static_cast<double>(s) / (samples - 1);
        const Vec x = eval_model(model, t);
        const Vec dx = model_derivative(model, t);
        const Vec f = problem.f(x, t);
        std::vector<std::string> row{num(t)};
        for (int i = 0; i < n; ++i) row.push_back(num(x(i)));
        for (int i = 0; i < n; ++i) row.push_back(num(dx(i)));
        for (int i = 0; i < n; ++i) row.push_back(num(f(i)));
        row.push_back(num((dx - f).norm()));
        write_csv_row(out, row);
    }
}

json convergence_json(const ConvergenceLog& log, bool enabled, bool accepted, int intervals) {
    json entries = json::array();
    for (const auto& e : log.entries) {
        entries.push_back({{"iteration", e.iteration},
                           {"residual_l2", e.residual_l2},
                           {"residual_sup", e.residual_sup},
                           {"beta", e.beta},
                           {"eta_norm", e.eta_norm},
                           {"step", e.step}});
    }
    return {{"enabled", enabled},
            {"converged", log.converged},
            {"diverged", log.diverged},
            {"returned_iteration", log.returned_iteration},
            {"accepted", accepted},
            {"intervals", intervals},
            {"warnings", log.warnings},
            {"entries", entries}};
}

void write_error(const std::filesystem::path& dir, const std::string& kind, const std::string& message,
                 const std::string& constraint = {}) {
    json j{{"error", kind}, {"message", message}};
    if (!constraint.empty()) j["constraint"] = constraint;
    try {
        write_json(dir / "error.json", j);
    } catch (const std::exception&) {
    }
}

void clear_artifacts(const std::filesystem::path& dir) {
    for (const char* name : kArtifacts) {
        std::error_code ec;
        std::filesystem::remove(dir / name, ec);
    }
}

}  // namespace

std::filesystem::path resolve_output_dir(const RunConfig& cfg) {
    if (const char* env = std::getenv("PWLBVP_OUTPUT_DIR"); env && *env) return env;
    return cfg.output_dir;
}

void emit_plot_data(const PwlModel& model, const Problem& problem, const std::filesystem::path& path, int samples) {
    if (samples < 2) throw DomainError("plot data needs at least two samples");
    auto out = open_out(path);
    const int n = model.dim();
    std::vector<std::string> header{"t"};
    for (int i = 1; i <= n; ++i) header.push_back("x" + std::to_string(i));
    header.emplace_back("residual_norm");
    write_csv_row(out, header);
    for (int s = 0; s < samples; ++s) {
        const double t = static_cast<double>(s) / (samples - 1);
        const Vec x = eval_model(model, t);
        std::vector<std::string> row{num(t)};
        for (int i = 0; i < n; ++i) row.push_back(num(x(i)));
        row.push_back(num((model_derivative(model, t) - problem.f(x, t)).norm()));
        write_csv_row(out, row);
    }
    if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

void emit_control(const PwlModel& model, const Problem& problem, const std::filesystem::path& path, int samples) {
    if (samples < 2) throw DomainError("control output needs at least two samples");
    const VectorFn u = make_control(model, problem);
    auto out = open_out(path);
    std::vector<std::string> header{"t"};
    for (int i = 1; i <= model.dim(); ++i) header.push_back("u" + std::to_string(i));
    write_csv_row(out, header);
    for (int s = 0; s < samples; ++s) {
        const double t = static_cast<double>(s) / (samples - 1);
        const Vec v = u(t);
        std::vector<std::string> row{num(t)};
        for (Eigen::Index i = 0; i < v.size(); ++i) row.push_back(num(v(i)));
        write_csv_row(out, row);
    }
}

LoadedSolution load_solution(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    const json j = json::parse(in);
    ProblemSpec spec = json_spec(j.at("problem"));
    const auto nodes = j.at("mesh").get<std::vector<double>>();
    std::vector<Piece> pieces;
    for (const auto& p : j.at("pieces")) {
        std::vector<Mat> a;
        for (const auto& m : p.at("a")) a.push_back(json_mat(m));
        std::vector<Vec> b;
        for (const auto& v : p.at("b")) b.push_back(json_vec(v));
        pieces.emplace_back(p.at("start").get<double>(), p.at("end").get<double>(), std::move(a), std::move(b),
                            json_vec(p.at("theta")));
    }
    return {std::move(spec), PwlModel(Mesh(nodes), std::move(pieces), json_vec(j.at("theta_N")))};
}

RunOutcome run(const RunConfig& cfg) {
    RunOutcome outcome;
    outcome.output_dir = resolve_output_dir(cfg);
    const auto& dir = outcome.output_dir;
    try {
        std::filesystem::create_directories(dir);
    } catch (const std::exception& e) {
        outcome.exit_code = kExitFailure;
        outcome.message = e.what();
        return outcome;
    }
    clear_artifacts(dir);

    try {
        const Problem problem = make_problem(cfg.problem);
        const Mesh mesh = cfg.mesh();
        const DpSolution dp = solve_dp(problem, mesh, cfg.dp);

        const ErrorSettings& settings = cfg.dp.error;
        const double dp_additive = total_error(dp.model, problem.field, ErrorAccumulator::additive(), settings);

        PwlModel final_model = dp.model;
        std::string source = "dp";
        ConvergenceLog log;
        bool accepted = false;
        int refine_intervals = 0;
        if (cfg.refine_enabled) {
            RefineResult refined = refine_loop(dp.model, problem, cfg.refine);
            log = refined.log;
            refine_intervals = refined.model.intervals();
            const double refined_additive =
                total_error(refined.model, problem.field, ErrorAccumulator::additive(), settings);
            if (refined_additive <= dp_additive) {
                final_model = refined.model;
                source = "refine";
                accepted = true;
            }
        }

        const double additive = total_error(final_model, problem.field, ErrorAccumulator::additive(), settings);
        const double uniform = total_error(final_model, problem.field, ErrorAccumulator::uniform_max(), settings);
        const double beta = problem.boundary.residuals(final_model.theta(0), final_model.theta_end()).norm();

        json node_states = json::array();
        for (int k = 0; k <= final_model.intervals(); ++k) {
            node_states.push_back({{"t", final_model.mesh().node(k)},
                                   {"theta", vec_json(final_model.theta(k))},
                                   {"slope", vec_json(node_slope(final_model, k))}});
        }
        std::vector<double> mesh_nodes(final_model.mesh().nodes().begin(), final_model.mesh().nodes().end());
        json solution{{"problem", spec_json(cfg.problem)},
                      {"dim", final_model.dim()},
                      {"source", source},
                      {"mode", mode_name(cfg.dp.mode)},
                      {"dp_cost", dp.cost},
                      {"mesh", mesh_nodes},
                      {"pieces", model_json(final_model)},
                      {"node_states", node_states},
                      {"theta_0", vec_json(final_model.theta(0))},
                      {"theta_N", vec_json(final_model.theta_end())},
                      {"total_error", {{"additive", additive}, {"uniform", uniform}}},
                      {"beta_residual", beta}};
        write_json(dir / "solution.json", solution);
        write_trajectory(final_model, problem, dir / "trajectory.csv", cfg.samples);
        emit_plot_data(final_model, problem, dir / "plot.csv", cfg.samples);

        json stats{{"table_sizes", dp.stats.table_sizes},
                   {"admissible_transitions", dp.stats.admissible_transitions},
                   {"stage_seconds", dp.stats.stage_seconds},
                   {"tube_costs", dp.stats.tube_costs},
                   {"eps_beta", dp.stats.eps_beta},
                   {"total_seconds", dp.stats.total_seconds},
                   {"dp_cost", dp.cost},
                   {"dp_total_error", {{"additive", dp_additive}}},
                   {"threads", cfg.dp.threads}};
        write_json(dir / "dp_stats.json", stats);
        write_json(dir / "convergence.json", convergence_json(log, cfg.refine_enabled, accepted, refine_intervals));

        json pieces = json::array();
        const auto spectra = stiffness_diagnostics(final_model, problem);
        for (std::size_t i = 0; i < spectra.size(); ++i) {
            const auto& p = final_model.piece(static_cast<int>(i));
            pieces.push_back({{"start", p.start()},
                              {"end", p.end()},
                              {"max_real", spectra[i].max_real},
                              {"min_real", spectra[i].min_real},
                              {"max_abs_imag", spectra[i].max_abs_imag},
                              {"drift", spectra[i].drift}});
        }
        write_json(dir / "diagnostics.json", {{"pieces", pieces}});

        if (log.diverged) {
            outcome.exit_code = kExitDiverged;
            outcome.message = "refinement diverged; best iterate written";
        } else {
            outcome.message = "solved: additive error " + num(additive);
        }
        return outcome;
    } catch (const InfeasibleDiscretization& e) {
        clear_artifacts(dir);
        write_error(dir, "infeasible_discretization", e.what(), e.constraint());
        outcome.exit_code = kExitInfeasible;
        outcome.message = std::string(e.what()) + " (" + e.constraint() + ")";
    } catch (const std::exception& e) {
        clear_artifacts(dir);
        write_error(dir, "failure", e.what());
        outcome.exit_code = kExitFailure;
        outcome.message = e.what();
    }
    return outcome;
}

}  // namespace pwlbvp
