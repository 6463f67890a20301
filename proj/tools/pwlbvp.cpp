#include "pwlbvp/config.hpp"
#include "pwlbvp/dp_solver.hpp"
#include "pwlbvp/errors.hpp"
#include "pwlbvp/problems.hpp"
#include "pwlbvp/run.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>

using namespace pwlbvp;

namespace {

int do_solve(const std::string& path, const std::string& output) {
    RunConfig cfg = parse_config(path);
    // an explicit -o beats both the environment and the config file
    if (!output.empty()) setenv("PWLBVP_OUTPUT_DIR", output.c_str(), 1);
    const RunOutcome out = run(cfg);
    std::cout << out.message << "\n" << "output: " << out.output_dir.string() << "\n";
    return out.exit_code;
}

int do_validate(const std::string& path) {
    const RunConfig cfg = parse_config(path);
    const Problem problem = make_problem(cfg.problem);
    const Mesh mesh = cfg.mesh();
    std::cout << "config ok\n"
              << "  problem: " << (cfg.problem.is_builtin() ? cfg.problem.builtin : "expressions") << ", dim "
              << problem.dim << ", " << (problem.boundary.is_separable() ? "separable" : "general") << " boundary\n"
              << "  mesh intervals: " << mesh.intervals() << "\n"
              << "  grid: " << cfg.dp.theta_points << " theta x " << cfg.dp.v_points << " v points per dimension\n"
              << "  refine: " << (cfg.refine_enabled ? "on" : "off") << "\n"
              << "  output: " << resolve_output_dir(cfg).string() << "\n";
    return kExitOk;
}

int do_oracle(const std::string& path, double guard) {
    const RunConfig cfg = parse_config(path);
    const Problem problem = make_problem(cfg.problem);
    const Mesh mesh = cfg.mesh();
    const Box vbox = cfg.dp.v_box ? *cfg.dp.v_box : default_v_box(problem, cfg.dp.seed);
    const StateGrid grid = discretize_states(problem.state_box, vbox, cfg.dp.theta_points, cfg.dp.v_points);
    const double eps = cfg.dp.eps_beta ? *cfg.dp.eps_beta : default_eps_beta(problem, grid, cfg.dp.seed);
    const BruteForceResult r = brute_force_solve(problem, mesh, grid, cfg.dp, eps, guard);
    std::printf("cost %.17g\npath", r.cost);
    for (auto s : r.path) std::printf(" %zu", s);
    std::printf("\n");
    for (std::size_t k = 0; k < r.path.size(); ++k) {
        const DpState st = make_state(grid, static_cast<int>(k), r.path[k]);
        std::printf("node %zu theta", k);
        for (Eigen::Index i = 0; i < st.theta.size(); ++i) std::printf(" %.17g", st.theta(i));
        std::printf(" v");
        for (Eigen::Index i = 0; i < st.v.size(); ++i) std::printf(" %.17g", st.v(i));
        std::printf("\n");
    }
    return kExitOk;
}

int do_control(const std::string& path, std::string output, int samples) {
    if (output.empty()) output = (std::filesystem::path(path).parent_path() / "control.csv").string();
    const LoadedSolution sol = load_solution(path);
    const Problem problem = make_problem(sol.spec);
    emit_control(sol.model, problem, output, samples);
    std::cout << "control: " << output << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Piecewise-linear approximation of two-point boundary value problems"};
    app.require_subcommand(1);

    std::string config;
    std::string output;
    auto* solve = app.add_subcommand("solve", "Run DP, tube refinement and Newton refinement");
    solve->add_option("config", config, "Configuration file")->required();
    solve->add_option("-o,--output", output, "Output directory (overrides [output] dir)");

    auto* validate = app.add_subcommand("validate", "Parse a configuration and report");
    validate->add_option("config", config, "Configuration file")->required();

    double guard = 1e6;
    auto* oracle = app.add_subcommand("oracle", "Exhaustive search on the initial grid");
    oracle->add_option("config", config, "Configuration file")->required();
    oracle->add_option("--guard", guard, "Maximum number of state sequences");

    std::string solution;
    std::string control_out;
    int samples = 201;
    auto* control = app.add_subcommand("control", "Write u(t) of a solved model");
    control->add_option("solution", solution, "solution.json")->required();
    control->add_option("-o,--output", control_out, "CSV path (default: control.csv beside the solution)");
    control->add_option("--samples", samples, "Number of uniform samples")->check(CLI::Range(2, 1000000));

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitFailure;
    }

    try {
        if (*solve) return do_solve(config, output);
        if (*validate) return do_validate(config);
        if (*oracle) return do_oracle(config, guard);
        if (*control) return do_control(solution, control_out, samples);
    } catch (const InfeasibleDiscretization& e) {
        std::cerr << "error: " << e.what() << " (" << e.constraint() << ")\n";
        return kExitInfeasible;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitFailure;
}
