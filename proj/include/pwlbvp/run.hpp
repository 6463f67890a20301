#pragma once

#include "pwlbvp/config.hpp"
#include "pwlbvp/model.hpp"
#include "pwlbvp/problem.hpp"

#include <filesystem>
#include <string>

namespace pwlbvp {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitInfeasible = 2, kExitDiverged = 3 };

struct RunOutcome {
    int exit_code = kExitOk;
    std::filesystem::path output_dir;
    std::string message;
};

/// Output directory: $PWLBVP_OUTPUT_DIR when set, else the configured one.
std::filesystem::path resolve_output_dir(const RunConfig& cfg);

/// DP, tube iterations and refinement; writes solution.json, trajectory.csv,
/// plot.csv, dp_stats.json, convergence.json and diagnostics.json, or
/// error.json on failure.
RunOutcome run(const RunConfig& cfg);

/// CSV "t,x1..xn,residual_norm" at `samples` uniform times.
void emit_plot_data(const PwlModel& model, const Problem& problem, const std::filesystem::path& path,
                    int samples = 201);

/// CSV "t,u1..un" of the control along the model.
void emit_control(const PwlModel& model, const Problem& problem, const std::filesystem::path& path,
                  int samples = 201);

struct LoadedSolution {
    ProblemSpec spec;
    PwlModel model;
};

/// Reads back the problem description and model of a solution.json.
LoadedSolution load_solution(const std::filesystem::path& path);

}  // namespace pwlbvp
