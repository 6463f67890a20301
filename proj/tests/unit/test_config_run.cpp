#include "doctest.h"

#include "json.hpp"

#include "pwlbvp/config.hpp"
#include "pwlbvp/errors.hpp"
#include "pwlbvp/run.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace pwlbvp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("pwlbvp_unit_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::vector<std::string> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(cell);
        rows.push_back(row);
    }
    return rows;
}

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

int error_line(const std::string& text) {
    try {
        parse_config_text(text);
    } catch (const ConfigError& e) {
        return e.line();
    }
    return -1;
}

RunConfig with_dir(RunConfig cfg, const fs::path& dir) {
    cfg.output_dir = dir.string();
    return cfg;
}

const char* kLine = R"(
[problem]
dim = 1
f1 = 1
beta0 = x1
box_lo = 0
box_hi = 1

[mesh]
N = 4

[dp]
theta_points = 5
v_points = 3
v_lo = 0.5
v_hi = 1.5
tube_iterations = 0
)";

}  // namespace

TEST_CASE("config defaults and keys") {
    RunConfig cfg = parse_config_text("[problem]\nbuiltin = logistic\n");
    CHECK(cfg.problem.builtin == "logistic");
    CHECK(cfg.intervals == 8);
    CHECK(cfg.refine_enabled);
    CHECK(cfg.samples == 201);
    CHECK(cfg.dp.theta_points == 21);
    CHECK(cfg.dp.v_points == 11);
    CHECK(cfg.dp.accumulator.kind() == ErrorAccumulator::Kind::Additive);
    CHECK(cfg.mesh().intervals() == 8);

    RunConfig full = parse_config_text(R"(
# comment
[problem]
builtin = linear_system
param.n = 2
param.L12 = 2

[mesh]
nodes = 0, 0.25, 0.6, 1

[dp]
mode = exponential
candidates = 0,1,-1,0; 0,0,0,0
accumulator = uniform
threads = 2

[refine]
enabled = false
boundary_update = step
correction = pointwise

[output]
dir = somewhere
samples = 11
)");
    CHECK(full.problem.params.at("n") == 2.0);
    CHECK(full.problem.params.at("L12") == 2.0);
    CHECK(full.mesh().intervals() == 3);
    CHECK(full.mesh().node(2) == 0.6);
    CHECK(full.dp.mode == TransitionMode::Exponential);
    REQUIRE(full.dp.candidates.size() == 2);
    CHECK(full.dp.candidates[0](0, 1) == 1.0);
    CHECK(full.dp.candidates[0](1, 0) == -1.0);
    CHECK(full.dp.accumulator.kind() == ErrorAccumulator::Kind::UniformMax);
    CHECK(full.dp.threads == 2);
    CHECK_FALSE(full.refine_enabled);
    CHECK(full.refine.boundary_update == BoundaryUpdate::Step);
    CHECK(full.refine.correction == CorrectionMode::Pointwise);
    CHECK(full.output_dir == "somewhere");
    CHECK(full.samples == 11);
}

TEST_CASE("config errors name the line") {
    CHECK(error_line("[problem]\nbuiltin = logistic\n[dp]\nacumulator = additive\n") == 4);
    try {
        parse_config_text("[problem]\nbuiltin = logistic\n[dp]\nacumulator = additive\n");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("acumulator") != std::string::npos);
    }
    CHECK(error_line("[problem]\nbuiltin = logistic\n[mesh]\nN = 1\n") == 4);
    try {
        parse_config_text("[problem]\nbuiltin = logistic\n[mesh]\nN = 1\n");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("N must be >= 2") != std::string::npos);
    }
    CHECK(error_line("[problem]\nbuiltin = logistic\n[solver]\n") == 3);
    CHECK(error_line("[problem]\nbuiltin = logistic\n[dp]\ntheta_points = many\n") == 4);
    CHECK(error_line("[problem]\nbuiltin = logistic\n[dp]\nmode = spline\n") == 4);
    CHECK(error_line("builtin = logistic\n") == 1);
    CHECK(error_line("[problem]\nbuiltin logistic\n") == 2);
    CHECK(error_line("[problem\n") == 1);
    CHECK(error_line("[problem]\ndim = 2\nf1 = x2\n") == 3);
    CHECK(error_line("[problem]\nbuiltin = logistic\n[dp]\nmode = exponential\n") == 0);
    CHECK_THROWS_AS(parse_config("/nonexistent/pwlbvp.ini"), ConfigError);
}

TEST_CASE("output directory override") {
    RunConfig cfg;
    cfg.output_dir = "configured";
    unsetenv("PWLBVP_OUTPUT_DIR");
    CHECK(resolve_output_dir(cfg) == fs::path("configured"));
    setenv("PWLBVP_OUTPUT_DIR", "from_env", 1);
    CHECK(resolve_output_dir(cfg) == fs::path("from_env"));
    unsetenv("PWLBVP_OUTPUT_DIR");
}

TEST_CASE("run solves the straight line exactly") {
    unsetenv("PWLBVP_OUTPUT_DIR");
    const fs::path dir = scratch("line");
    auto outcome = run(with_dir(parse_config_text(kLine), dir));
    CHECK(outcome.exit_code == kExitOk);
    for (const char* f : {"solution.json", "trajectory.csv", "plot.csv", "dp_stats.json", "convergence.json",
                          "diagnostics.json"})
        CHECK(fs::exists(dir / f));
    CHECK_FALSE(fs::exists(dir / "error.json"));

    auto rows = read_csv(dir / "trajectory.csv");
    REQUIRE(rows.size() == 202);
    CHECK(rows[0].back() == "residual_norm");
    for (std::size_t i = 1; i < rows.size(); ++i) {
        CHECK(std::stod(rows[i].back()) <= 1e-10);
        CHECK(std::abs(std::stod(rows[i][1]) - std::stod(rows[i][0])) <= 1e-10);
    }
    auto sol = read_json(dir / "solution.json");
    CHECK(sol["total_error"]["additive"].get<double>() <= 1e-20);
    CHECK(sol["beta_residual"].get<double>() <= 1e-12);

    auto loaded = load_solution(dir / "solution.json");
    CHECK(loaded.spec.field == std::vector<std::string>{"1"});
    CHECK(std::abs(eval_model(loaded.model, 0.3)(0) - 0.3) <= 1e-12);
    fs::remove_all(dir);
}

TEST_CASE("run reports infeasible discretizations") {
    unsetenv("PWLBVP_OUTPUT_DIR");
    const fs::path dir = scratch("infeasible");
    std::string text = kLine;
    text.replace(text.find("beta0 = x1"), 10, "beta0 = x1 - 0.123");
    text += "eps_beta = 1e-9\n";
    auto outcome = run(with_dir(parse_config_text(text), dir));
    CHECK(outcome.exit_code == kExitInfeasible);
    REQUIRE(fs::exists(dir / "error.json"));
    CHECK_FALSE(fs::exists(dir / "solution.json"));
    auto err = read_json(dir / "error.json");
    CHECK(err["error"] == "infeasible_discretization");
    CHECK(err["constraint"].get<std::string>().find("Omega") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("run on logistic improves on the DP model and is deterministic") {
    unsetenv("PWLBVP_OUTPUT_DIR");
    RunConfig cfg = parse_config(fs::path(PWLBVP_SOURCE_DIR) / "configs" / "logistic.ini");
    const fs::path a = scratch("logistic_a");
    const fs::path b = scratch("logistic_b");
    REQUIRE(run(with_dir(cfg, a)).exit_code == kExitOk);
    REQUIRE(run(with_dir(cfg, b)).exit_code == kExitOk);

    auto sol = read_json(a / "solution.json");
    auto stats = read_json(a / "dp_stats.json");
    CHECK(sol["source"] == "refine");
    CHECK(sol["total_error"]["additive"].get<double>() <= stats["dp_total_error"]["additive"].get<double>());
    auto conv = read_json(a / "convergence.json");
    CHECK(conv["converged"].get<bool>());

    for (const char* f : {"solution.json", "trajectory.csv", "plot.csv", "convergence.json", "diagnostics.json"})
        CHECK(slurp(a / f) == slurp(b / f));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("emit_plot_data rereads bit-exactly") {
    Mesh mesh = Mesh::uniform(5);
    std::vector<Vec> vals, slopes;
    for (double t : mesh.nodes()) {
        vals.push_back(Vec::Constant(1, std::sin(3 * t)));
        slopes.push_back(Vec::Constant(1, 3 * std::cos(3 * t)));
    }
    auto model = PwlModel::hermite(mesh, vals, slopes);
    Problem p = builtin("logistic");
    const fs::path dir = scratch("plot");
    fs::create_directories(dir);
    emit_plot_data(model, p, dir / "plot.csv");
    auto rows = read_csv(dir / "plot.csv");
    REQUIRE(rows.size() == 202);
    CHECK(rows[0] == std::vector<std::string>{"t", "x1", "residual_norm"});
    for (std::size_t i = 1; i < rows.size(); ++i) {
        REQUIRE(rows[i].size() == 3);
        const double t = std::strtod(rows[i][0].c_str(), nullptr);
        CHECK(t == static_cast<double>(i - 1) / 200);
        const Vec x = eval_model(model, t);
        CHECK(std::strtod(rows[i][1].c_str(), nullptr) == x(0));
        CHECK(std::strtod(rows[i][2].c_str(), nullptr) == (model_derivative(model, t) - p.f(x, t)).norm());
    }
    const std::string first = slurp(dir / "plot.csv");
    emit_plot_data(model, p, dir / "plot.csv");
    CHECK(slurp(dir / "plot.csv") == first);
    CHECK_THROWS_AS(emit_plot_data(model, p, dir / "plot.csv", 1), DomainError);

    emit_control(model, p, dir / "control.csv", 11);
    auto crow = read_csv(dir / "control.csv");
    REQUIRE(crow.size() == 12);
    CHECK(crow[0] == std::vector<std::string>{"t", "u1"});
    fs::remove_all(dir);
}

TEST_CASE("inline comments are stripped") {
    RunConfig cfg = parse_config_text("[problem]  # section\nbuiltin = logistic # the builtin\n[mesh]\nN = 4 # intervals\n");
    CHECK(cfg.problem.builtin == "logistic");
    CHECK(cfg.intervals == 4);
}
