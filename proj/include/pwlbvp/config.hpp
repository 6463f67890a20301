#pragma once

#include "pwlbvp/dp_solver.hpp"
#include "pwlbvp/mesh.hpp"
#include "pwlbvp/problems.hpp"
#include "pwlbvp/refine.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace pwlbvp {

struct RunConfig {
    ProblemSpec problem;
    int intervals = 8;
    std::vector<double> nodes;  ///< explicit mesh; overrides `intervals` when set
    DpConfig dp;
    bool refine_enabled = true;
    RefineConfig refine;
    std::string output_dir = "out";
    int samples = 201;

    Mesh mesh() const;
};

/// INI-style configuration with sections [problem], [mesh], [dp], [refine],
/// [output]. Unknown sections or keys are a ConfigError naming the line.
RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_text(std::string_view text);

}  // namespace pwlbvp
