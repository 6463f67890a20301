#include "pwlbvp/config.hpp"

#include "pwlbvp/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace pwlbvp {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) out.push_back(trim(item));
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

double to_double(const std::string& v, int line, const std::string& key) {
    double out = 0.0;
    const auto* end = v.data() + v.size();
    const auto res = std::from_chars(v.data(), end, out);
    if (v.empty() || res.ec != std::errc() || res.ptr != end)
        throw ConfigError(line, "key '" + key + "' expects a number, got '" + v + "'");
    return out;
}

int to_int(const std::string& v, int line, const std::string& key) {
    int out = 0;
    const auto* end = v.data() + v.size();
    const auto res = std::from_chars(v.data(), end, out);
    if (v.empty() || res.ec != std::errc() || res.ptr != end)
        throw ConfigError(line, "key '" + key + "' expects an integer, got '" + v + "'");
    return out;
}

bool to_bool(const std::string& v, int line, const std::string& key) {
    const auto l = lower(v);
    if (l == "true" || l == "yes" || l == "on" || l == "1") return true;
    if (l == "false" || l == "no" || l == "off" || l == "0") return false;
    throw ConfigError(line, "key '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<double> to_list(const std::string& v, int line, const std::string& key) {
    std::vector<double> out;
    for (const auto& item : split(v, ',')) out.push_back(to_double(item, line, key));
    return out;
}

template <class E>
E to_enum(const std::string& v, const std::map<std::string, E>& names, int line, const std::string& key) {
    auto it = names.find(lower(v));
    if (it != names.end()) return it->second;
    std::string allowed;
    for (const auto& [n, _] : names) allowed += (allowed.empty() ? "" : ", ") + n;
    throw ConfigError(line, "key '" + key + "' must be one of: " + allowed);
}

struct Pending {
    std::vector<double> box_lo, box_hi, v_lo, v_hi;
    int box_line = 0, v_line = 0;
    std::string candidates;
    int candidates_line = 0;
    std::map<int, std::string> field;
    int field_line = 0;
};

using Handler = std::function<void(const std::string&, int, const std::string&)>;

void positive(double v, int line, const std::string& key) {
    if (!(v > 0.0)) throw ConfigError(line, "key '" + key + "' must be positive");
}

}  // namespace

Mesh RunConfig::mesh() const {
    if (!nodes.empty()) return Mesh(nodes);
    return Mesh::uniform(intervals);
}

RunConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(0, "cannot open config file '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

RunConfig parse_config_text(std::string_view text) {
    RunConfig cfg;
    Pending pend;

    std::map<std::string, std::map<std::string, Handler>> sections;
    auto& problem = sections["problem"];
    problem["builtin"] = [&](const std::string& v, int, const std::string&) { cfg.problem.builtin = v; };
    problem["dim"] = [&](const std::string& v, int l, const std::string& k) { cfg.problem.dim = to_int(v, l, k); };
    problem["beta0"] = [&](const std::string& v, int, const std::string&) { cfg.problem.beta0 = v; };
    problem["beta1"] = [&](const std::string& v, int, const std::string&) { cfg.problem.beta1 = v; };
    problem["beta"] = [&](const std::string& v, int, const std::string&) { cfg.problem.beta = v; };
    problem["box_lo"] = [&](const std::string& v, int l, const std::string& k) {
        pend.box_lo = to_list(v, l, k);
        pend.box_line = l;
    };
    problem["box_hi"] = [&](const std::string& v, int l, const std::string& k) {
        pend.box_hi = to_list(v, l, k);
        pend.box_line = l;
    };

    auto& mesh = sections["mesh"];
    mesh["n"] = [&](const std::string& v, int l, const std::string& k) {
        cfg.intervals = to_int(v, l, k);
        if (cfg.intervals < 2) throw ConfigError(l, "N must be >= 2 (got " + v + ")");
    };
    mesh["nodes"] = [&](const std::string& v, int l, const std::string& k) {
        cfg.nodes = to_list(v, l, k);
        try {
            (void)Mesh(cfg.nodes);
        } catch (const DomainError& e) {
            throw ConfigError(l, e.what());
        }
    };

    auto& dp = sections["dp"];
    dp["mode"] = [&](const std::string& v, int l, const std::string& k) {
        cfg.dp.mode = to_enum<TransitionMode>(
            v, {{"hermite", TransitionMode::Hermite}, {"exponential", TransitionMode::Exponential}}, l, k);
    };
    dp["accumulator"] = [&](const std::string& v, int l, const std::string& k) {
        const bool uniform = to_enum<bool>(v, {{"additive", false}, {"uniform", true}}, l, k);
        cfg.dp.accumulator = uniform ? ErrorAccumulator::uniform_max() : ErrorAccumulator::additive();
    };
    dp["candidates"] = [&](const std::string& v, int l, const std::string&) {
        pend.candidates = v;
        pend.candidates_line = l;
    };
    dp["theta_points"] = [&](const std::string& v, int l, const std::string& k) {
        cfg.dp.theta_points = to_int(v, l, k);
        if (cfg.dp.theta_points < 1) throw ConfigError(l, "theta_points must be >= 1");
    };
    dp["v_points"] = [&](const std::string& v, int l, const std::string& k) {
        cfg.dp.v_points = to_int(v, l, k);
        if (cfg.dp.v_points < 1) throw ConfigError(l, "v_points must be >= 1");
    };
    dp["v_lo"] = [&](const std::string& v, int l, const std::string& k) {
        pend.v_lo = to_list(v, l, k);
        pend.v_line = l;
    };
    dp["v_hi"] = [&](const std::string& v, int l, const std::string& k) {
        pend.v_hi = to_list(v, l, k);
        pend.v_line = l;
    };
    dp["eps_beta"] = [&](const std::string& v, int l, const std::string& k) {
        cfg.dp.eps_beta = to_double(v, l, k);
        positive(*cfg.dp.eps_beta, l, k);
    };
    dp["eps_cont"] = [&](const std::string& v, int l, const std::string& k) {
        cfg.dp.eps_cont = to_double(v, l, k);
        positive(cfg.dp.eps_cont, l, k);
    };
    dp["tube_iterations"] = [&](const std::string& v, int l, const std::string& k) {
        cfg.dp.tube_iterations = to_int(v, l, k);
        if (cfg.dp.tube_iterations < 0) throw ConfigError(l, "tube_iterations must be >= 0");
    };
    dp["shrink"] = [&](const std::string& v, int l, const std::string& k) {
        cfg.dp.shrink = to_double(v, l, k);
        if (!(cfg.dp.shrink > 0.0 && cfg.dp.shrink <= 1.0)) throw ConfigError(l, "shrink must lie in (0, 1]");
    };
    dp["quad_order"] = [&](const std::string& v, int l, const std::string& k) {
        const int order = to_int(v, l, k);
        if (order < 1) throw ConfigError(l, "quad_order must be >= 1");
        cfg.dp.error.quad = QuadratureRule(order, 1);
    };
    dp["sup_samples"] = [&](const std::string& v, int l, const std::string& k) {
        cfg.dp.error.samples.points = to_int(v, l, k);
        if (cfg.dp.error.samples.points < 2) throw ConfigError(l, "sup_samples must be >= 2");
    };
    dp["threads"] = [&](const std::string& v, int l, const std::string& k) {
        const int t = to_int(v, l, k);
        if (t < 0) throw ConfigError(l, "threads must be >= 0");
        cfg.dp.threads = static_cast<unsigned>(t);
    };
    dp["seed"] = [&](const std::string& v, int l, const std::string& k) {
        std::uint64_t seed = 0;
        const auto* end = v.data() + v.size();
        const auto res = std::from_chars(v.data(), end, seed);
        if (v.empty() || res.ec != std::errc() || res.ptr != end)
            throw ConfigError(l, "key '" + k + "' expects a nonnegative integer");
        cfg.dp.seed = seed;
    };

    auto& refine = sections["refine"];
    refine["enabled"] = [&](const std::string& v, int l, const std::string& k) { cfg.refine_enabled = to_bool(v, l, k); };
    refine["max_iterations"] = [&](const std::string& v, int l, const std::string& k) {
        cfg.refine.max_iterations = to_int(v, l, k);
        if (cfg.refine.max_iterations < 0) throw ConfigError(l, "max_iterations must be >= 0");
    };
    refine["residual_tol"] = [&](const std::string& v, int l, const std::string& k) {
        cfg.refine.residual_tol = to_double(v, l, k);
        positive(cfg.refine.residual_tol, l, k);
    };
    refine["boundary_tol"] = [&](const std::string& v, int l, const std::string& k) {
        cfg.refine.boundary_tol = to_double(v, l, k);
        positive(cfg.refine.boundary_tol, l, k);
    };
    refine["eta_source"] = [&](const std::string& v, int l, const std::string& k) {
        cfg.refine.eta_source =
            to_enum<EtaSource>(v, {{"boundary", EtaSource::Boundary}, {"objective", EtaSource::Objective}}, l, k);
    };
    refine["eta_strategy"] = [&](const std::string& v, int l, const std::string& k) {
        cfg.refine.eta_strategy = to_enum<EtaStrategy>(v,
                                                       {{"gradient", EtaStrategy::GradientDescent},
                                                        {"newton", EtaStrategy::NewtonHessian},
                                                        {"closed_form", EtaStrategy::ClosedFormQuadratic}},
                                                       l, k);
    };
    refine["boundary_update"] = [&](const std::string& v, int l, const std::string& k) {
        cfg.refine.boundary_update =
            to_enum<BoundaryUpdate>(v, {{"newton", BoundaryUpdate::Newton}, {"step", BoundaryUpdate::Step}}, l, k);
    };
    refine["correction"] = [&](const std::string& v, int l, const std::string& k) {
        cfg.refine.correction = to_enum<CorrectionMode>(
            v, {{"zero_iv", CorrectionMode::ZeroInitialValue}, {"pointwise", CorrectionMode::Pointwise}}, l, k);
    };
    refine["search_bound"] = [&](const std::string& v, int l, const std::string& k) {
        cfg.refine.search_bound = to_double(v, l, k);
        positive(cfg.refine.search_bound, l, k);
    };
    refine["search_tol"] = [&](const std::string& v, int l, const std::string& k) {
        cfg.refine.search_tol = to_double(v, l, k);
        positive(cfg.refine.search_tol, l, k);
    };
    refine["min_intervals"] = [&](const std::string& v, int l, const std::string& k) {
        cfg.refine.min_intervals = to_int(v, l, k);
        if (cfg.refine.min_intervals < 1) throw ConfigError(l, "min_intervals must be >= 1");
    };
    refine["substeps"] = [&](const std::string& v, int l, const std::string& k) {
        cfg.refine.flow.substeps = to_int(v, l, k);
        if (cfg.refine.flow.substeps < 1) throw ConfigError(l, "substeps must be >= 1");
    };

    auto& output = sections["output"];
    output["dir"] = [&](const std::string& v, int, const std::string&) { cfg.output_dir = v; };
    output["samples"] = [&](const std::string& v, int l, const std::string& k) {
        cfg.samples = to_int(v, l, k);
        if (cfg.samples < 2) throw ConfigError(l, "samples must be >= 2");
    };

    std::string section;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        const std::string s = trim(raw);
        if (s.empty() || s[0] == ';') continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw ConfigError(line, "malformed section header");
            section = lower(trim(std::string_view(s).substr(1, s.size() - 2)));
            if (!sections.count(section)) throw ConfigError(line, "unknown section [" + section + "]");
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError(line, "expected 'key = value'");
        const std::string key = trim(std::string_view(s).substr(0, eq));
        const std::string value = trim(std::string_view(s).substr(eq + 1));
        if (key.empty()) throw ConfigError(line, "missing key before '='");
        if (section.empty()) throw ConfigError(line, "key '" + key + "' appears before any section");

        if (section == "problem" && key.rfind("param.", 0) == 0) {
            cfg.problem.params[key.substr(6)] = to_double(value, line, key);
            continue;
        }
        if (section == "problem" && key.size() >= 2 && key[0] == 'f' &&
            std::all_of(key.begin() + 1, key.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
            const int i = to_int(key.substr(1), line, key);
            if (i < 1) throw ConfigError(line, "field components are numbered from f1");
            pend.field[i] = value;
            pend.field_line = line;
            continue;
        }
        auto& handlers = sections[section];
        auto it = handlers.find(lower(key));
        if (it == handlers.end()) throw ConfigError(line, "unknown key '" + key + "' in [" + section + "]");
        it->second(value, line, key);
    }

    auto& ps = cfg.problem;
    if (ps.builtin.empty()) {
        if (ps.dim < 1) throw ConfigError(0, "[problem] needs either 'builtin' or 'dim' with field expressions");
        if (!ps.params.empty()) throw ConfigError(0, "param.* keys require a builtin problem");
        for (int i = 1; i <= ps.dim; ++i) {
            auto it = pend.field.find(i);
            if (it == pend.field.end()) throw ConfigError(pend.field_line, "missing field expression f" + std::to_string(i));
            ps.field.push_back(it->second);
        }
        if (static_cast<int>(pend.field.size()) != ps.dim)
            throw ConfigError(pend.field_line, "field expressions beyond dim " + std::to_string(ps.dim));
    } else if (!pend.field.empty() || ps.dim != 0 || !ps.beta0.empty() || !ps.beta1.empty() || !ps.beta.empty()) {
        throw ConfigError(pend.field_line, "a builtin problem takes only param.* keys and an optional box");
    }
    if (!pend.box_lo.empty() || !pend.box_hi.empty()) {
        if (pend.box_lo.size() != pend.box_hi.size() || pend.box_lo.empty())
            throw ConfigError(pend.box_line, "box_lo and box_hi must have the same number of entries");
        ps.box = Box{Eigen::Map<const Vec>(pend.box_lo.data(), static_cast<Eigen::Index>(pend.box_lo.size())),
                     Eigen::Map<const Vec>(pend.box_hi.data(), static_cast<Eigen::Index>(pend.box_hi.size()))};
        if (!((ps.box->upper.array() > ps.box->lower.array()).all()))
            throw ConfigError(pend.box_line, "state box must have box_hi > box_lo in every dimension");
    }
    if (!pend.v_lo.empty() || !pend.v_hi.empty()) {
        if (pend.v_lo.size() != pend.v_hi.size() || pend.v_lo.empty())
            throw ConfigError(pend.v_line, "v_lo and v_hi must have the same number of entries");
        cfg.dp.v_box = Box{Eigen::Map<const Vec>(pend.v_lo.data(), static_cast<Eigen::Index>(pend.v_lo.size())),
                           Eigen::Map<const Vec>(pend.v_hi.data(), static_cast<Eigen::Index>(pend.v_hi.size()))};
    }
    if (!pend.candidates.empty()) {
        for (const auto& item : split(pend.candidates, ';')) {
            const auto values = to_list(item, pend.candidates_line, "candidates");
            const auto n = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(values.size()))));
            if (n * n != static_cast<Eigen::Index>(values.size()))
                throw ConfigError(pend.candidates_line, "each candidate matrix needs n*n comma-separated entries");
            Mat m(n, n);
            for (Eigen::Index r = 0; r < n; ++r)
                for (Eigen::Index c = 0; c < n; ++c) m(r, c) = values[static_cast<std::size_t>(r * n + c)];
            cfg.dp.candidates.push_back(m);
        }
    }
    if (cfg.dp.mode == TransitionMode::Exponential && cfg.dp.candidates.empty())
        throw ConfigError(0, "exponential mode needs [dp] candidates");
    return cfg;
}

}  // namespace pwlbvp
