#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvs/coefficients.hpp"
#include "mvs/errors.hpp"
#include "mvs/grid.hpp"
#include "mvs/random.hpp"

namespace mvs {

inline constexpr const char* kConfigSchema = "mvs-run/1";

struct GridBlock {
    int dim = 2;
    double M = 2.0;
    double h = 1.0 / 64.0;
};

struct ProblemBlock {
    std::vector<double> R{0.25, 0.5, 1.0};
    Point x0_offset{0.0, 0.0, 0.0};
    std::string route = "lcp";  // lcp | semilinear | variational
    double tol = 1e-8;
    double s = 1e-3;
    double epsilon = 1e-3;
    double omega = 1.7;
    long max_sweeps = 0;  // 0: solver default
};

struct SuitesBlock {
    bool nesting = false;
    bool volume = false;
    bool inclusions = false;
    bool truncation = false;
    bool monotone_average = false;
    bool growth = false;
    bool fb_measure = false;
    bool convergence = false;
    bool comparison = false;
    bool penalty_ordering = false;
    bool cross_route = false;

    std::vector<double> refinement;  // decreasing spacings, each half the previous; default {4h, 2h, h}
    double analysis_R = 0.0;         // R for growth, fb_measure and convergence; default max R
    double volume_tolerance = 0.05;
    double inclusion_tolerance = 0.15;
    std::vector<double> inclusion_R;  // default: all R
    double truncation_R = 0.5;
    std::vector<double> truncation_M;  // default {M, M + 1}
    std::vector<double> monotone_R;    // default: all R
    std::size_t growth_points = 16;
    double comparison_s0 = 1.0;
    double comparison_s1 = 0.5;
    double comparison_M = 1.0;
    double comparison_f = 1.0;
    double comparison_g = 0.1;
    std::vector<double> epsilons{1e-1, 1e-2, 1e-3};
    std::vector<double> cross_route_R;  // default: all R

    [[nodiscard]] bool any() const {
        return nesting || volume || inclusions || truncation || monotone_average || growth || fb_measure ||
               convergence || comparison || penalty_ordering || cross_route;
    }
};

struct OutputBlock {
    std::string directory = "out";
    std::vector<std::string> formats{"csv"};

    [[nodiscard]] bool wants(const std::string& f) const {
        return std::find(formats.begin(), formats.end(), f) != formats.end();
    }
};

struct RunConfig {
    std::string schema = kConfigSchema;
    std::string preset;
    std::uint64_t seed = 0;
    GridBlock grid;
    CoefficientDescriptor coefficients;
    ProblemBlock problem;
    SuitesBlock suites;
    OutputBlock output;
    nlohmann::json source;  // fully expanded JSON form, hashed for the manifest

    [[nodiscard]] double max_R() const { return *std::max_element(problem.R.begin(), problem.R.end()); }
};

/// Named seed streams derived from the root seed.
inline std::uint64_t coefficient_seed(std::uint64_t root) { return stream_seed(root, "coefficients"); }
inline std::uint64_t growth_seed(std::uint64_t root) { return stream_seed(root, "growth_sampling"); }

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"laplace2d", "laplace3d", "checkerboard2d", "random2d"};
    return names;
}

inline nlohmann::json preset_json(const std::string& name) {
    using nlohmann::json;
    if (name == "laplace2d")
        return json::parse(R"({
  "schema": "mvs-run/1", "seed": 1,
  "grid": {"dim": 2, "M": 2.0, "h": 0.015625},
  "coefficients": {"kind": "constant", "params": {"scale": 1.0}},
  "problem": {"R": [0.25, 0.5, 1.0]},
  "suites": {
    "nesting": true, "volume": true, "inclusions": true,
    "truncation": {"R": 0.5, "M": [2.0, 3.0]},
    "monotone_average": {"R": [0.25, 0.5, 0.75, 1.0]},
    "growth": {"points": 16}, "fb_measure": true, "convergence": true,
    "comparison": true, "penalty_ordering": true, "cross_route": true,
    "refinement": [0.03125, 0.015625, 0.0078125]
  },
  "output": {"directory": "out/laplace2d", "formats": ["csv", "svg"]}
})");
    if (name == "laplace3d")
        return json::parse(R"({
  "schema": "mvs-run/1", "seed": 1,
  "grid": {"dim": 3, "M": 2.0, "h": 0.03125},
  "coefficients": {"kind": "constant", "params": {"scale": 1.0}},
  "problem": {"R": [0.5, 0.625, 0.75, 1.0]},
  "suites": {
    "nesting": true, "volume": {"tolerance": 0.08}, "inclusions": true,
    "monotone_average": true,
    "growth": {"points": 16}, "fb_measure": true, "convergence": true,
    "penalty_ordering": {"epsilon": [0.1, 0.01, 0.001]},
    "cross_route": {"R": [0.5]},
    "refinement": [0.125, 0.0625, 0.03125]
  },
  "output": {"directory": "out/laplace3d", "formats": ["csv"]}
})");
    if (name == "checkerboard2d")
        return json::parse(R"({
  "schema": "mvs-run/1", "seed": 1,
  "grid": {"dim": 2, "M": 2.0, "h": 0.0078125},
  "coefficients": {"kind": "checkerboard", "params": {"alpha": 1.0, "beta": 10.0, "block": 1.0}},
  "problem": {"R": [0.25, 0.5, 1.0]},
  "suites": {
    "nesting": true, "volume": true,
    "inclusions": {"R": [0.5, 1.0]},
    "truncation": {"R": 0.5, "M": [2.0, 3.0]},
    "monotone_average": {"R": [0.25, 0.5, 0.75, 1.0]},
    "growth": {"points": 16}, "fb_measure": true, "convergence": true,
    "comparison": true, "penalty_ordering": true, "cross_route": true,
    "refinement": [0.03125, 0.015625, 0.0078125]
  },
  "output": {"directory": "out/checkerboard2d", "formats": ["csv", "svg"]}
})");
    if (name == "random2d")
        return json::parse(R"({
  "schema": "mvs-run/1", "seed": 7,
  "grid": {"dim": 2, "M": 2.0, "h": 0.0078125},
  "coefficients": {"kind": "random_piecewise", "params": {"lambda": 1.0, "Lambda": 5.0, "block": 0.25}},
  "problem": {"R": [0.25, 0.5, 1.0]},
  "suites": {
    "nesting": true, "volume": true, "inclusions": true,
    "truncation": {"R": 0.5, "M": [2.0, 3.0]},
    "monotone_average": {"R": [0.25, 0.5, 0.75, 1.0]},
    "growth": {"points": 16}, "fb_measure": true, "convergence": true,
    "comparison": true, "penalty_ordering": true, "cross_route": true,
    "refinement": [0.03125, 0.015625, 0.0078125]
  },
  "output": {"directory": "out/random2d", "formats": ["csv", "svg"]}
})");
    throw PreconditionError("unknown preset '" + name + "'");
}

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw PreconditionError(where + " must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key)) throw PreconditionError("unknown key '" + key + "' in " + where);
}

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw PreconditionError(std::string("bad value for '") + key + "': " + e.what());
    }
}

inline bool halving_sequence(const std::vector<double>& h) {
    for (std::size_t i = 1; i < h.size(); ++i)
        if (std::abs(h[i - 1] - 2.0 * h[i]) > 1e-12 * h[i - 1]) return false;
    return true;
}

}  // namespace detail

/// Suite entry: false/absent disables, true enables with defaults, an object enables with parameters.
inline bool suite_enabled(const nlohmann::json& suites, const char* name, nlohmann::json& params) {
    params = nlohmann::json::object();
    if (!suites.contains(name)) return false;
    const auto& v = suites.at(name);
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_object()) {
        params = v;
        return true;
    }
    throw PreconditionError(std::string("suite '") + name + "' must be a boolean or an object");
}

/// Parses and validates a configuration. A "preset" key starts from that preset
/// and applies the remaining keys as a JSON merge patch.
inline RunConfig parse_config(nlohmann::json j) {
    using nlohmann::json;
    if (!j.is_object()) throw PreconditionError("configuration must be a JSON object");
    std::string preset;
    if (j.contains("preset")) {
        preset = j.at("preset").get<std::string>();
        json base = preset_json(preset);
        j.erase("preset");
        base.merge_patch(j);
        j = std::move(base);
    }
    detail::check_keys(j, {"schema", "seed", "grid", "coefficients", "problem", "suites", "output"}, "configuration");
    RunConfig c;
    c.preset = preset;
    c.schema = detail::get_or<std::string>(j, "schema", "");
    if (c.schema != kConfigSchema)
        throw PreconditionError("unsupported schema '" + c.schema + "', expected '" + kConfigSchema + "'");
    c.seed = detail::get_or<std::uint64_t>(j, "seed", 0);

    const json grid = j.value("grid", json::object());
    detail::check_keys(grid, {"dim", "M", "h"}, "grid");
    c.grid.dim = detail::get_or<int>(grid, "dim", c.grid.dim);
    c.grid.M = detail::get_or<double>(grid, "M", c.grid.M);
    c.grid.h = detail::get_or<double>(grid, "h", c.grid.h);
    (void)build_grid(c.grid.dim, c.grid.M, c.grid.h);

    const json coeff = j.value("coefficients", json{{"kind", "constant"}});
    detail::check_keys(coeff, {"kind", "params"}, "coefficients");
    detail::check_keys(coeff.value("params", json::object()),
                       {"scale", "alpha", "beta", "block", "lambda", "Lambda", "max_angle"}, "coefficients.params");
    from_json(coeff, c.coefficients);
    c.coefficients.seed = coefficient_seed(c.seed);
    (void)make_coefficients(c.coefficients);

    const json prob = j.value("problem", json::object());
    detail::check_keys(prob, {"R", "x0_offset", "route", "tol", "s", "epsilon", "omega", "max_sweeps"}, "problem");
    c.problem.R = detail::get_or<std::vector<double>>(prob, "R", c.problem.R);
    const auto offset = detail::get_or<std::vector<double>>(prob, "x0_offset", {});
    if (!offset.empty() && static_cast<int>(offset.size()) != c.grid.dim)
        throw PreconditionError("x0_offset must have dim entries");
    for (std::size_t k = 0; k < offset.size(); ++k) c.problem.x0_offset[k] = offset[k];
    c.coefficients.offset = c.problem.x0_offset;
    c.problem.route = detail::get_or<std::string>(prob, "route", c.problem.route);
    c.problem.tol = detail::get_or<double>(prob, "tol", c.problem.tol);
    c.problem.s = detail::get_or<double>(prob, "s", c.problem.s);
    c.problem.epsilon = detail::get_or<double>(prob, "epsilon", c.problem.epsilon);
    c.problem.omega = detail::get_or<double>(prob, "omega", c.problem.omega);
    c.problem.max_sweeps = detail::get_or<long>(prob, "max_sweeps", c.problem.max_sweeps);

    if (c.problem.R.empty()) throw PreconditionError("problem.R must list at least one radius");
    for (double R : c.problem.R)
        if (!(R > 0.0)) throw PreconditionError("every R must be positive");
    std::sort(c.problem.R.begin(), c.problem.R.end());
    c.problem.R.erase(std::unique(c.problem.R.begin(), c.problem.R.end()), c.problem.R.end());
    if (c.max_R() > 0.5 * c.grid.M + 1e-12)
        throw PreconditionError("R_max = " + std::to_string(c.max_R()) + " exceeds M/2 = " + std::to_string(0.5 * c.grid.M) +
                                "; the noncontact set would not stay clear of the box boundary");
    if (c.problem.route != "lcp" && c.problem.route != "semilinear" && c.problem.route != "variational")
        throw PreconditionError("problem.route must be lcp, semilinear or variational");
    if (!(c.problem.tol >= 1e-10)) throw PreconditionError("problem.tol must be at least 1e-10");
    if (!(c.problem.s > 0.0 && c.problem.s <= 1.0)) throw PreconditionError("problem.s must lie in (0, 1]");
    if (!(c.problem.epsilon > 0.0)) throw PreconditionError("problem.epsilon must be positive");
    if (!(c.problem.omega > 0.0 && c.problem.omega < 2.0)) throw PreconditionError("problem.omega must lie in (0, 2)");

    const json suites = j.value("suites", json::object());
    detail::check_keys(suites,
                       {"nesting", "volume", "inclusions", "truncation", "monotone_average", "growth", "fb_measure",
                        "convergence", "comparison", "penalty_ordering", "cross_route", "refinement", "analysis_R"},
                       "suites");
    json p;
    auto& s = c.suites;
    s.nesting = suite_enabled(suites, "nesting", p);
    detail::check_keys(p, {}, "suites.nesting");
    s.volume = suite_enabled(suites, "volume", p);
    detail::check_keys(p, {"tolerance"}, "suites.volume");
    s.volume_tolerance = detail::get_or<double>(p, "tolerance", s.volume_tolerance);
    s.inclusions = suite_enabled(suites, "inclusions", p);
    detail::check_keys(p, {"tolerance", "R"}, "suites.inclusions");
    s.inclusion_tolerance = detail::get_or<double>(p, "tolerance", s.inclusion_tolerance);
    s.inclusion_R = detail::get_or<std::vector<double>>(p, "R", c.problem.R);
    s.truncation = suite_enabled(suites, "truncation", p);
    detail::check_keys(p, {"R", "M"}, "suites.truncation");
    s.truncation_R = detail::get_or<double>(p, "R", std::min(0.5, c.max_R()));
    s.truncation_M = detail::get_or<std::vector<double>>(p, "M", {c.grid.M, c.grid.M + 1.0});
    s.monotone_average = suite_enabled(suites, "monotone_average", p);
    detail::check_keys(p, {"R"}, "suites.monotone_average");
    s.monotone_R = detail::get_or<std::vector<double>>(p, "R", c.problem.R);
    s.growth = suite_enabled(suites, "growth", p);
    detail::check_keys(p, {"points"}, "suites.growth");
    s.growth_points = detail::get_or<std::size_t>(p, "points", s.growth_points);
    s.fb_measure = suite_enabled(suites, "fb_measure", p);
    detail::check_keys(p, {}, "suites.fb_measure");
    s.convergence = suite_enabled(suites, "convergence", p);
    detail::check_keys(p, {}, "suites.convergence");
    s.comparison = suite_enabled(suites, "comparison", p);
    detail::check_keys(p, {"s0", "s1", "M", "f", "g"}, "suites.comparison");
    s.comparison_s0 = detail::get_or<double>(p, "s0", s.comparison_s0);
    s.comparison_s1 = detail::get_or<double>(p, "s1", s.comparison_s1);
    s.comparison_M = detail::get_or<double>(p, "M", s.comparison_M);
    s.comparison_f = detail::get_or<double>(p, "f", s.comparison_f);
    s.comparison_g = detail::get_or<double>(p, "g", s.comparison_g);
    s.penalty_ordering = suite_enabled(suites, "penalty_ordering", p);
    detail::check_keys(p, {"epsilon"}, "suites.penalty_ordering");
    s.epsilons = detail::get_or<std::vector<double>>(p, "epsilon", s.epsilons);
    s.cross_route = suite_enabled(suites, "cross_route", p);
    detail::check_keys(p, {"R"}, "suites.cross_route");
    s.cross_route_R = detail::get_or<std::vector<double>>(p, "R", c.problem.R);
    const double h = c.grid.h;
    s.refinement = detail::get_or<std::vector<double>>(suites, "refinement", {4.0 * h, 2.0 * h, h});
    s.analysis_R = detail::get_or<double>(suites, "analysis_R", c.max_R());

    auto check_radii = [&](const std::vector<double>& radii, const std::string& where) {
        if (radii.empty()) throw PreconditionError(where + " must not be empty");
        for (double R : radii)
            if (!(R > 0.0) || R > 0.5 * c.grid.M + 1e-12)
                throw PreconditionError(where + " radii must lie in (0, M/2]");
    };
    check_radii(s.inclusion_R, "suites.inclusions.R");
    check_radii(s.monotone_R, "suites.monotone_average.R");
    check_radii(s.cross_route_R, "suites.cross_route.R");
    check_radii({s.truncation_R, s.analysis_R}, "suites");
    if (s.truncation_M.size() != 2 || s.truncation_M[1] < s.truncation_M[0] + 1.0 - 1e-12)
        throw PreconditionError("suites.truncation.M must be [M1, M2] with M2 >= M1 + 1");
    if (s.truncation_R > 0.5 * s.truncation_M[0] + 1e-12)
        throw PreconditionError("suites.truncation.R must not exceed M1/2");
    if (s.refinement.size() < 3 && (s.fb_measure || s.convergence))
        throw PreconditionError("suites.refinement needs at least three spacings");
    if (!detail::halving_sequence(s.refinement)) throw PreconditionError("suites.refinement must halve at each step");
    for (double hh : s.refinement) (void)build_grid(c.grid.dim, c.grid.M, hh);
    if (!(s.volume_tolerance > 0.0) || !(s.inclusion_tolerance > 0.0))
        throw PreconditionError("suite tolerances must be positive");
    if (!(s.comparison_s1 > 0.0 && s.comparison_s1 < s.comparison_s0 && s.comparison_s0 <= 1.0))
        throw PreconditionError("suites.comparison needs 0 < s1 < s0 <= 1");
    if (s.comparison) (void)build_grid(c.grid.dim, s.comparison_M, c.grid.h);
    if (!(s.comparison_f > 0.0) || !(s.comparison_g > 0.0))
        throw PreconditionError("suites.comparison needs f > 0 and g > 0");
    for (double e : s.epsilons)
        if (!(e > 0.0)) throw PreconditionError("penalty_ordering epsilons must be positive");
    if (s.growth_points == 0) throw PreconditionError("suites.growth.points must be positive");

    const json out = j.value("output", json::object());
    detail::check_keys(out, {"directory", "formats"}, "output");
    c.output.directory = detail::get_or<std::string>(out, "directory", c.output.directory);
    c.output.formats = detail::get_or<std::vector<std::string>>(out, "formats", c.output.formats);
    for (const auto& f : c.output.formats)
        if (f != "csv" && f != "svg" && f != "green")
            throw PreconditionError("output format '" + f + "' is not one of csv, svg, green");
    if (c.output.wants("svg") && c.grid.dim != 2)
        throw PreconditionError("svg output is planar only; use the csv slices for dim 3");

    c.source = j;
    return c;
}

inline RunConfig load_preset(const std::string& name) {
    RunConfig c = parse_config(preset_json(name));
    c.preset = name;
    return c;
}

inline RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw PreconditionError("cannot open configuration file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw PreconditionError("configuration file '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_config(std::move(j));
}

/// FNV-1a of the expanded configuration serialized with sorted keys.
inline std::string config_hash(const RunConfig& c) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(c.source.dump())));
    return buf;
}

}  // namespace mvs
