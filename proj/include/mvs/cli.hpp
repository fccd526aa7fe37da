#pragma once

#include <atomic>
#include <chrono>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mvs/analysis.hpp"
#include "mvs/config.hpp"
#include "mvs/general_gap.hpp"
#include "mvs/instance.hpp"
#include "mvs/io.hpp"
#include "mvs/mvset.hpp"

namespace mvs {

enum ExitCode : int {
    exit_ok = 0,
    exit_invalid = 1,         // bad configuration, missing artifacts, unsupported request
    exit_nonconvergence = 2,  // a solver did not converge
    exit_suite_failure = 3,   // a verification suite failed
    exit_inconclusive = 4,    // truncation check could not decide
};

struct RunOptions {
    std::string out_dir;  // overrides output.directory when nonempty
    int jobs = 1;
    std::ostream* log = nullptr;
};

/// Runs fn(0..n-1) on up to `jobs` threads; the first exception is rethrown after all finish.
inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline LcpOptions lcp_options(const ProblemBlock& p) {
    LcpOptions o;
    o.tolerance = p.tol;
    o.omega = p.omega;
    if (p.max_sweeps > 0) o.max_sweeps = p.max_sweeps;
    return o;
}

inline ObstacleSolution solve_route(const Instance& in, double R, const ProblemBlock& p, const std::string& route) {
    const ObstacleProblem prob = in.problem(R);
    if (route == "lcp") return solve_lcp(prob, lcp_options(p));
    if (route == "semilinear") return solve_penalized_semilinear(prob, PenaltyProfile{p.s}, p.tol);
    PenaltyOptions po;
    po.tolerance = p.tol;
    return solve_variational_penalty(prob, p.epsilon, po);
}

struct SweepEntry {
    double R = 0.0;
    ObstacleSolution solution;
    std::optional<MeanValueSet> set;
    double seconds = 0.0;
};

struct Sweep {
    Instance instance;
    CoefficientField coefficients;
    std::vector<SweepEntry> entries;
    bool converged = true;
    double setup_seconds = 0.0;

    [[nodiscard]] const SweepEntry* find(double R) const {
        for (const auto& e : entries)
            if (std::abs(e.R - R) <= 1e-12 * R) return &e;
        return nullptr;
    }
};

inline Sweep run_sweep(const RunConfig& c, const RunOptions& opts) {
    Sweep sw;
    const auto t0 = std::chrono::steady_clock::now();
    sw.coefficients = make_coefficients(c.coefficients);
    sw.instance = make_instance(c.grid.dim, c.grid.M, c.grid.h, sw.coefficients, c.output.wants("green"));
    sw.setup_seconds = seconds_since(t0);
    sw.entries.resize(c.problem.R.size());
    parallel_for(sw.entries.size(), opts.jobs, [&](std::size_t i) {
        const auto t = std::chrono::steady_clock::now();
        SweepEntry& e = sw.entries[i];
        e.R = c.problem.R[i];
        e.solution = solve_route(sw.instance, e.R, c.problem, c.problem.route);
        if (e.solution.converged) e.set = extract_set(sw.instance.grid, e.solution);
        e.seconds = seconds_since(t);
    });
    for (const auto& e : sw.entries) sw.converged = sw.converged && e.solution.converged;
    if (opts.log)
        for (const auto& e : sw.entries) {
            *opts.log << "R=" << format_tag(e.R) << " " << e.solution.solver << " iterations=" << e.solution.iterations
                      << " comp_residual=" << e.solution.comp_residual
                      << (e.solution.converged ? "" : " NOT CONVERGED: " + e.solution.message);
            if (e.set) *opts.log << " |D|=" << e.set->measure << " kappa=" << e.set->kappa();
            *opts.log << "\n";
        }
    return sw;
}

inline std::string solution_file(double R) { return "solution_R" + format_tag(R) + ".csv"; }
inline std::string indicator_file(double R) { return "indicator_R" + format_tag(R) + ".csv"; }
inline std::string svg_file(double R) { return "set_R" + format_tag(R) + ".svg"; }

inline SvgSet svg_data(const MeanValueSet& s) {
    SvgSet out;
    out.h = s.grid.spacing;
    out.R = s.R;
    out.r_in = s.r_in;
    out.r_out = s.r_out;
    out.kappa = s.kappa();
    const Point c = s.grid.coords(s.x0);
    for (NodeIndex i = 0; i < s.grid.size(); ++i)
        if (s.indicator[i]) {
            const Point p = s.grid.coords(i);
            out.cells.emplace_back(p[0] - c[0], p[1] - c[1]);
        }
    return out;
}

inline nlohmann::json solve_record(const SweepEntry& e, const std::string& route) {
    const auto& s = e.solution;
    nlohmann::json j = {{"R", e.R},
                        {"q", s.q},
                        {"route", route},
                        {"solver", s.solver},
                        {"converged", s.converged},
                        {"iterations", s.iterations},
                        {"tolerance", s.tolerance},
                        {"comp_residual", s.comp_residual},
                        {"comp_product", s.comp_product},
                        {"min_value", s.min_value},
                        {"threshold", s.threshold},
                        {"active_count", s.active_count()},
                        {"message", s.message}};
    if (e.set) {
        j["measure"] = e.set->measure;
        j["kappa"] = e.set->kappa();
        j["r_in"] = e.set->r_in;
        j["r_out"] = e.set->r_out;
        j["connected"] = e.set->connected;
        j["x0"] = e.set->grid.coords(e.set->x0);
        j["sandwiched"] = measure_sandwiched(*e.set);
    }
    return j;
}

inline nlohmann::json manifest_base(const RunConfig& c, const Sweep& sw, const std::string& command) {
    const Grid& g = sw.instance.grid;
    nlohmann::json coeff = c.coefficients;
    coeff["offset"] = {c.coefficients.offset[0], c.coefficients.offset[1], c.coefficients.offset[2]};
    coeff["lambda"] = sw.coefficients.lambda();
    coeff["Lambda"] = sw.coefficients.Lambda();
    return {{"schema", "mvs-manifest/1"},
            {"command", command},
            {"config_hash", config_hash(c)},
            {"config", c.source},
            {"grid", {{"dim", g.dim}, {"M", g.half_width}, {"h", g.spacing}, {"per_axis", g.per_axis}, {"nodes", g.size()}}},
            {"coefficients", coeff},
            {"mmatrix_violations", sw.instance.op->mmatrix_violations.size()},
            {"seeds",
             {{"root", c.seed},
              {"rule", "stream seed = splitmix64_finalize(root XOR fnv1a64(stream name))"},
              {"streams", {{"coefficients", coefficient_seed(c.seed)}, {"growth_sampling", growth_seed(c.seed)}}}}},
            {"timings_file", "timings.json"}};
}

/// Writes CSV (and SVG) artifacts; returns the per-solve manifest records.
inline nlohmann::json write_sweep_artifacts(const RunConfig& c, const Sweep& sw, const std::filesystem::path& dir) {
    const Grid& g = sw.instance.grid;
    nlohmann::json solves = nlohmann::json::array();
    for (const auto& e : sw.entries) {
        nlohmann::json rec = solve_record(e, c.problem.route);
        nlohmann::json files = nlohmann::json::object();
        if (e.solution.converged && c.output.wants("csv")) {
            const NodeBox box = support_box(g, e.solution.active, 2);
            write_atomic(dir / solution_file(e.R), field_csv(g, e.solution.v, box, "v"));
            write_atomic(dir / indicator_file(e.R), indicator_csv(g, e.solution.active, box));
            files["solution"] = solution_file(e.R);
            files["indicator"] = indicator_file(e.R);
            files["box"] = {{"lo", {box.lo[0], box.lo[1], box.lo[2]}}, {"hi", {box.hi[0], box.hi[1], box.hi[2]}}};
        }
        if (e.set && c.output.wants("svg")) {
            write_atomic(dir / svg_file(e.R), set_svg(svg_data(*e.set)));
            files["svg"] = svg_file(e.R);
        }
        rec["files"] = files;
        solves.push_back(rec);
    }
    if (c.output.wants("green") && sw.instance.green) {
        write_atomic(dir / "green.csv", field_csv(g, sw.instance.green->values, full_box(g), "G"));
    }
    return solves;
}

inline std::filesystem::path output_dir(const RunConfig& c, const RunOptions& opts) {
    return opts.out_dir.empty() ? std::filesystem::path(c.output.directory) : std::filesystem::path(opts.out_dir);
}

inline nlohmann::json sweep_timings(const Sweep& sw) {
    nlohmann::json t = {{"setup_seconds", sw.setup_seconds}};
    nlohmann::json per = nlohmann::json::object();
    for (const auto& e : sw.entries) per[format_tag(e.R)] = e.seconds;
    t["solve_seconds"] = per;
    return t;
}

/// Solves the R-sweep and writes artifacts, manifest.json and timings.json.
inline int cmd_solve(const RunConfig& c, const RunOptions& opts = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto dir = output_dir(c, opts);
    const Sweep sw = run_sweep(c, opts);
    nlohmann::json manifest = manifest_base(c, sw, "solve");
    manifest["solves"] = write_sweep_artifacts(c, sw, dir);
    const int code = sw.converged ? exit_ok : exit_nonconvergence;
    manifest["exit_code"] = code;
    write_atomic(dir / "manifest.json", json_text(manifest));
    nlohmann::json timings = sweep_timings(sw);
    timings["total_seconds"] = seconds_since(t0);
    write_atomic(dir / "timings.json", json_text(timings));
    return code;
}

// ---------------------------------------------------------------------------
// Verification suites

struct SuiteResult {
    std::string name;
    nlohmann::json data;
    bool passed = false;
    bool inconclusive = false;
    bool nonconvergence = false;
    std::string error;
    double seconds = 0.0;
};

namespace detail {

/// Mean value sets for the requested radii, reusing sweep solutions and solving the LCP otherwise.
inline std::vector<MeanValueSet> sets_for(const RunConfig& c, const Sweep& sw, const std::vector<double>& radii) {
    std::vector<MeanValueSet> out;
    for (double R : radii) {
        if (const SweepEntry* e = sw.find(R); e && e->set) {
            out.push_back(*e->set);
            continue;
        }
        const ObstacleSolution s = solve_lcp(sw.instance.problem(R), lcp_options(c.problem));
        if (!s.converged) throw ConvergenceError("LCP at R = " + format_tag(R) + ": " + s.message);
        out.push_back(extract_set(sw.instance.grid, s));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.R < b.R; });
    return out;
}

inline ObstacleSolution lcp_solution(const RunConfig& c, const Sweep& sw, double R) {
    if (const SweepEntry* e = sw.find(R); e && c.problem.route == "lcp") return e->solution;
    ObstacleSolution s = solve_lcp(sw.instance.problem(R), lcp_options(c.problem));
    if (!s.converged) throw ConvergenceError("LCP at R = " + format_tag(R) + ": " + s.message);
    return s;
}

inline SuiteResult suite_nesting(const RunConfig&, const Sweep& sw) {
    SuiteResult r;
    r.passed = true;
    r.data["pairs"] = nlohmann::json::array();
    for (std::size_t i = 0; i + 1 < sw.entries.size(); ++i) {
        const NestingReport n = nesting_report(*sw.entries[i].set, *sw.entries[i + 1].set);
        r.passed = r.passed && n.passed;
        r.data["pairs"].push_back(n);
    }
    return r;
}

inline SuiteResult suite_volume(const RunConfig& c, const Sweep& sw) {
    std::vector<MeanValueSet> sets;
    for (const auto& e : sw.entries) sets.push_back(*e.set);
    const VolumeReport v = volume_identity(sets, c.suites.volume_tolerance);
    SuiteResult r;
    r.data = v;
    r.passed = v.passed;
    return r;
}

inline SuiteResult suite_inclusions(const RunConfig& c, const Sweep& sw) {
    const auto sets = sets_for(c, sw, c.suites.inclusion_R);
    const InclusionReport inc =
        ball_inclusions(sets, sw.coefficients.lambda(), sw.coefficients.Lambda(), c.suites.inclusion_tolerance);
    SuiteResult r;
    r.data = inc;
    nlohmann::json extra = nlohmann::json::array();
    for (const auto& s : sets)
        extra.push_back({{"R", s.R}, {"connected", s.connected}, {"sandwiched", measure_sandwiched(s)}});
    r.data["sets"] = extra;
    r.passed = inc.passed;
    return r;
}

inline SuiteResult suite_truncation(const RunConfig& c, const Sweep& sw) {
    const double M1 = c.suites.truncation_M[0], M2 = c.suites.truncation_M[1];
    const LcpOptions lo = lcp_options(c.problem);
    const Instance a = make_instance(c.grid.dim, M1, c.grid.h, sw.coefficients, false);
    const ObstacleSolution s1 = solve_lcp(a.problem(c.suites.truncation_R), lo);
    const Instance b = make_instance(c.grid.dim, M2, c.grid.h, sw.coefficients, false);
    const ObstacleSolution s2 = solve_lcp(b.problem(c.suites.truncation_R), lo);
    if (!s1.converged || !s2.converged) throw ConvergenceError("truncation solves did not converge");
    const TruncationReport t = truncation_check(s1, a.grid, s2, b.grid, c.problem.tol);
    SuiteResult r;
    r.data = t;
    r.passed = t.passed;
    r.inconclusive = t.inconclusive;
    return r;
}

inline SuiteResult suite_monotone(const RunConfig& c, const Sweep& sw) {
    const auto sets = sets_for(c, sw, c.suites.monotone_R);
    const DiscreteOperator& op = *sw.instance.op;
    const Grid& g = op.grid;
    const auto n = static_cast<Eigen::Index>(op.size());
    SuiteResult r;

    // constant: every average equals 1
    const Field one = Field::Ones(n);
    MonotoneReport rc = monotone_average_check(op, one, SolutionKind::sub, sets);
    double deviation = std::abs(rc.curve.center_value - 1.0);
    for (double a : rc.curve.averages) deviation = std::max(deviation, std::abs(a - 1.0));
    const bool constant_ok = rc.passed && deviation <= 1e-12;
    r.data["constant"] = rc;
    r.data["constant"]["max_deviation"] = deviation;
    r.data["constant"]["passed"] = constant_ok;

    double r_out = 0.0, r_in = std::numeric_limits<double>::infinity();
    for (const auto& s : sets) {
        r_out = std::max(r_out, s.r_out);
        r_in = std::min(r_in, s.r_in);
    }
    PcgOptions pcg;
    pcg.relative_tolerance = 1e-13;

    // supersolution: Green's function with its pole outside every set
    const double reach = std::min(r_out + std::max(4.0 * g.spacing, 0.25 * r_out), g.half_width - 4.0 * g.spacing);
    const double d = g.spacing * std::round(reach / g.spacing);
    const auto pole = static_cast<NodeIndex>(g.node_at({d, 0.0, 0.0}));
    bool pole_outside = true;
    for (const auto& s : sets) pole_outside = pole_outside && !s.contains(pole);
    require(pole_outside, "no room for a pole outside the largest mean value set");
    const Field Gy = solve_spd(op, Field::Unit(n, static_cast<Eigen::Index>(pole)) / g.cell_volume(), pcg, nullptr,
                               sw.instance.multigrid.get());
    const MonotoneReport rp = monotone_average_check(op, Gy, SolutionKind::super, sets);
    r.data["pole"] = rp;
    r.data["pole"]["pole"] = g.coords(pole);

    // subsolution: A v = -rho with a smooth nonnegative bump off the center
    const Point center{0.3 * r_in, 0.2 * r_in, 0.0};
    Field rho = Field::Zero(n);
    for (NodeIndex i = 0; i < op.size(); ++i) {
        if (op.is_boundary(i)) continue;
        const double t = 1.0 - std::pow(detail::distance(g.coords(i), center, g.dim) / r_out, 2);
        if (t > 0.0) rho[static_cast<Eigen::Index>(i)] = t * t;
    }
    const Field vb = -solve_spd(op, rho, pcg, nullptr, sw.instance.multigrid.get());
    const MonotoneReport rb = monotone_average_check(op, vb, SolutionKind::sub, sets);
    r.data["bump"] = rb;
    r.data["bump"]["center"] = center;
    r.data["bump"]["radius"] = r_out;

    r.passed = constant_ok && rp.passed && rb.passed;
    return r;
}

inline SuiteResult suite_growth(const RunConfig& c, const Sweep& sw) {
    const double hf = *std::min_element(c.suites.refinement.begin(), c.suites.refinement.end());
    std::optional<Instance> local;
    if (hf != c.grid.h) local = make_instance(c.grid.dim, c.grid.M, hf, sw.coefficients, false);
    const Instance& in = local ? *local : sw.instance;
    const ObstacleSolution s = solve_lcp(in.problem(c.suites.analysis_R), lcp_options(c.problem));
    if (!s.converged) throw ConvergenceError("growth LCP did not converge: " + s.message);
    const GrowthReport gr = quadratic_growth_check(in.grid, s, c.suites.growth_points, growth_seed(c.seed));
    SuiteResult r;
    r.data = gr;
    r.data["h"] = hf;
    r.data["R"] = c.suites.analysis_R;
    r.passed = gr.passed;
    return r;
}

inline SuiteResult suite_fb_measure(const RunConfig& c, const Sweep& sw) {
    const DecayReport d = fb_measure_decay(c.grid.dim, c.grid.M, sw.coefficients, c.suites.analysis_R,
                                           c.suites.refinement, lcp_options(c.problem));
    SuiteResult r;
    r.data = d;
    r.data["R"] = c.suites.analysis_R;
    r.passed = d.passed;
    return r;
}

inline SuiteResult suite_convergence(const RunConfig& c, const Sweep& sw) {
    ConvergenceOptions o;
    o.s = c.problem.s;
    o.epsilon = c.problem.epsilon;
    o.tolerance = c.problem.tol;
    const ConvergenceReport cr =
        convergence_study(c.grid.dim, c.grid.M, sw.coefficients, c.suites.analysis_R, c.suites.refinement, o);
    SuiteResult r;
    r.data = cr;
    r.data["R"] = c.suites.analysis_R;
    r.passed = cr.passed;
    return r;
}

inline SuiteResult suite_comparison(const RunConfig& c, const Sweep& sw) {
    const Grid g = build_grid(c.grid.dim, c.suites.comparison_M, c.grid.h);
    auto op = std::make_shared<const DiscreteOperator>(assemble(g, sw.coefficients));
    auto mg = std::make_shared<const Multigrid>(op->matrix, g.dim, g.per_axis);
    const GeneralObstacleProblem prob = make_general_problem(op, c.suites.comparison_f, c.suites.comparison_g, mg);
    const ComparisonReport cr = comparison_suite(prob, c.suites.comparison_s0, c.suites.comparison_s1, 1e-8);
    SuiteResult r;
    r.data = cr;
    r.data["M"] = c.suites.comparison_M;
    r.data["f"] = c.suites.comparison_f;
    r.data["g"] = c.suites.comparison_g;
    r.passed = cr.passed;
    return r;
}

/// w_{e1} <= w_{e2} + tol for e1 <= e2 and w_0 <= w_e + tol. With w = G - v these
/// read v_{e2} <= v_{e1} + tol and v_e <= v_0 + tol, so G never enters.
inline SuiteResult suite_penalty_ordering(const RunConfig& c, const Sweep& sw) {
    std::vector<double> eps = c.suites.epsilons;
    std::sort(eps.begin(), eps.end());
    const double tol = c.problem.tol;
    SuiteResult r;
    r.passed = true;
    r.data["epsilon"] = eps;
    r.data["tolerance"] = tol;
    nlohmann::json per_R = nlohmann::json::array();
    PenaltyOptions po;
    po.tolerance = tol;
    for (const auto& e : sw.entries) {
        const ObstacleSolution v0 = lcp_solution(c, sw, e.R);
        std::vector<ObstacleSolution> ve;
        po.initial = v0.v;
        for (double x : eps) {
            ve.push_back(solve_variational_penalty(sw.instance.problem(e.R), x, po));
            po.initial = ve.back().v;
            if (!ve.back().converged) throw ConvergenceError("variational penalty did not converge: " + ve.back().message);
        }
        nlohmann::json rec = {{"R", e.R}};
        nlohmann::json pairs = nlohmann::json::array();
        bool ok = true;
        for (std::size_t i = 0; i + 1 < ve.size(); ++i) {
            const double excess = (ve[i + 1].v - ve[i].v).maxCoeff();  // max(w_{e_i} - w_{e_{i+1}})
            pairs.push_back({{"epsilon_small", eps[i]}, {"epsilon_large", eps[i + 1]}, {"excess", excess}});
            ok = ok && excess <= tol;
        }
        nlohmann::json limit = nlohmann::json::array();
        for (std::size_t i = 0; i < ve.size(); ++i) {
            const double excess = (ve[i].v - v0.v).maxCoeff();  // max(w_0 - w_e)
            limit.push_back({{"epsilon", eps[i]}, {"excess", excess}});
            ok = ok && excess <= tol;
        }
        rec["pairs"] = pairs;
        rec["limit"] = limit;
        rec["passed"] = ok;
        r.passed = r.passed && ok;
        per_R.push_back(rec);
    }
    r.data["radii"] = per_R;
    return r;
}

inline SuiteResult suite_cross_route(const RunConfig& c, const Sweep& sw) {
    SuiteResult r;
    r.passed = true;
    nlohmann::json per_R = nlohmann::json::array();
    PenaltyOptions po;
    po.tolerance = c.problem.tol;
    for (double R : c.suites.cross_route_R) {
        const ObstacleProblem prob = sw.instance.problem(R);
        const ObstacleSolution lcp = lcp_solution(c, sw, R);
        const ObstacleSolution semi = solve_penalized_semilinear(prob, PenaltyProfile{c.problem.s}, c.problem.tol);
        const ObstacleSolution var = solve_variational_penalty(prob, c.problem.epsilon, po);
        if (!semi.converged || !var.converged) throw ConvergenceError("penalized route did not converge");
        const double maxv = lcp.v.maxCoeff();
        const double bound = 1e-2 * maxv;
        const double d1 = (lcp.v - semi.v).lpNorm<Eigen::Infinity>();
        const double d2 = (lcp.v - var.v).lpNorm<Eigen::Infinity>();
        const double d3 = (semi.v - var.v).lpNorm<Eigen::Infinity>();
        const bool ok = d1 <= bound && d2 <= bound && d3 <= bound;
        per_R.push_back({{"R", R},
                         {"max_v", maxv},
                         {"bound", bound},
                         {"lcp_semilinear", d1},
                         {"lcp_variational", d2},
                         {"semilinear_variational", d3},
                         {"s", c.problem.s},
                         {"epsilon", c.problem.epsilon},
                         {"passed", ok}});
        r.passed = r.passed && ok;
    }
    r.data["radii"] = per_R;
    return r;
}

}  // namespace detail

using SuiteFn = SuiteResult (*)(const RunConfig&, const Sweep&);

inline std::vector<std::pair<std::string, SuiteFn>> enabled_suites(const RunConfig& c) {
    std::vector<std::pair<std::string, SuiteFn>> out;
    const auto& s = c.suites;
    if (s.nesting) out.emplace_back("nesting", detail::suite_nesting);
    if (s.volume) out.emplace_back("volume", detail::suite_volume);
    if (s.inclusions) out.emplace_back("inclusions", detail::suite_inclusions);
    if (s.truncation) out.emplace_back("truncation", detail::suite_truncation);
    if (s.monotone_average) out.emplace_back("monotone_average", detail::suite_monotone);
    if (s.growth) out.emplace_back("growth", detail::suite_growth);
    if (s.fb_measure) out.emplace_back("fb_measure", detail::suite_fb_measure);
    if (s.convergence) out.emplace_back("convergence", detail::suite_convergence);
    if (s.comparison) out.emplace_back("comparison", detail::suite_comparison);
    if (s.penalty_ordering) out.emplace_back("penalty_ordering", detail::suite_penalty_ordering);
    if (s.cross_route) out.emplace_back("cross_route", detail::suite_cross_route);
    return out;
}

inline std::vector<SuiteResult> run_suites(const RunConfig& c, const Sweep& sw, const RunOptions& opts) {
    const auto suites = enabled_suites(c);
    std::vector<SuiteResult> results(suites.size());
    parallel_for(suites.size(), opts.jobs, [&](std::size_t i) {
        const auto t = std::chrono::steady_clock::now();
        SuiteResult r;
        try {
            r = suites[i].second(c, sw);
        } catch (const ConvergenceError& e) {
            r = SuiteResult{};
            r.nonconvergence = true;
            r.error = e.what();
        } catch (const Error& e) {
            r = SuiteResult{};
            r.error = e.what();
        }
        r.name = suites[i].first;
        r.seconds = seconds_since(t);
        results[i] = std::move(r);
    });
    if (opts.log)
        for (const auto& r : results)
            *opts.log << "suite " << r.name << ": "
                      << (r.passed ? "pass" : r.inconclusive ? "inconclusive" : r.nonconvergence ? "nonconvergence" : "FAIL")
                      << (r.error.empty() ? "" : " (" + r.error + ")") << "\n";
    return results;
}

inline int verdict(const std::vector<SuiteResult>& results) {
    bool failed = false, inconclusive = false, nonconv = false;
    for (const auto& r : results) {
        if (r.passed) continue;
        if (r.nonconvergence)
            nonconv = true;
        else if (r.inconclusive)
            inconclusive = true;
        else
            failed = true;
    }
    if (nonconv) return exit_nonconvergence;
    if (failed) return exit_suite_failure;
    if (inconclusive) return exit_inconclusive;
    return exit_ok;
}

/// Solves the sweep, runs the enabled suites and writes report.json next to the solve artifacts.
inline int cmd_verify(const RunConfig& c, const RunOptions& opts = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto dir = output_dir(c, opts);
    const Sweep sw = run_sweep(c, opts);
    nlohmann::json manifest = manifest_base(c, sw, "verify");
    manifest["solves"] = write_sweep_artifacts(c, sw, dir);
    nlohmann::json timings = sweep_timings(sw);
    int code = exit_nonconvergence;
    nlohmann::json report = {{"schema", "mvs-report/1"}, {"config_hash", config_hash(c)}};
    nlohmann::json suites = nlohmann::json::object();
    nlohmann::json verdicts = nlohmann::json::object();
    if (sw.converged) {
        const auto results = run_suites(c, sw, opts);
        nlohmann::json suite_times = nlohmann::json::object();
        for (const auto& r : results) {
            nlohmann::json entry = {{"passed", r.passed}, {"inconclusive", r.inconclusive}, {"data", r.data}};
            if (!r.error.empty()) entry["error"] = r.error;
            suites[r.name] = entry;
            verdicts[r.name] = r.passed ? "pass" : r.inconclusive ? "inconclusive" : r.nonconvergence ? "nonconvergence" : "fail";
            suite_times[r.name] = r.seconds;
        }
        timings["suite_seconds"] = suite_times;
        code = verdict(results);
    }
    report["suites"] = suites;
    report["exit_code"] = code;
    manifest["suites"] = verdicts;
    manifest["exit_code"] = code;
    write_atomic(dir / "report.json", json_text(report));
    write_atomic(dir / "manifest.json", json_text(manifest));
    timings["total_seconds"] = seconds_since(t0);
    write_atomic(dir / "timings.json", json_text(timings));
    return code;
}

/// Rebuilds SVG pictures from the indicator CSVs of an earlier solve. R <= 0 exports every radius.
inline int cmd_export_svg(const RunConfig& c, double R, const RunOptions& opts = {}) {
    if (c.grid.dim != 2) throw PreconditionError("SVG export is planar only; use the csv slices for dim 3");
    const auto dir = output_dir(c, opts);
    const nlohmann::json manifest = read_json_file(dir / "manifest.json");
    if (manifest.at("config_hash").get<std::string>() != config_hash(c))
        throw PreconditionError("manifest in '" + dir.string() + "' was written for a different configuration");
    const double h = manifest.at("grid").at("h").get<double>();
    std::size_t written = 0;
    for (const auto& rec : manifest.at("solves")) {
        const double r = rec.at("R").get<double>();
        if (R > 0.0 && std::abs(r - R) > 1e-12 * R) continue;
        if (!rec.contains("r_in")) throw PreconditionError("solve at R = " + format_tag(r) + " has no mean value set");
        SvgSet s;
        s.h = h;
        s.R = r;
        s.r_in = rec.at("r_in").get<double>();
        s.r_out = rec.at("r_out").get<double>();
        s.kappa = rec.at("kappa").get<double>();
        const auto x0 = rec.at("x0").get<std::vector<double>>();
        for (const auto& row : read_csv(dir / indicator_file(r), 3))
            if (row[2] != 0.0) s.cells.emplace_back(row[0] - x0[0], row[1] - x0[1]);
        write_atomic(dir / svg_file(r), set_svg(std::move(s)));
        if (opts.log) *opts.log << "wrote " << (dir / svg_file(r)).string() << "\n";
        ++written;
    }
    if (written == 0) throw PreconditionError("no solve at R = " + format_tag(R) + " in the manifest");
    return exit_ok;
}

}  // namespace mvs
