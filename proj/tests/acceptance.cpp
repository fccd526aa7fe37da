#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mvs/cli.hpp"

using namespace mvs;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct PresetRun {
    RunConfig config;
    Sweep sweep;
    std::map<std::string, SuiteResult> suites;
    double seconds = 0.0;
};

PresetRun run_preset(const std::string& name) {
    const auto t0 = std::chrono::steady_clock::now();
    RunOptions opts;
    opts.jobs = 1;
    PresetRun p{load_preset(name), {}, {}, 0.0};
    p.sweep = run_sweep(p.config, opts);
    if (p.sweep.converged)
        for (auto& r : run_suites(p.config, p.sweep, opts)) p.suites[r.name] = std::move(r);
    p.seconds = seconds_since(t0);
    std::fprintf(stderr, "ran %s in %.1f s\n", name.c_str(), p.seconds);
    return p;
}

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

int failures = 0;

void report(int id, const std::string& title, bool pass, const std::string& details) {
    std::printf("[%s] %d %s: %s\n", pass ? "PASS" : "FAIL", id, title.c_str(), details.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

/// Suite verdict with a short reason; absent or errored suites fail.
bool suite_ok(const PresetRun& p, const std::string& name, std::string& why) {
    const auto it = p.suites.find(name);
    if (it == p.suites.end()) {
        why += p.config.preset + ": no " + name + " result; ";
        return false;
    }
    if (!it->second.error.empty()) why += p.config.preset + ": " + it->second.error + "; ";
    return it->second.passed;
}

const json& data(const PresetRun& p, const std::string& name) {
    static const json empty = json::object();
    const auto it = p.suites.find(name);
    return it == p.suites.end() ? empty : it->second.data;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

int main() {
    std::map<std::string, PresetRun> runs;
    for (const auto& name : preset_names()) runs.emplace(name, run_preset(name));
    const PresetRun& lap2 = runs.at("laplace2d");
    const PresetRun& lap3 = runs.at("laplace3d");
    const PresetRun& cb = runs.at("checkerboard2d");

    {
        const double h = lap2.config.grid.h;
        bool ok = lap2.sweep.converged && lap2.seconds < 60.0;
        std::string d;
        for (double R : {0.25, 0.5, 1.0}) {
            const SweepEntry* e = lap2.sweep.find(R);
            if (!e || !e->set) {
                ok = false;
                d += "R=" + format_tag(R) + " missing; ";
                continue;
            }
            const double rho = R / std::sqrt(std::numbers::pi);
            const double din = std::abs(e->set->r_in - rho) / h, dout = std::abs(e->set->r_out - rho) / h;
            const double dk = std::abs(e->set->kappa() - 1.0);
            ok = ok && din <= 2.0 && dout <= 2.0 && dk <= 0.05;
            d += "R=" + format_tag(R) + " |r_in-rho|=" + fmt("%.2fh", din) + " |r_out-rho|=" + fmt("%.2fh", dout) +
                 " kappa=" + fmt("%.4f", e->set->kappa()) + "; ";
        }
        d += "time " + fmt("%.1f s", lap2.seconds);
        report(1, "Laplacian exactness dim 2", ok, d);
    }
    {
        const SweepEntry* e = lap3.sweep.find(0.5);
        const bool found = e && e->set;
        const double k = found ? e->set->kappa() : 0.0;
        const bool ok = found && std::abs(k - 1.0) <= 0.08 && lap3.seconds < 300.0;
        report(2, "Laplacian exactness dim 3", ok,
               "R=0.5 kappa=" + fmt("%.4f", k) + " (|kappa-1|=" + fmt("%.4f", std::abs(k - 1.0)) + ", bound 0.08); time " +
                   fmt("%.1f s", lap3.seconds));
    }
    {
        std::string why;
        bool ok = true;
        for (const PresetRun* p : {&lap2, &cb}) {
            ok = suite_ok(*p, "volume", why) && ok;
            why += p->config.preset + " spread=" + fmt("%.4f", data(*p, "volume").value("spread", -1.0)) + "; ";
        }
        report(3, "Volume identity", ok, why);
    }
    {
        std::string why;
        bool ok = true;
        for (const auto& [name, p] : runs) {
            ok = suite_ok(p, "nesting", why) && ok;
            std::size_t strict = 0, band = 0;
            for (const auto& pr : data(p, "nesting").value("pairs", json::array())) {
                strict += pr.at("strict_violations").get<std::size_t>();
                band += pr.at("band_violations").get<std::size_t>();
            }
            ok = ok && strict == 0;
            why += name + " strict=" + std::to_string(strict) + " band=" + std::to_string(band) + "; ";
        }
        report(4, "Nesting", ok, why);
    }
    {
        std::string why;
        const bool ok = suite_ok(cb, "inclusions", why);
        const json& d = data(cb, "inclusions");
        why += "c spread=" + fmt("%.4f", d.value("c_spread", -1.0)) + " C spread=" + fmt("%.4f", d.value("C_spread", -1.0));
        report(5, "Ball inclusions checkerboard2d", ok, why);
    }
    {
        std::string why;
        bool ok = true;
        for (const PresetRun* p : {&lap2, &cb}) {
            ok = suite_ok(*p, "truncation", why) && ok;
            const json& d = data(*p, "truncation");
            why += p->config.preset + " mismatches=" + std::to_string(d.value("indicator_mismatches", std::size_t{0})) +
                   " max_diff=" + fmt("%.3g", d.value("max_difference", -1.0)) + "; ";
        }
        report(6, "Truncation independence", ok, why);
    }
    {
        std::string why;
        bool ok = true;
        for (const auto& [name, p] : runs) {
            ok = suite_ok(p, "monotone_average", why) && ok;
            const json& d = data(p, "monotone_average");
            if (d.empty()) continue;
            why += name + " const_dev=" + fmt("%.2g", d["constant"].value("max_deviation", -1.0)) +
                   " pole_viol=" + std::to_string(d["pole"].value("violations", std::size_t{0})) +
                   " bump_viol=" + std::to_string(d["bump"].value("violations", std::size_t{0})) + "; ";
        }
        report(7, "Monotone averages", ok, why);
    }
    {
        std::string why;
        bool ok = true;
        for (const PresetRun* p : {&lap2, &cb}) {
            ok = suite_ok(*p, "comparison", why) && ok;
            double worst = -1e300;
            for (const auto& it : data(*p, "comparison").value("items", json::array()))
                worst = std::max(worst, it.at("violation").get<double>());
            why += p->config.preset + " worst violation=" + fmt("%.3g", worst) + "; ";
        }
        report(8, "Comparison suite", ok, why);
    }
    {
        std::string why;
        bool ok = true;
        for (const auto& [name, p] : runs) {
            ok = suite_ok(p, "penalty_ordering", why) && ok;
            double worst = -1e300;
            for (const auto& rec : data(p, "penalty_ordering").value("radii", json::array())) {
                for (const auto& x : rec.at("pairs")) worst = std::max(worst, x.at("excess").get<double>());
                for (const auto& x : rec.at("limit")) worst = std::max(worst, x.at("excess").get<double>());
            }
            why += name + " max excess=" + fmt("%.3g", worst) + "; ";
        }
        report(9, "Penalty-family orderings", ok, why);
    }
    {
        std::string why;
        bool ok = true;
        for (const auto& [name, p] : runs) {
            ok = suite_ok(p, "cross_route", why) && ok;
            double worst = 0.0;
            for (const auto& rec : data(p, "cross_route").value("radii", json::array()))
                worst = std::max({worst, rec.at("lcp_semilinear").get<double>() / rec.at("max_v").get<double>(),
                                  rec.at("lcp_variational").get<double>() / rec.at("max_v").get<double>(),
                                  rec.at("semilinear_variational").get<double>() / rec.at("max_v").get<double>()});
            why += name + " max diff/max v=" + fmt("%.3g", worst) + "; ";
        }
        report(10, "Cross-solver equivalence", ok, why);
    }
    {
        std::string why;
        bool ok = true;
        for (const auto& [name, p] : runs) {
            const json& d = data(p, "growth");
            if (!suite_ok(p, "growth", why)) ok = false;
            const double lo = d.value("slope_min", 0.0), hi = d.value("slope_max", 0.0);
            if (p.config.coefficients.kind == CoefficientKind::constant) ok = ok && lo >= 1.8 && hi <= 2.2;
            why += name + " slopes [" + fmt("%.3f", lo) + ", " + fmt("%.3f", hi) + "]; ";
        }
        report(11, "Quadratic growth", ok, why);
    }
    {
        std::string why;
        bool ok = true;
        for (const auto& [name, p] : runs) {
            ok = suite_ok(p, "fb_measure", why) && ok;
            why += name + " codim=" + fmt("%.3f", data(p, "fb_measure").value("slope", 0.0)) + "; ";
        }
        report(12, "Free-boundary measure decay", ok, why);
    }
    {
        bool ok = true;
        double worst = 0.0, lowest = 0.0;
        std::size_t solves = 0;
        for (const auto& [name, p] : runs)
            for (const auto& e : p.sweep.entries) {
                ++solves;
                ok = ok && e.solution.converged && e.solution.comp_residual <= 1e-8 && e.solution.v.minCoeff() >= 0.0;
                worst = std::max(worst, e.solution.comp_residual);
                lowest = std::min(lowest, e.solution.v.minCoeff());
            }
        report(13, "LCP complementarity", ok,
               std::to_string(solves) + " solves, max comp_residual=" + fmt("%.3g", worst) + " min v=" + fmt("%.3g", lowest));
    }
    {
        const fs::path base = fs::temp_directory_path() / ("mvs_acceptance_" + std::to_string(::getpid()));
        fs::remove_all(base);
        RunOptions a, b;
        a.out_dir = (base / "a").string();
        b.out_dir = (base / "b").string();
        bool ok = cmd_solve(lap2.config, a) == exit_ok && cmd_solve(lap2.config, b) == exit_ok;
        std::size_t compared = 0, differing = 0;
        for (const auto& e : fs::directory_iterator(base / "a")) {
            if (e.path().filename() == "timings.json") continue;
            ++compared;
            if (slurp(e.path()) != slurp(base / "b" / e.path().filename())) ++differing;
        }
        ok = ok && compared > 0 && differing == 0;
        fs::remove_all(base);
        report(14, "Determinism", ok, std::to_string(compared) + " artifacts compared, " + std::to_string(differing) + " differ");
    }

    std::printf("%d of 14 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
