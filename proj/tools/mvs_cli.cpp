#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mvs/cli.hpp"

namespace {

struct Common {
    std::string config;
    std::string preset;
    std::string out;
    int jobs = 1;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "JSON run configuration");
    cmd->add_option("--preset", c.preset, "built-in configuration")
        ->check(CLI::IsMember(mvs::preset_names()));
    cmd->add_option("--out", c.out, "output directory (overrides output.directory)");
    cmd->add_option("--jobs", c.jobs, "worker threads for independent solves and suites")->check(CLI::PositiveNumber);
}

mvs::RunConfig load(const Common& c) {
    if (c.config.empty() == c.preset.empty()) throw mvs::PreconditionError("give exactly one of --config or --preset");
    return c.config.empty() ? mvs::load_preset(c.preset) : mvs::load_config_file(c.config);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mean value sets of divergence-form operators via discrete obstacle problems"};
    app.require_subcommand(1);

    Common solve_opts, verify_opts, svg_opts;
    double svg_R = 0.0;
    auto* solve = app.add_subcommand("solve", "solve the obstacle problem over the R-sweep and export artifacts");
    add_common(solve, solve_opts);
    auto* verify = app.add_subcommand("verify", "solve, then run the configured verification suites");
    add_common(verify, verify_opts);
    auto* svg = app.add_subcommand("export-svg", "render SVG pictures of D_R from a previous solve");
    add_common(svg, svg_opts);
    svg->add_option("--R", svg_R, "radius to export (default: all)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : mvs::exit_invalid;
    }

    try {
        if (*solve) {
            const auto cfg = load(solve_opts);
            return mvs::cmd_solve(cfg, {solve_opts.out, solve_opts.jobs, &std::cout});
        }
        if (*verify) {
            const auto cfg = load(verify_opts);
            return mvs::cmd_verify(cfg, {verify_opts.out, verify_opts.jobs, &std::cout});
        }
        const auto cfg = load(svg_opts);
        return mvs::cmd_export_svg(cfg, svg_R, {svg_opts.out, svg_opts.jobs, &std::cout});
    } catch (const mvs::ConvergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return mvs::exit_nonconvergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return mvs::exit_invalid;
    }
}
