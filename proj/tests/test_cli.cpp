#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "mvs/cli.hpp"

using namespace mvs;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("mvs_cli_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run(const std::string& args) {
    const std::string cmd = std::string(MVS_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path write_config(const fs::path& dir, const json& j) {
    const fs::path p = dir / "config.json";
    std::ofstream(p) << j.dump(2);
    return p;
}

json small_config(json suites = json::object()) {
    return {{"schema", "mvs-run/1"},
            {"seed", 3},
            {"grid", {{"dim", 2}, {"M", 1.0}, {"h", 1.0 / 32}}},
            {"coefficients", {{"kind", "constant"}}},
            {"problem", {{"R", {0.25, 0.5}}}},
            {"suites", std::move(suites)},
            {"output", {{"directory", "unused"}, {"formats", {"csv", "svg"}}}}};
}

std::pair<double, double> svg_radii(const fs::path& svg) {
    const std::string text = slurp(svg);
    std::smatch m;
    const std::regex re("r_in=([0-9.eE+-]+) r_out=([0-9.eE+-]+)");
    if (!std::regex_search(text, m, re)) return {0.0, 0.0};
    return {std::stod(m[1]), std::stod(m[2])};
}

}  // namespace

TEST(Cli, SolvePresetWritesArtifacts) {
    const fs::path out = scratch_dir("solve");
    ASSERT_EQ(run("solve --preset laplace2d --out " + out.string()), 0);
    for (const char* tag : {"0.25", "0.5", "1"}) {
        EXPECT_TRUE(fs::exists(out / ("solution_R" + std::string(tag) + ".csv"))) << tag;
        EXPECT_TRUE(fs::exists(out / ("indicator_R" + std::string(tag) + ".csv"))) << tag;
        EXPECT_TRUE(fs::exists(out / ("set_R" + std::string(tag) + ".svg"))) << tag;
    }
    const json m = read_json_file(out / "manifest.json");
    EXPECT_EQ(m.at("schema"), "mvs-manifest/1");
    EXPECT_EQ(m.at("config_hash"), config_hash(load_preset("laplace2d")));
    EXPECT_EQ(m.at("grid").at("h"), 1.0 / 64);
    ASSERT_EQ(m.at("solves").size(), 3u);
    for (const auto& s : m.at("solves")) {
        EXPECT_TRUE(s.at("converged").get<bool>());
        EXPECT_LE(s.at("comp_residual").get<double>(), 1e-8);
        EXPECT_GE(s.at("min_value").get<double>(), 0.0);
    }
    EXPECT_TRUE(m.at("seeds").contains("streams"));
    EXPECT_TRUE(fs::exists(out / "timings.json"));
    for (const auto& e : fs::directory_iterator(out)) EXPECT_EQ(e.path().string().find(".tmp."), std::string::npos);

    const auto rows = read_csv(out / "solution_R0.5.csv", 3);
    EXPECT_FALSE(rows.empty());
    EXPECT_EQ(slurp(out / "solution_R0.5.csv").substr(0, 6), "x,y,v\n");
}

TEST(Cli, RepeatedSolveIsByteIdentical) {
    const fs::path a = scratch_dir("det_a"), b = scratch_dir("det_b");
    ASSERT_EQ(run("solve --preset laplace2d --out " + a.string()), 0);
    ASSERT_EQ(run("solve --preset laplace2d --out " + b.string() + " --jobs 2"), 0);
    std::size_t compared = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        const auto name = e.path().filename();
        if (name == "timings.json") continue;
        ASSERT_TRUE(fs::exists(b / name)) << name;
        EXPECT_EQ(slurp(e.path()), slurp(b / name)) << name;
        ++compared;
    }
    EXPECT_GE(compared, 10u);
}

TEST(Cli, InvalidConfigurationsExitWithOne) {
    const fs::path dir = scratch_dir("invalid");
    json too_big = small_config();
    too_big["problem"]["R"] = {0.75};
    EXPECT_EQ(run("solve --config " + write_config(dir, too_big).string() + " --out " + dir.string()), 1);
    json unknown = small_config();
    unknown["grid"]["spacing"] = 0.1;
    EXPECT_EQ(run("solve --config " + write_config(dir, unknown).string() + " --out " + dir.string()), 1);
    EXPECT_EQ(run("solve --config " + (dir / "absent.json").string()), 1);
    EXPECT_EQ(run("solve --preset laplace2d --config " + write_config(dir, small_config()).string()), 1);
    EXPECT_EQ(run("solve"), 1);
    EXPECT_EQ(run("solve --preset nosuch"), 1);
    EXPECT_EQ(run("solve --preset laplace2d --jobs 0"), 1);
    EXPECT_EQ(run("frobnicate"), 1);
    EXPECT_FALSE(fs::exists(dir / "manifest.json"));
}

TEST(Cli, EmptySuitesBlockVerifiesCleanly) {
    const fs::path dir = scratch_dir("empty_suites");
    ASSERT_EQ(run("verify --config " + write_config(dir, small_config()).string() + " --out " + dir.string()), 0);
    const json report = read_json_file(dir / "report.json");
    EXPECT_EQ(report.at("schema"), "mvs-report/1");
    EXPECT_TRUE(report.at("suites").empty());
    EXPECT_EQ(report.at("exit_code"), 0);
}

TEST(Cli, FailingSuiteExitsWithThree) {
    const fs::path dir = scratch_dir("failing");
    const json cfg = small_config({{"volume", {{"tolerance", 1e-6}}}, {"nesting", true}});
    ASSERT_EQ(run("verify --config " + write_config(dir, cfg).string() + " --out " + dir.string()), 3);
    const json report = read_json_file(dir / "report.json");
    EXPECT_FALSE(report.at("suites").at("volume").at("passed").get<bool>());
    EXPECT_TRUE(report.at("suites").at("nesting").at("passed").get<bool>());
    EXPECT_EQ(read_json_file(dir / "manifest.json").at("suites").at("volume"), "fail");
}

TEST(Cli, SweepCapExitsWithTwo) {
    const fs::path dir = scratch_dir("nonconv");
    json cfg = small_config();
    cfg["problem"]["max_sweeps"] = 2;
    EXPECT_EQ(run("solve --config " + write_config(dir, cfg).string() + " --out " + dir.string()), 2);
}

TEST(Cli, ExportSvgNeedsArtifacts) {
    const fs::path dir = scratch_dir("export_missing");
    EXPECT_EQ(run("export-svg --config " + write_config(dir, small_config()).string() + " --out " + dir.string()), 1);
    json three = small_config();
    three["grid"]["dim"] = 3;
    three["grid"]["h"] = 0.125;
    three["output"]["formats"] = {"csv"};
    EXPECT_EQ(run("export-svg --config " + write_config(dir, three).string() + " --out " + dir.string()), 1);
}

TEST(Cli, ExportSvgRejectsForeignManifest) {
    const fs::path dir = scratch_dir("export_foreign");
    const fs::path cfg = write_config(dir, small_config());
    ASSERT_EQ(run("solve --config " + cfg.string() + " --out " + dir.string()), 0);
    json other = small_config();
    other["seed"] = 4;
    const fs::path sub = dir / "other";
    fs::create_directories(sub);
    EXPECT_EQ(run("export-svg --config " + write_config(sub, other).string() + " --out " + dir.string()), 1);
}

TEST(Cli, ExportSvgRebuildsLaplacianPicture) {
    const fs::path dir = scratch_dir("export_laplace");
    ASSERT_EQ(run("solve --preset laplace2d --out " + dir.string()), 0);
    const std::string original = slurp(dir / "set_R0.5.svg");
    fs::remove(dir / "set_R0.5.svg");
    ASSERT_EQ(run("export-svg --preset laplace2d --R 0.5 --out " + dir.string()), 0);
    EXPECT_EQ(slurp(dir / "set_R0.5.svg"), original);
    EXPECT_EQ(run("export-svg --preset laplace2d --R 0.3 --out " + dir.string()), 1);
    const auto [r_in, r_out] = svg_radii(dir / "set_R0.5.svg");
    const double rho = 0.5 / std::sqrt(std::numbers::pi), h = 1.0 / 64;
    EXPECT_NEAR(r_in, rho, 2.0 * h);
    EXPECT_NEAR(r_out, rho, 2.0 * h);
    EXPECT_NE(original.find("<svg"), std::string::npos);
    EXPECT_EQ(original.find("href"), std::string::npos);
}

TEST(Cli, CheckerboardPictureSeparatesCircles) {
    const fs::path dir = scratch_dir("export_checker");
    json cfg = small_config();
    cfg["grid"] = {{"dim", 2}, {"M", 2.0}, {"h", 1.0 / 64}};
    cfg["coefficients"] = {{"kind", "checkerboard"}, {"params", {{"alpha", 1.0}, {"beta", 10.0}, {"block", 1.0}}}};
    cfg["problem"]["R"] = {0.5, 1.0};
    ASSERT_EQ(run("solve --config " + write_config(dir, cfg).string() + " --out " + dir.string()), 0);
    const auto [cb_in, cb_out] = svg_radii(dir / "set_R1.svg");
    EXPECT_GT(cb_out - cb_in, 4.0 / 64);

    const fs::path lap = scratch_dir("export_checker_ref");
    cfg["coefficients"] = {{"kind", "constant"}};
    ASSERT_EQ(run("solve --config " + write_config(lap, cfg).string() + " --out " + lap.string()), 0);
    const auto [l_in, l_out] = svg_radii(lap / "set_R1.svg");
    EXPECT_GT((cb_out - cb_in) / cb_out, 2.0 * (l_out - l_in) / l_out);
}

TEST(Config, PresetsParseAndHashDistinctly) {
    std::set<std::string> hashes;
    for (const auto& name : preset_names()) {
        const RunConfig c = load_preset(name);
        EXPECT_EQ(c.preset, name);
        EXPECT_EQ(config_hash(c), config_hash(load_preset(name)));
        hashes.insert(config_hash(c));
    }
    EXPECT_EQ(hashes.size(), preset_names().size());
    EXPECT_THROW(load_preset("nosuch"), PreconditionError);
}

TEST(Config, PresetKeyIsAMergeBase) {
    const RunConfig c = parse_config(json{{"preset", "laplace2d"}, {"seed", 9}, {"grid", {{"h", 1.0 / 32}}}});
    EXPECT_EQ(c.seed, 9u);
    EXPECT_EQ(c.grid.h, 1.0 / 32);
    EXPECT_EQ(c.grid.M, 2.0);
    EXPECT_NE(config_hash(c), config_hash(load_preset("laplace2d")));
}

TEST(Config, RejectsBadInput) {
    EXPECT_THROW(parse_config(json::array()), PreconditionError);
    json bad = small_config();
    bad["schema"] = "mvs-run/0";
    EXPECT_THROW(parse_config(bad), PreconditionError);
    bad = small_config();
    bad["extra"] = 1;
    EXPECT_THROW(parse_config(bad), PreconditionError);
    bad = small_config();
    bad["problem"]["R"] = {0.6};
    EXPECT_THROW(parse_config(bad), PreconditionError);
    bad = small_config();
    bad["problem"]["route"] = "magic";
    EXPECT_THROW(parse_config(bad), Error);
}

TEST(Config, RadiiAreSortedAndUnique) {
    json j = small_config();
    j["problem"]["R"] = {0.5, 0.25, 0.5};
    const RunConfig c = parse_config(j);
    EXPECT_EQ(c.problem.R, (std::vector<double>{0.25, 0.5}));
}

TEST(Config, NamedStreamsDiffer) {
    EXPECT_NE(coefficient_seed(7), growth_seed(7));
    EXPECT_NE(coefficient_seed(7), coefficient_seed(8));
    EXPECT_EQ(coefficient_seed(7), coefficient_seed(7));
}

TEST(Io, SeventeenDigitsRoundTrip) {
    for (double x : {0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300}) EXPECT_EQ(std::stod(format_double(x)), x);
    EXPECT_EQ(format_tag(0.25), "0.25");
    EXPECT_EQ(format_tag(1.0), "1");
}

TEST(Io, AtomicWriteReplacesContent) {
    const fs::path dir = scratch_dir("atomic");
    write_atomic(dir / "deep" / "f.txt", "one");
    write_atomic(dir / "deep" / "f.txt", "two");
    EXPECT_EQ(slurp(dir / "deep" / "f.txt"), "two");
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir / "deep")) {
        (void)e;
        ++files;
    }
    EXPECT_EQ(files, 1u);
}

TEST(Io, JsonKeysAreSorted) {
    const std::string text = json_text(json{{"zeta", 1}, {"alpha", 2}, {"mid", {{"b", 1}, {"a", 2}}}});
    EXPECT_LT(text.find("alpha"), text.find("mid"));
    EXPECT_LT(text.find("mid"), text.find("zeta"));
    EXPECT_LT(text.find("\"a\""), text.find("\"b\""));
    EXPECT_EQ(text.back(), '\n');
}

TEST(Io, CsvRoundTripOnSupportBox) {
    const Grid g = build_grid(2, 1.0, 0.125);
    Field v(static_cast<Eigen::Index>(g.size()));
    std::vector<std::uint8_t> flags(g.size(), 0);
    for (NodeIndex i = 0; i < g.size(); ++i) {
        v[static_cast<Eigen::Index>(i)] = std::sin(1.0 + static_cast<double>(i));
        flags[i] = g.radius(i) < 0.2;
    }
    const NodeBox box = support_box(g, flags, 1);
    const fs::path p = scratch_dir("csv") / "f.csv";
    write_atomic(p, field_csv(g, v, box));
    const auto rows = read_csv(p, 3);
    const int side = box.hi[0] - box.lo[0] + 1;
    ASSERT_EQ(rows.size(), static_cast<std::size_t>(side * side));
    EXPECT_EQ(side, 5);
    for (const auto& r : rows) {
        const auto i = static_cast<NodeIndex>(g.node_at({r[0], r[1], 0.0}));
        EXPECT_EQ(r[2], v[static_cast<Eigen::Index>(i)]);
    }
}

TEST(Io, SvgIsDeterministicAndSelfContained) {
    SvgSet s;
    s.h = 0.25;
    s.R = 0.5;
    s.r_in = 0.2;
    s.r_out = 0.4;
    s.kappa = 1.0;
    s.cells = {{0.0, 0.0}, {0.25, 0.0}, {0.0, 0.25}, {-0.25, 0.0}};
    SvgSet shuffled = s;
    std::reverse(shuffled.cells.begin(), shuffled.cells.end());
    const std::string a = set_svg(s);
    EXPECT_EQ(a, set_svg(shuffled));
    EXPECT_NE(a.find("version=\"1.1\""), std::string::npos);
    EXPECT_EQ(std::count(a.begin(), a.end(), '\n') > 5, true);
    s.cells.clear();
    EXPECT_THROW(set_svg(s), PreconditionError);
}

TEST(Verdict, ExitCodePrecedence) {
    SuiteResult ok, fail, inconclusive, nonconv;
    ok.passed = true;
    inconclusive.inconclusive = true;
    nonconv.nonconvergence = true;
    EXPECT_EQ(verdict({}), 0);
    EXPECT_EQ(verdict({ok}), 0);
    EXPECT_EQ(verdict({ok, inconclusive}), 4);
    EXPECT_EQ(verdict({inconclusive, fail}), 3);
    EXPECT_EQ(verdict({fail, nonconv, inconclusive}), 2);
}

TEST(Parallel, RethrowsFirstFailure) {
    std::vector<int> hits(8, 0);
    parallel_for(8, 3, [&](std::size_t i) { hits[i] = 1; });
    EXPECT_EQ(std::count(hits.begin(), hits.end(), 1), 8);
    EXPECT_THROW(parallel_for(4, 2, [](std::size_t i) {
                     if (i == 2) throw PreconditionError("boom");
                 }),
                 PreconditionError);
}
