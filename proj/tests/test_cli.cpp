#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "cheyette/curves.hpp"
#include "cheyette/models.hpp"
#include "cheyette/pricing.hpp"

// Spawns the installed binary; CHEYETTE_CLI_PATH and CHEYETTE_DATA_DIR come
// from the build system.

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cheyette;

namespace {

struct CliRun {
    int exit_code;
    std::string output;  // stdout and stderr combined
};

// run the CLI with cwd set to dir so relative inputs/outputs stay inside it
CliRun run_cli(const fs::path& dir, const std::string& args) {
    const fs::path log = dir / "cli_output.log";
    const std::string cmd = "cd \"" + dir.string() + "\" && \"" CHEYETTE_CLI_PATH "\" " +
                            args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    CliRun run;
    run.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::ostringstream out;
    out << in.rdbuf();
    run.output = out.str();
    return run;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), "missing file ", path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void spit(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

bool contains(const std::string& text, const std::string& needle) {
    return text.find(needle) != std::string::npos;
}

// fresh working directory per test case
class TempDir {
  public:
    explicit TempDir(const std::string& tag)
        : path_(fs::temp_directory_path() / ("cheyette-cli-" + tag)) {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

  private:
    fs::path path_;
};

// flat curves and the published LinBRLV parameters shared by the commands
void write_market_fixtures(const fs::path& dir) {
    Curve::flat(CurveLabel::Forecasting, 0.025).save(dir / "forecast.txt");
    Curve::flat(CurveLabel::Discounting, 0.02).save(dir / "discount.txt");

    const ModelSetting setting{LocalVolForm::LinBRLV, SVForm::NoSV};
    ModelParams params = fixture_for(setting).fixed_params;
    for (const auto& [name, value] : fixture_for(setting).calibrated)
        set_free_param(setting, params, name, value);
    spit(dir / "params.json", params_to_json(setting, params).dump(2) + "\n");
}

std::string caplet_env_json() {
    return R"({
  "parse_values": {
    "strikes": [0.02, 0.03],
    "maturity": 1.0,
    "fixingtime": 1.0,
    "paytime": 1.25
  }
})";
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("version, help and argument errors") {
    TempDir dir("version");

    const CliRun version = run_cli(dir.path(), "--version");
    CHECK(version.exit_code == 0);
    CHECK(contains(version.output, "0.1.0"));

    const CliRun help = run_cli(dir.path(), "--help");
    CHECK(help.exit_code == 0);
    CHECK(contains(help.output, "synth-market"));
    CHECK(contains(help.output, "calibrate"));

    CHECK(run_cli(dir.path(), "").exit_code == 2);           // subcommand required
    CHECK(run_cli(dir.path(), "price").exit_code == 2);      // missing required options
    CHECK(run_cli(dir.path(), "frobnicate").exit_code == 2);  // unknown subcommand
}

TEST_CASE("check classifies a script") {
    TempDir dir("check");
    const ModelSetting setting{LocalVolForm::LinBRLV, SVForm::CIRSV};
    spit(dir.path() / "caplet.chey", builtin_script(setting, MeasureKind::TForward));
    spit(dir.path() / "env.json", caplet_env_json());

    const CliRun run = run_cli(dir.path(), "check caplet.chey --env env.json");
    CHECK(run.exit_code == 0);
    CHECK(contains(run.output, "check OK: caplet.chey"));
    CHECK(contains(run.output, "brownians: W Z"));
    CHECK(contains(run.output, "free parameters: mr measT theta volofvar delta a b poa"));
    CHECK(contains(run.output,
                   "payoffs (2): calloption_strike_0.020000 calloption_strike_0.030000"));
    CHECK(contains(run.output, "observation times: 1"));

    // a script with nothing to simulate is a validation failure
    spit(dir.path() / "empty.chey", "# nothing here\n");
    const CliRun empty = run_cli(dir.path(), "check empty.chey");
    CHECK(empty.exit_code == 2);
    CHECK(contains(empty.output, "script has no system lines"));

    // unreadable input is an I/O failure
    const CliRun missing = run_cli(dir.path(), "check nonexistent.chey");
    CHECK(missing.exit_code == 1);
    CHECK(contains(missing.output, "cannot open"));

    // parse-time names must be supplied by the environment
    const CliRun unbound = run_cli(dir.path(), "check caplet.chey");
    CHECK(unbound.exit_code == 2);
    CHECK(contains(unbound.output, "strikes"));
}

TEST_CASE("synth-market and price round trip deterministically") {
    TempDir dir("price");
    write_market_fixtures(dir.path());

    const CliRun synth = run_cli(
        dir.path(),
        "synth-market --params params.json --forecast-curve forecast.txt "
        "--discount-curve discount.txt --out quotes.txt --maturity 0.5 --tenor 0.25 "
        "--n-strikes 3 --width-bp 50 --paths 512 --seed 7");
    CHECK(synth.exit_code == 0);
    CHECK(contains(synth.output, "wrote 3 quotes to quotes.txt"));

    const auto quotes = pricing::load_quotes((dir.path() / "quotes.txt").string());
    REQUIRE(quotes.size() == 3);
    for (const auto& q : quotes) {
        CHECK(q.maturity == 0.5);
        CHECK(q.tenor == 0.25);
        CHECK(q.price > 0.0);
    }
    CHECK(quotes[0].strike < quotes[1].strike);
    CHECK(quotes[1].strike < quotes[2].strike);

    const json synth_manifest = json::parse(slurp(dir.path() / "quotes.txt.manifest.json"));
    CHECK(synth_manifest.at("command") == "synth-market");
    CHECK(synth_manifest.at("seeds") == json::array({7}));

    // pricing the synthetic market with the same seed and path count
    // reproduces it exactly, so every diff is zero
    const std::string price_args =
        "price --params params.json --forecast-curve forecast.txt "
        "--discount-curve discount.txt --quotes quotes.txt --paths 512 --seed 7";
    const CliRun price = run_cli(dir.path(), price_args + " --out diffs.txt");
    CHECK(price.exit_code == 0);
    CHECK(contains(price.output, "good_fit: yes (3/3 quotes within 2 SE)"));

    const std::string diffs = slurp(dir.path() / "diffs.txt");
    CHECK(contains(diffs, "# strike market model diff se within_2se"));
    CHECK(contains(diffs, "yes"));

    const json manifest = json::parse(slurp(dir.path() / "diffs.txt.manifest.json"));
    CHECK(manifest.at("command") == "price");
    CHECK(manifest.at("version") == "0.1.0");
    CHECK(manifest.at("outputs") == json::array({"diffs.txt"}));

    const CliRun again = run_cli(dir.path(), price_args + " --out diffs2.txt");
    CHECK(again.exit_code == 0);
    CHECK(slurp(dir.path() / "diffs2.txt") == diffs);

    // explicit strike lists bypass the ATM ladder
    const CliRun explicit_strikes = run_cli(
        dir.path(),
        "synth-market --params params.json --forecast-curve forecast.txt "
        "--discount-curve discount.txt --out two.txt --maturity 0.5 --tenor 0.25 "
        "--strikes 0.02,0.025 --paths 256 --seed 3");
    CHECK(explicit_strikes.exit_code == 0);
    const auto two = pricing::load_quotes((dir.path() / "two.txt").string());
    REQUIRE(two.size() == 2);
    CHECK(two[0].strike == 0.02);
    CHECK(two[1].strike == 0.025);
}

TEST_CASE("price failure modes") {
    TempDir dir("price-errors");
    write_market_fixtures(dir.path());
    spit(dir.path() / "quotes.txt", "0.5 0.25 0.02 0.001\n");

    spit(dir.path() / "broken.json", "{oops\n");
    const CliRun bad_json = run_cli(
        dir.path(),
        "price --params broken.json --forecast-curve forecast.txt "
        "--discount-curve discount.txt --quotes quotes.txt");
    CHECK(bad_json.exit_code == 2);
    CHECK(contains(bad_json.output, "error:"));

    const CliRun no_quotes = run_cli(
        dir.path(),
        "price --params params.json --forecast-curve forecast.txt "
        "--discount-curve discount.txt --quotes nowhere.txt");
    CHECK(no_quotes.exit_code == 1);
    CHECK(contains(no_quotes.output, "cannot open"));

    const CliRun bad_measure = run_cli(
        dir.path(),
        "price --params params.json --forecast-curve forecast.txt "
        "--discount-curve discount.txt --quotes quotes.txt --measure actuarial");
    CHECK(bad_measure.exit_code == 2);
    CHECK(contains(bad_measure.output, "unknown measure"));
}

TEST_CASE("calibrate runs a config and reproduces its report") {
    TempDir dir("calibrate");
    const fs::path work = dir.path() / "work";
    fs::create_directories(work);
    write_market_fixtures(work);

    // CRN-exact market: the calibration searches at the same seed and path
    // count that generated the quotes
    const CliRun synth = run_cli(
        work, "synth-market --params params.json --forecast-curve forecast.txt "
              "--discount-curve discount.txt --out quotes.txt --maturity 0.25 "
              "--tenor 0.25 --n-strikes 3 --width-bp 50 --paths 128 --seed 7");
    REQUIRE(synth.exit_code == 0);

    const std::string config = R"({
  "params": "params.json",
  "quotes": "quotes.txt",
  "forecast_curve": "forecast.txt",
  "discount_curve": "discount.txt",
  "paths": 128,
  "validation_paths": 128,
  "sim_seed": 7,
  "validation_seed": 7,
  "seed": 5,
  "de": {
    "population": 8,
    "max_generations": 12,
    "stagnation": 12,
    "replications": 1,
    "tolerance": 1e-18,
    "n_threads": 1
  },
  "out_prefix": "run1"
})";
    spit(work / "config.json", config);

    // run from the parent directory: config-relative paths must still resolve
    const CliRun cal = run_cli(dir.path(), "calibrate work/config.json");
    CHECK(cal.exit_code == 0);
    CHECK(contains(cal.output, "segment 1: objective="));
    CHECK(contains(cal.output, "wrote work/run1.report.json"));

    const json report = json::parse(slurp(work / "run1.report.json"));
    CHECK(report.at("command") == "calibrate");
    CHECK(report.at("mode") == "best-seed");
    CHECK(report.at("setting") == "LinBRLV");
    const json& result = report.at("results").at(0);
    CHECK(result.at("x").size() == 2);
    CHECK(result.at("free_names") == json::array({"a", "b"}));
    // validation reuses the CRN seed here, so the fit must be essentially exact
    CHECK(result.at("objective").get<double>() < 1e-8);
    CHECK(result.at("good_fit") == true);
    CHECK(result.at("seeds").size() == 1);
    CHECK(result.at("schedule").at(0).at("t_end") == "inf");

    CHECK(contains(slurp(work / "run1.diffs.txt"), "# maturity 0.25"));
    const json manifest = json::parse(slurp(work / "run1.manifest.json"));
    CHECK(manifest.at("command") == "calibrate");

    // identical configuration, identical report bytes
    std::string config2 = config;
    config2.replace(config2.find("run1"), 4, "run2");
    spit(work / "config2.json", config2);
    const CliRun again = run_cli(dir.path(), "calibrate work/config2.json");
    CHECK(again.exit_code == 0);
    std::string report2 = slurp(work / "run2.report.json");
    CHECK(report2 == slurp(work / "run1.report.json"));
    CHECK(slurp(work / "run2.diffs.txt") == slurp(work / "run1.diffs.txt"));
}

TEST_CASE("calibrate config validation") {
    TempDir dir("calibrate-errors");
    write_market_fixtures(dir.path());
    spit(dir.path() / "quotes.txt", "0.25 0.25 0.025 0.001\n");

    spit(dir.path() / "incomplete.json", R"({"quotes": "quotes.txt"})");
    const CliRun missing = run_cli(dir.path(), "calibrate incomplete.json");
    CHECK(missing.exit_code == 2);
    CHECK(contains(missing.output, "missing 'params'"));

    spit(dir.path() / "badmode.json", R"({
  "params": "params.json",
  "quotes": "quotes.txt",
  "forecast_curve": "forecast.txt",
  "discount_curve": "discount.txt",
  "mode": "annealing"
})");
    const CliRun mode = run_cli(dir.path(), "calibrate badmode.json");
    CHECK(mode.exit_code == 2);
    CHECK(contains(mode.output, "unknown mode 'annealing'"));
}

TEST_CASE("codegen writes, verifies and documents a module") {
    TempDir dir("codegen");
    Curve::flat(CurveLabel::Forecasting, 0.025).save(dir.path() / "forecast.txt");

    const ModelSetting setting{LocalVolForm::LinBRLV, SVForm::CIRSV};
    spit(dir.path() / "caplet.chey", builtin_script(setting, MeasureKind::TForward));
    spit(dir.path() / "env.json", R"({
  "parse_values": {
    "strikes": [0.02, 0.03],
    "maturity": 1.0,
    "fixingtime": 1.0,
    "paytime": 1.25
  },
  "bindings": {
    "mr": 0.03,
    "measT": 1.25,
    "theta": 0.2,
    "volofvar": 0.5,
    "delta": 0.25,
    "a": 0.005,
    "b": -0.1,
    "poa": 1.0
  },
  "externals": { "initfwd": "forecast.txt" }
})");

    const CliRun gen = run_cli(dir.path(),
                               "codegen caplet.chey --env env.json --out gen.cpp "
                               "--verify --verify-paths 64 --seed 3");
    CHECK(gen.exit_code == 0);
    CHECK(contains(gen.output, "wrote gen.cpp ("));
    CHECK(contains(gen.output, "verify OK: 2 payoffs x 64 paths bit-identical"));

    const std::string source = slurp(dir.path() / "gen.cpp");
    CHECK(contains(source, "extern \"C\""));

    const json manifest = json::parse(slurp(dir.path() / "gen.cpp.manifest.json"));
    CHECK(manifest.at("backend_profile") == "cpp");
    const std::string hash = manifest.at("program_hash").get<std::string>();
    CHECK(hash.rfind("fnv1a64:", 0) == 0);
    CHECK(hash.size() == 8 + 16);

    const json run_manifest = json::parse(slurp(dir.path() / "gen.cpp.run.json"));
    CHECK(run_manifest.at("command") == "codegen");
    CHECK(run_manifest.at("outputs").size() == 2);

    const CliRun bad_profile =
        run_cli(dir.path(), "codegen caplet.chey --env env.json --out gen.f90 "
                            "--profile fortran");
    CHECK(bad_profile.exit_code == 2);
    CHECK(contains(bad_profile.output, "fortran"));
}

TEST_CASE("shipped data files work end to end") {
    TempDir dir("data");
    const fs::path data = fs::path(CHEYETTE_DATA_DIR);

    const CliRun check = run_cli(
        dir.path(), "check \"" + (data / "scripts" / "caplet_cirsv_tfwd.chey").string() +
                        "\" --env \"" + (data / "scripts" / "caplet_env.json").string() +
                        "\"");
    CHECK(check.exit_code == 0);
    CHECK(contains(check.output, "check OK"));

    const CliRun price = run_cli(
        dir.path(), "price --params \"" + (data / "params" / "linbrlv_nosv.json").string() +
                        "\" --forecast-curve \"" +
                        (data / "curves" / "forecasting.txt").string() +
                        "\" --discount-curve \"" +
                        (data / "curves" / "discounting.txt").string() + "\" --quotes \"" +
                        (data / "quotes" / "sample_quotes.txt").string() +
                        "\" --paths 256 --seed 1 --out diffs.txt");
    CHECK(price.exit_code == 0);
    CHECK(contains(price.output, "wrote diffs.txt"));
}

TEST_SUITE_END();
