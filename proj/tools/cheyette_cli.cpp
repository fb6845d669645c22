#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cheyette/calibration.hpp"
#include "cheyette/curves.hpp"
#include "cheyette/errors.hpp"
#include "cheyette/manifest.hpp"
#include "cheyette/models.hpp"
#include "cheyette/pricing.hpp"
#include "cheyette/script/ast.hpp"
#include "cheyette/script/check.hpp"
#include "cheyette/sim/codegen.hpp"
#include "cheyette/sim/engine.hpp"
#include "cheyette/support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cheyette;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw RuntimeError("cannot open " + path);
    std::ostringstream out;
    out << file.rdbuf();
    return out.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream file(path, std::ios::binary);
    if (!file) throw RuntimeError("cannot write " + path);
    file << content;
}

json load_json(const std::string& path) {
    const std::string text = read_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(path + ": " + e.what());
    }
}

MeasureKind measure_from_string(const std::string& name) {
    if (name == "t-forward" || name == "terminal") return MeasureKind::TForward;
    if (name == "risk-neutral") return MeasureKind::RiskNeutral;
    throw ValidationError("unknown measure '" + name + "' (use t-forward or risk-neutral)");
}

std::string measure_name(MeasureKind m) {
    return m == MeasureKind::TForward ? "t-forward" : "risk-neutral";
}

script::ConstValue json_to_const(const json& v, const std::string& where) {
    if (v.is_number()) return script::ConstValue(v.get<double>());
    if (v.is_string()) return script::ConstValue(v.get<std::string>());
    if (v.is_array()) {
        std::vector<script::ConstValue> items;
        for (const auto& item : v) items.push_back(json_to_const(item, where));
        return script::ConstValue(std::move(items));
    }
    throw ValidationError(where + ": values must be numbers, strings or arrays");
}

// Host environment for check/codegen: parse-time constants, runtime bindings
// and curve-backed external functions, all from one JSON file.
struct EnvFile {
    script::CheckEnv check_env;
    std::map<std::string, sim::Binding> bindings;
    std::map<std::string, std::function<double(double)>> externals;
};

EnvFile load_env(const std::string& path) {
    const json j = load_json(path);
    EnvFile env;
    if (j.contains("parse_values"))
        for (const auto& [name, value] : j.at("parse_values").items())
            env.check_env.parse_values[name] = json_to_const(value, path);
    if (j.contains("bindings"))
        for (const auto& [name, value] : j.at("bindings").items()) {
            if (value.is_number())
                env.bindings[name] = value.get<double>();
            else if (value.is_array())
                env.bindings[name] = value.get<std::vector<double>>();
            else
                throw ValidationError(path + ": binding '" + name +
                                      "' must be a number or an array");
        }
    if (j.contains("externals"))
        for (const auto& [name, value] : j.at("externals").items()) {
            if (!value.is_string())
                throw ValidationError(path + ": external '" + name +
                                      "' must name a curve file");
            auto curve = std::make_shared<Curve>(Curve::load(value.get<std::string>()));
            env.externals[name] = [curve](double u) { return curve->inst_forward(u); };
            env.check_env.external_fns.insert(name);
        }
    return env;
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) {
        if (!out.empty()) out += " ";
        out += s;
    }
    return out;
}

template <typename Set>
std::string join_set(const Set& items) {
    return join(std::vector<std::string>(items.begin(), items.end()));
}

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

json diffs_json(const std::vector<pricing::DiffRow>& rows) {
    json arr = json::array();
    for (const auto& r : rows)
        arr.push_back({{"strike", r.strike},
                       {"market", r.market},
                       {"model", r.model},
                       {"diff", r.diff},
                       {"se", r.se},
                       {"within_2se", r.within_2se}});
    return arr;
}

json schedule_json(const ModelSetting& setting,
                   const std::vector<native::ScheduleSegment>& schedule) {
    json arr = json::array();
    for (const auto& seg : schedule)
        arr.push_back({{"t_end", std::isfinite(seg.t_end) ? json(seg.t_end) : json("inf")},
                       {"params", params_to_json(setting, seg.params)}});
    return arr;
}

json result_json(const ModelSetting& setting, const calibration::CalibrationProblem& problem,
                 const calibration::CalibrationResult& res) {
    std::vector<std::string> names;
    for (const auto& b : problem.bounds) names.push_back(b.name);
    json trace = json::array();
    for (const auto& t : res.trace)
        trace.push_back({{"generation", t.generation}, {"best", t.best}});
    return {{"params", params_to_json(setting, res.params)},
            {"free_names", names},
            {"x", res.x},
            {"objective", res.objective},
            {"search_objective", res.search_objective},
            {"good_fit", res.good_fit},
            {"flagged", res.flagged},
            {"seeds", res.seeds},
            {"validation_seed", res.validation_seed},
            {"generations", res.generations},
            {"evaluations", res.evaluations},
            {"max_evaluated_eta", res.max_evaluated_eta},
            {"ensemble_prices", res.ensemble_prices},
            {"diffs", diffs_json(res.diffs)},
            {"trace", trace},
            {"schedule", schedule_json(setting, res.schedule)}};
}

calibration::DESettings de_from_json(const json& j) {
    calibration::DESettings s;
    if (j.is_null()) return s;
    if (!j.is_object()) throw ValidationError("'de' settings must be a JSON object");
    s.population = j.value("population", s.population);
    s.max_generations = j.value("max_generations", s.max_generations);
    s.f_lo = j.value("f_lo", s.f_lo);
    s.f_hi = j.value("f_hi", s.f_hi);
    s.cr_init = j.value("cr_init", s.cr_init);
    s.cr_sigma = j.value("cr_sigma", s.cr_sigma);
    s.cr_adapt = j.value("cr_adapt", s.cr_adapt);
    s.tolerance = j.value("tolerance", s.tolerance);
    s.stagnation = j.value("stagnation", s.stagnation);
    s.replications = j.value("replications", s.replications);
    s.flag_threshold = j.value("flag_threshold", s.flag_threshold);
    s.n_threads = j.value("n_threads", s.n_threads);
    return s;
}

// ---------------------------------------------------------------- check ---

struct CheckArgs {
    std::string script_path;
    std::string env_path;
};

void run_check(const CheckArgs& args) {
    const std::string text = read_file(args.script_path);
    const script::Script parsed = script::parse(text);
    script::CheckEnv env;
    if (!args.env_path.empty()) env = load_env(args.env_path).check_env;
    const script::CheckedProgram prog = script::check(parsed, env);

    std::cout << "check OK: " << args.script_path << "\n";
    std::cout << "brownians: " << join(prog.brownians) << "\n";
    std::cout << "stepped: " << join_set(prog.stepped) << "\n";
    std::cout << "assigned: " << join_set(prog.assigned) << "\n";
    std::cout << "markovian: " << join_set(prog.markovian) << "\n";
    std::cout << "free parameters: " << join(prog.free_params) << "\n";
    std::cout << "external functions: " << join_set(prog.external_fns) << "\n";
    std::vector<std::string> payoffs;
    for (const auto& p : prog.payoffs) payoffs.push_back(p.name);
    std::cout << "payoffs (" << payoffs.size() << "): " << join(payoffs) << "\n";
    std::vector<std::string> times;
    for (double t : prog.observation_times) times.push_back(num17(t));
    std::cout << "observation times: " << join(times) << "\n";
}

// ---------------------------------------------------------------- price ---

struct PriceArgs {
    std::string params_path;
    std::string forecast_path;
    std::string discount_path;
    std::string quotes_path;
    std::string out_path = "price_diffs.txt";
    std::string manifest_path;
    std::size_t paths = std::size_t{1} << 17;
    std::uint64_t seed = 0;
    double dt_max = sim::kDefaultDtMax;
    std::string measure = "t-forward";
    bool plain = false;  // disable antithetic pairing
    bool floorlets = false;
    double notional = 1.0;
};

void run_price(const PriceArgs& args) {
    const auto start = std::chrono::steady_clock::now();
    const auto [setting, params] = params_from_json(load_json(args.params_path));
    const Curve fcurve = Curve::load(args.forecast_path);
    const Curve dcurve = Curve::load(args.discount_path);
    const auto quotes = pricing::load_quotes(args.quotes_path);

    pricing::McConfig config;
    config.paths = args.paths;
    config.seed = args.seed;
    config.antithetic = !args.plain;
    config.dt_max = args.dt_max;
    const double omega = args.floorlets ? -1.0 : 1.0;
    const auto results =
        pricing::price_quotes(setting, params, quotes, omega, args.notional,
                              measure_from_string(args.measure), fcurve, dcurve, config);
    const auto diffs = pricing::price_diff_table(results, quotes);
    write_file(args.out_path, pricing::format_diff_table(diffs));

    std::size_t within = 0;
    for (const auto& r : diffs)
        if (r.within_2se) ++within;
    std::cout << "wrote " << args.out_path << "\n";
    std::cout << "good_fit: " << (pricing::good_fit(diffs) ? "yes" : "no") << " (" << within
              << "/" << diffs.size() << " quotes within 2 SE)\n";

    cli::RunManifest manifest;
    manifest.command = "price";
    manifest.config_paths = {args.params_path, args.forecast_path, args.discount_path,
                             args.quotes_path};
    manifest.seeds = {args.seed};
    manifest.wall_seconds = elapsed_seconds(start);
    manifest.outputs = {args.out_path};
    manifest.write(args.manifest_path.empty() ? args.out_path + ".manifest.json"
                                              : args.manifest_path);
}

// ------------------------------------------------------------ calibrate ---

struct CalibrateArgs {
    std::string config_path;
};

void run_calibrate(const CalibrateArgs& args) {
    const auto start = std::chrono::steady_clock::now();
    const json cfg = load_json(args.config_path);
    const fs::path cfg_dir = fs::path(args.config_path).parent_path();
    const auto resolve = [&](const std::string& p) {
        const fs::path pp(p);
        return (pp.is_absolute() ? pp : cfg_dir / pp).string();
    };
    const auto need = [&](const char* key) -> std::string {
        if (!cfg.contains(key))
            throw ValidationError(args.config_path + ": missing '" + key + "'");
        return cfg.at(key).get<std::string>();
    };

    const std::string params_path = resolve(need("params"));
    const std::string quotes_path = resolve(need("quotes"));
    const std::string forecast_path = resolve(need("forecast_curve"));
    const std::string discount_path = resolve(need("discount_curve"));
    const auto [setting, fixed] = params_from_json(load_json(params_path));
    const Curve fcurve = Curve::load(forecast_path);
    const Curve dcurve = Curve::load(discount_path);
    const auto quotes = pricing::load_quotes(quotes_path);

    calibration::CalibrationProblem problem;
    problem.setting = setting;
    problem.fixed = fixed;
    problem.quotes = quotes;
    problem.forecasting = &fcurve;
    problem.discounting = &dcurve;
    try {
        problem.bounds = fixture_for(setting).bounds;
    } catch (const ValidationError&) {
        problem.bounds.clear();  // off-catalog setting: config must supply bounds
    }
    if (cfg.contains("bounds"))
        for (const auto& [name, box] : cfg.at("bounds").items()) {
            if (!box.is_array() || box.size() != 2)
                throw ValidationError(args.config_path + ": bound '" + name +
                                      "' must be [lower, upper]");
            const ParamBound entry{name, box[0].get<double>(), box[1].get<double>()};
            auto it = std::find_if(problem.bounds.begin(), problem.bounds.end(),
                                   [&](const ParamBound& b) { return b.name == name; });
            if (it == problem.bounds.end())
                problem.bounds.push_back(entry);
            else
                *it = entry;
        }
    if (setting.lv == LocalVolForm::PwLinBRLV && problem.fixed.lv.knots.empty()) {
        const auto& q = quotes.front();
        const double atm = pricing::atm_strike(fcurve, q.maturity, q.maturity + q.tenor);
        problem.fixed.lv.knots = default_knots(atm);
        problem.fixed.lv.levels.assign(problem.fixed.lv.knots.size(), 0.0);
    }
    if (cfg.contains("weights"))
        problem.weights = cfg.at("weights").get<std::vector<double>>();
    problem.notional = cfg.value("notional", problem.notional);
    problem.omega = cfg.value("floorlets", false) ? -1.0 : 1.0;
    problem.measure = measure_from_string(cfg.value("measure", "t-forward"));
    problem.paths = cfg.value("paths", problem.paths);
    problem.validation_paths = cfg.value("validation_paths", problem.validation_paths);
    problem.antithetic = cfg.value("antithetic", problem.antithetic);
    problem.dt_max = cfg.value("dt_max", problem.dt_max);
    problem.sim_seed = cfg.value("sim_seed", problem.sim_seed);
    problem.validation_seed = cfg.value("validation_seed", problem.validation_seed);

    const calibration::DESettings de = de_from_json(cfg.value("de", json()));
    const std::uint64_t seed = cfg.value("seed", std::uint64_t{20260814});
    const std::string mode = cfg.value("mode", "best-seed");
    const std::string out_prefix =
        resolve(cfg.value("out_prefix", fs::path(args.config_path).stem().string()));

    std::vector<calibration::CalibrationProblem> problems;
    if (mode == "best-seed") {
        problems.push_back(problem);
    } else if (mode == "bootstrap") {
        std::vector<double> maturities;
        for (const auto& q : quotes)
            if (std::find(maturities.begin(), maturities.end(), q.maturity) ==
                maturities.end())
                maturities.push_back(q.maturity);
        std::sort(maturities.begin(), maturities.end());
        for (double m : maturities) {
            calibration::CalibrationProblem p = problem;
            p.quotes.clear();
            p.weights.clear();
            for (std::size_t i = 0; i < quotes.size(); ++i)
                if (quotes[i].maturity == m) {
                    p.quotes.push_back(quotes[i]);
                    if (!problem.weights.empty()) p.weights.push_back(problem.weights[i]);
                }
            problems.push_back(std::move(p));
        }
    } else {
        throw ValidationError("unknown mode '" + mode + "' (use best-seed or bootstrap)");
    }

    std::vector<calibration::CalibrationResult> results;
    if (mode == "best-seed")
        results.push_back(
            calibration::best_seed_calibrate(problems[0], de, de.replications, seed));
    else
        results = calibration::bootstrap_calibrate(problems, de, seed);

    json report;
    report["command"] = "calibrate";
    report["mode"] = mode;
    report["setting"] = to_string(setting);
    report["measure"] = measure_name(problem.measure);
    report["results"] = json::array();
    std::string tables;
    for (std::size_t k = 0; k < results.size(); ++k) {
        report["results"].push_back(result_json(setting, problems[k], results[k]));
        tables += "# maturity " + num17(problems[k].quotes.front().maturity) + "\n";
        tables += pricing::format_diff_table(results[k].diffs);
        std::cout << "segment " << (k + 1) << ": objective=" << num17(results[k].objective)
                  << " good_fit=" << (results[k].good_fit ? "yes" : "no")
                  << (results[k].flagged ? " FLAGGED" : "") << "\n";
    }
    const std::string report_path = out_prefix + ".report.json";
    const std::string diffs_path = out_prefix + ".diffs.txt";
    write_file(report_path, report.dump(2) + "\n");
    write_file(diffs_path, tables);
    std::cout << "wrote " << report_path << "\n";

    cli::RunManifest manifest;
    manifest.command = "calibrate";
    manifest.config_paths = {args.config_path, params_path, quotes_path, forecast_path,
                             discount_path};
    manifest.seeds = {seed};
    manifest.wall_seconds = elapsed_seconds(start);
    manifest.outputs = {report_path, diffs_path};
    manifest.write(out_prefix + ".manifest.json");
}

// -------------------------------------------------------------- codegen ---

struct CodegenArgs {
    std::string script_path;
    std::string env_path;
    std::string out_path;
    std::string profile = "cpp";
    bool verify = false;
    std::size_t verify_paths = 128;
    std::uint64_t seed = 0;
};

double call_external(void* ctx, double x) {
    return (*static_cast<const std::function<double(double)>*>(ctx))(x);
}

void run_codegen(const CodegenArgs& args) {
    const auto start = std::chrono::steady_clock::now();
    const std::string text = read_file(args.script_path);
    EnvFile env;
    if (!args.env_path.empty()) env = load_env(args.env_path);
    const script::CheckedProgram prog = script::check(script::parse(text), env.check_env);
    const std::string source = sim::generate_code(prog, args.profile);
    write_file(args.out_path, source);
    const std::string manifest_path = args.out_path + ".manifest.json";
    write_file(manifest_path, sim::codegen_manifest(source, args.profile));
    std::cout << "wrote " << args.out_path << " (" << sim::source_hash(source) << ")\n";

    if (args.verify) {
        const sim::SimulationPlan plan = sim::compile(prog, {});
        sim::SimConfig config;
        config.batch = args.verify_paths;
        config.seed = args.seed;
        config.bindings = env.bindings;
        config.externals = env.externals;
        const sim::SimOutput reference = sim::simulate(plan, config);

        const fs::path workdir = fs::temp_directory_path() /
                                 ("cheyette-verify-" + std::to_string(::getpid()));
        const sim::GeneratedModule module(source, workdir.string());
        std::vector<double> scalars;
        std::vector<const double*> vectors;
        for (const auto& name : module.param_names()) {
            const auto it = env.bindings.find(name);
            if (it == env.bindings.end())
                throw ValidationError("missing binding for free parameter '" + name + "'");
            if (const auto* v = std::get_if<double>(&it->second)) {
                scalars.push_back(*v);
                vectors.push_back(nullptr);
            } else {
                const auto& vec = std::get<std::vector<double>>(it->second);
                scalars.push_back(0.0);
                vectors.push_back(vec.data());
            }
        }
        std::vector<sim::GeneratedModule::Ext> exts;
        for (const auto& name : module.external_names()) {
            const auto it = env.externals.find(name);
            if (it == env.externals.end())
                throw ValidationError("missing external function '" + name + "'");
            exts.push_back({&call_external, const_cast<void*>(static_cast<const void*>(
                                                &it->second))});
        }
        const auto samples = module.run(args.seed, args.verify_paths, false, scalars,
                                        vectors, nullptr, exts);

        if (module.payoff_names() != reference.payoff_names)
            throw RuntimeError("generated module payoff names diverge");
        for (std::size_t i = 0; i < samples.size(); ++i)
            if (std::memcmp(samples[i].data(), reference.payoff_samples[i].data(),
                            samples[i].size() * sizeof(double)) != 0)
                throw RuntimeError("generated module diverges from the interpreter on '" +
                                   reference.payoff_names[i] + "'");
        std::cout << "verify OK: " << samples.size() << " payoffs x " << args.verify_paths
                  << " paths bit-identical\n";
    }

    cli::RunManifest manifest;
    manifest.command = "codegen";
    manifest.config_paths = {args.script_path};
    if (!args.env_path.empty()) manifest.config_paths.push_back(args.env_path);
    manifest.seeds = {args.seed};
    manifest.wall_seconds = elapsed_seconds(start);
    manifest.outputs = {args.out_path, manifest_path};
    manifest.write(args.out_path + ".run.json");
}

// ---------------------------------------------------------- synth-market ---

struct SynthArgs {
    std::string params_path;
    std::string forecast_path;
    std::string discount_path;
    std::string out_path;
    double maturity = 1.0;
    double tenor = 0.25;
    std::vector<double> strikes;
    std::size_t n_strikes = 7;
    double width_bp = 150.0;
    std::size_t paths = std::size_t{1} << 18;
    std::uint64_t seed = 7;
    double dt_max = sim::kDefaultDtMax;
    std::string measure = "t-forward";
    bool plain = false;
    bool floorlets = false;
    double notional = 1.0;
};

void run_synth(const SynthArgs& args) {
    const auto start = std::chrono::steady_clock::now();
    const auto [setting, params] = params_from_json(load_json(args.params_path));
    const Curve fcurve = Curve::load(args.forecast_path);
    const Curve dcurve = Curve::load(args.discount_path);

    std::vector<double> strikes = args.strikes;
    if (strikes.empty()) {
        if (args.n_strikes < 1) throw ValidationError("n_strikes must be at least 1");
        const double atm =
            pricing::atm_strike(fcurve, args.maturity, args.maturity + args.tenor);
        for (std::size_t i = 0; i < args.n_strikes; ++i) {
            const double frac =
                args.n_strikes == 1
                    ? 0.0
                    : (2.0 * static_cast<double>(i) / (args.n_strikes - 1.0)) - 1.0;
            strikes.push_back(atm + frac * args.width_bp / 10000.0);
        }
    }

    pricing::McConfig config;
    config.paths = args.paths;
    config.seed = args.seed;
    config.antithetic = !args.plain;
    config.dt_max = args.dt_max;
    const double omega = args.floorlets ? -1.0 : 1.0;
    const auto results = pricing::price_caplets_mc(
        setting, params, args.maturity, args.maturity + args.tenor, strikes, omega,
        args.notional, measure_from_string(args.measure), fcurve, dcurve, config);

    std::vector<pricing::Quote> quotes;
    for (std::size_t i = 0; i < strikes.size(); ++i)
        quotes.push_back({args.maturity, args.tenor, strikes[i], results[i].price});
    pricing::save_quotes(args.out_path, quotes);
    std::cout << "wrote " << quotes.size() << " quotes to " << args.out_path << "\n";

    cli::RunManifest manifest;
    manifest.command = "synth-market";
    manifest.config_paths = {args.params_path, args.forecast_path, args.discount_path};
    manifest.seeds = {args.seed};
    manifest.wall_seconds = elapsed_seconds(start);
    manifest.outputs = {args.out_path};
    manifest.write(args.out_path + ".manifest.json");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cheyette SLV toolkit: script checking, pricing, calibration, codegen"};
    app.set_version_flag("--version", cli::kToolkitVersion);
    app.require_subcommand(1);

    CheckArgs check_args;
    auto* check = app.add_subcommand("check", "Parse and check a script");
    check->add_option("script", check_args.script_path, "script file")->required();
    check->add_option("--env", check_args.env_path, "environment JSON");
    check->callback([&] { run_check(check_args); });

    PriceArgs price_args;
    auto* price = app.add_subcommand("price", "Price caplet quotes and diff to market");
    price->add_option("--params", price_args.params_path, "model params JSON")->required();
    price->add_option("--forecast-curve", price_args.forecast_path)->required();
    price->add_option("--discount-curve", price_args.discount_path)->required();
    price->add_option("--quotes", price_args.quotes_path, "market quote file")->required();
    price->add_option("--out", price_args.out_path, "diff table output");
    price->add_option("--manifest", price_args.manifest_path);
    price->add_option("--paths", price_args.paths);
    price->add_option("--seed", price_args.seed);
    price->add_option("--dt-max", price_args.dt_max);
    price->add_option("--measure", price_args.measure, "t-forward or risk-neutral");
    price->add_flag("--plain", price_args.plain, "disable antithetic pairing");
    price->add_flag("--floorlets", price_args.floorlets);
    price->add_option("--notional", price_args.notional);
    price->callback([&] { run_price(price_args); });

    CalibrateArgs cal_args;
    auto* cal = app.add_subcommand("calibrate", "Calibrate a model setting to quotes");
    cal->add_option("config", cal_args.config_path, "calibration config JSON")->required();
    cal->callback([&] { run_calibrate(cal_args); });

    CodegenArgs gen_args;
    auto* gen = app.add_subcommand("codegen", "Generate a standalone simulation module");
    gen->add_option("script", gen_args.script_path, "script file")->required();
    gen->add_option("--env", gen_args.env_path, "environment JSON");
    gen->add_option("--out", gen_args.out_path, "generated source path")->required();
    gen->add_option("--profile", gen_args.profile, "backend profile (cpp)");
    gen->add_flag("--verify", gen_args.verify,
                  "compile and compare against the interpreter on a small batch");
    gen->add_option("--verify-paths", gen_args.verify_paths);
    gen->add_option("--seed", gen_args.seed);
    gen->callback([&] { run_codegen(gen_args); });

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth-market", "Generate synthetic caplet quotes");
    synth->add_option("--params", synth_args.params_path, "model params JSON")->required();
    synth->add_option("--forecast-curve", synth_args.forecast_path)->required();
    synth->add_option("--discount-curve", synth_args.discount_path)->required();
    synth->add_option("--out", synth_args.out_path, "quote file output")->required();
    synth->add_option("--maturity", synth_args.maturity, "fixing time T1");
    synth->add_option("--tenor", synth_args.tenor, "accrual delta");
    synth->add_option("--strikes", synth_args.strikes, "explicit strike list")
        ->delimiter(',');
    synth->add_option("--n-strikes", synth_args.n_strikes, "strike count around ATM");
    synth->add_option("--width-bp", synth_args.width_bp, "half-width around ATM in bp");
    synth->add_option("--paths", synth_args.paths);
    synth->add_option("--seed", synth_args.seed);
    synth->add_option("--dt-max", synth_args.dt_max);
    synth->add_option("--measure", synth_args.measure);
    synth->add_flag("--plain", synth_args.plain);
    synth->add_flag("--floorlets", synth_args.floorlets);
    synth->add_option("--notional", synth_args.notional);
    synth->callback([&] { run_synth(synth_args); });

    try {
        app.parse(argc, argv);
        return 0;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const RuntimeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
