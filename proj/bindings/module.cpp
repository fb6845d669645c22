#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

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

namespace py = pybind11;
using namespace cheyette;

namespace {

Curve make_curve(CurveLabel label, const std::vector<double>& times,
                 const std::vector<double>& dfs) {
    if (times.size() != dfs.size())
        throw ValidationError("curve needs one df per time");
    std::vector<CurvePoint> pillars;
    for (std::size_t i = 0; i < times.size(); ++i) pillars.push_back({times[i], dfs[i]});
    return Curve(label, std::move(pillars));
}

MeasureKind measure_from(const std::string& name) {
    if (name == "t-forward" || name == "terminal") return MeasureKind::TForward;
    if (name == "risk-neutral") return MeasureKind::RiskNeutral;
    throw ValidationError("unknown measure '" + name + "'");
}

std::pair<ModelSetting, ModelParams> params_from_text(const std::string& text) {
    return params_from_json(nlohmann::json::parse(text));
}

script::ConstValue const_from_py(const py::handle& v) {
    if (py::isinstance<py::str>(v)) return script::ConstValue(v.cast<std::string>());
    if (py::isinstance<py::bool_>(v)) return script::ConstValue(v.cast<bool>() ? 1.0 : 0.0);
    if (py::isinstance<py::int_>(v) || py::isinstance<py::float_>(v))
        return script::ConstValue(v.cast<double>());
    if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v)) {
        std::vector<script::ConstValue> items;
        for (const auto& item : v) items.push_back(const_from_py(item));
        return script::ConstValue(std::move(items));
    }
    throw ValidationError("parse values must be numbers, strings or lists");
}

script::CheckEnv env_from(const py::dict& parse_values) {
    script::CheckEnv env;
    for (const auto& [k, v] : parse_values)
        env.parse_values[k.cast<std::string>()] = const_from_py(v);
    return env;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "one-factor Cheyette SLV toolkit";
    m.attr("__version__") = cli::kToolkitVersion;

    py::register_exception<ValidationError>(m, "ScriptValidationError", PyExc_ValueError);
    py::register_exception<RuntimeError>(m, "SimulationError", PyExc_RuntimeError);

    m.def("g", &g_fn, py::arg("lam"), py::arg("x"),
          "G(x) = (1 - exp(-lambda x)) / lambda");
    m.def("h", &h_fn, py::arg("lam"), py::arg("x"), "h(x) = exp(-lambda x)");
    m.def("black", &pricing::black, py::arg("forward"), py::arg("strike"), py::arg("v"),
          py::arg("omega"));

    m.def(
        "atm_strike",
        [](const std::vector<double>& times, const std::vector<double>& dfs, double t1,
           double t2) {
            return pricing::atm_strike(make_curve(CurveLabel::Forecasting, times, dfs), t1,
                                       t2);
        },
        py::arg("curve_times"), py::arg("curve_dfs"), py::arg("t1"), py::arg("t2"));

    m.def(
        "builtin_script",
        [](const std::string& setting, const std::string& measure) {
            return builtin_script(setting_from_string(setting), measure_from(measure));
        },
        py::arg("setting"), py::arg("measure") = "t-forward");

    m.def("settings_catalog", [] {
        std::vector<std::string> names;
        for (const auto& s : settings_catalog()) names.push_back(to_string(s));
        return names;
    });

    m.def("tables_config", [] { return tables_config().dump(2); });

    m.def(
        "check_script",
        [](const std::string& text, const py::dict& parse_values) {
            const auto prog = script::check(script::parse(text), env_from(parse_values));
            py::dict out;
            out["brownians"] = prog.brownians;
            out["free_params"] = prog.free_params;
            out["stepped"] = std::vector<std::string>(prog.stepped.begin(), prog.stepped.end());
            out["assigned"] =
                std::vector<std::string>(prog.assigned.begin(), prog.assigned.end());
            std::vector<std::string> payoffs;
            for (const auto& p : prog.payoffs) payoffs.push_back(p.name);
            out["payoffs"] = payoffs;
            out["observation_times"] = prog.observation_times;
            return out;
        },
        py::arg("text"), py::arg("parse_values") = py::dict());

    m.def(
        "generate_code",
        [](const std::string& text, const py::dict& parse_values) {
            const auto prog = script::check(script::parse(text), env_from(parse_values));
            return sim::generate_code(prog, "cpp");
        },
        py::arg("text"), py::arg("parse_values") = py::dict());

    m.def(
        "simulate_script",
        [](const std::string& text, const py::dict& parse_values, const py::dict& bindings,
           const py::dict& external_curves, std::size_t batch, std::uint64_t seed,
           bool antithetic, double dt_max) {
            const auto prog = script::check(script::parse(text), env_from(parse_values));
            const auto plan = sim::compile(prog, {dt_max});
            sim::SimConfig config;
            config.batch = batch;
            config.seed = seed;
            config.antithetic = antithetic;
            config.dt_max = dt_max;
            for (const auto& [k, v] : bindings) {
                if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v))
                    config.bindings[k.cast<std::string>()] = v.cast<std::vector<double>>();
                else
                    config.bindings[k.cast<std::string>()] = v.cast<double>();
            }
            std::vector<std::shared_ptr<Curve>> curves;
            for (const auto& [k, v] : external_curves) {
                const auto pair = v.cast<std::pair<std::vector<double>, std::vector<double>>>();
                auto curve = std::make_shared<Curve>(
                    make_curve(CurveLabel::Forecasting, pair.first, pair.second));
                curves.push_back(curve);
                config.externals[k.cast<std::string>()] = [curve](double u) {
                    return curve->inst_forward(u);
                };
            }
            const auto out = sim::simulate(plan, config);
            py::dict result;
            for (std::size_t i = 0; i < out.payoff_names.size(); ++i)
                result[out.payoff_names[i].c_str()] = out.payoff_samples[i];
            return result;
        },
        py::arg("text"), py::arg("parse_values") = py::dict(),
        py::arg("bindings") = py::dict(), py::arg("external_curves") = py::dict(),
        py::arg("batch") = 1024, py::arg("seed") = 0, py::arg("antithetic") = false,
        py::arg("dt_max") = sim::kDefaultDtMax);

    m.def(
        "hw_caplet",
        [](double a, double lam, const std::vector<double>& f_times,
           const std::vector<double>& f_dfs, const std::vector<double>& d_times,
           const std::vector<double>& d_dfs, double notional, double omega, double t1,
           double t2, double strike) {
            const Curve fc = make_curve(CurveLabel::Forecasting, f_times, f_dfs);
            const Curve dc = make_curve(CurveLabel::Discounting, d_times, d_dfs);
            return pricing::hw_closed_form_caplet(a, lam, fc, dc,
                                                  {notional, omega, t1, t2, strike});
        },
        py::arg("a"), py::arg("lam"), py::arg("f_times"), py::arg("f_dfs"),
        py::arg("d_times"), py::arg("d_dfs"), py::arg("notional"), py::arg("omega"),
        py::arg("t1"), py::arg("t2"), py::arg("strike"));

    m.def(
        "price_caplets",
        [](const std::string& params_json, double t1, double t2,
           const std::vector<double>& strikes, double omega, double notional,
           const std::string& measure, const std::vector<double>& f_times,
           const std::vector<double>& f_dfs, const std::vector<double>& d_times,
           const std::vector<double>& d_dfs, std::size_t paths, std::uint64_t seed,
           bool antithetic, double dt_max) {
            const auto [setting, params] = params_from_text(params_json);
            const Curve fc = make_curve(CurveLabel::Forecasting, f_times, f_dfs);
            const Curve dc = make_curve(CurveLabel::Discounting, d_times, d_dfs);
            pricing::McConfig config;
            config.paths = paths;
            config.seed = seed;
            config.antithetic = antithetic;
            config.dt_max = dt_max;
            const auto results = pricing::price_caplets_mc(
                setting, params, t1, t2, strikes, omega, notional, measure_from(measure),
                fc, dc, config);
            std::vector<std::pair<double, double>> out;
            for (const auto& r : results) out.emplace_back(r.price, r.standard_error);
            return out;
        },
        py::arg("params_json"), py::arg("t1"), py::arg("t2"), py::arg("strikes"),
        py::arg("omega") = 1.0, py::arg("notional") = 1.0,
        py::arg("measure") = "t-forward", py::arg("f_times") = std::vector<double>{},
        py::arg("f_dfs") = std::vector<double>{}, py::arg("d_times") = std::vector<double>{},
        py::arg("d_dfs") = std::vector<double>{}, py::arg("paths") = 1 << 14,
        py::arg("seed") = 0, py::arg("antithetic") = true,
        py::arg("dt_max") = sim::kDefaultDtMax);
}
