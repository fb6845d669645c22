#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "cheyette/errors.hpp"
#include "cheyette/pricing.hpp"
#include "cheyette/sim/stats.hpp"
#include "cheyette/support.hpp"

namespace cheyette::pricing {

namespace {

double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double intrinsic(double forward, double strike, double omega) {
    const double d = omega * (forward - strike);
    return d > 0.0 ? d : 0.0;
}

}  // namespace

void CapletSpec::validate() const {
    if (!(t1 > 0.0 && t2 > t1))
        throw ValidationError("caplet requires 0 < T1 < T2");
    if (!(omega == 1.0 || omega == -1.0))
        throw ValidationError("omega must be +1 (caplet) or -1 (floorlet)");
    if (!(notional > 0.0)) throw ValidationError("notional must be positive");
}

PayoffCoeffs payoff_coeffs(const Curve& fcurve, const Curve& dcurve, double lambda,
                           const CapletSpec& spec) {
    spec.validate();
    dcurve.df(spec.t2);  // curve-domain check for the discounting leg
    PayoffCoeffs out;
    out.p_f = fcurve.df(spec.t1) / fcurve.df(spec.t2);
    out.c_x = g_fn(lambda, spec.delta());
    out.c_y = 0.5 * out.c_x * out.c_x;
    out.k_hat = 1.0 + spec.strike * spec.delta();
    return out;
}

double black(double forward, double strike, double v, double omega) {
    if (!(forward > 0.0 && strike > 0.0))
        throw ValidationError("black requires positive forward and strike");
    if (!(v >= 0.0)) throw ValidationError("black requires v >= 0");
    if (!(omega == 1.0 || omega == -1.0))
        throw ValidationError("omega must be +1 or -1");
    if (v == 0.0) return intrinsic(forward, strike, omega);
    const double d1 = std::log(forward / strike) / v + 0.5 * v;
    const double d2 = d1 - v;
    return omega * (forward * norm_cdf(omega * d1) - strike * norm_cdf(omega * d2));
}

double hw_closed_form_caplet(double a, double lambda, const Curve& fcurve,
                             const Curve& dcurve, const CapletSpec& spec) {
    if (!(a >= 0.0)) throw ValidationError("hw_closed_form_caplet requires a >= 0");
    const PayoffCoeffs c = payoff_coeffs(fcurve, dcurve, lambda, spec);
    const double v2 = c.c_x * c.c_x * a * a *
                      (1.0 - std::exp(-2.0 * lambda * spec.t1)) / (2.0 * lambda);
    return dcurve.df(spec.t2) * spec.notional *
           black(c.p_f, c.k_hat, std::sqrt(v2), spec.omega);
}

std::vector<PriceResult> price_caplets_mc(const ModelSetting& setting,
                                          const ModelParams& params, double t1, double t2,
                                          const std::vector<double>& strikes, double omega,
                                          double notional, MeasureKind measure,
                                          const Curve& fcurve, const Curve& dcurve,
                                          const McConfig& config) {
    if (strikes.empty()) throw ValidationError("no strikes to price");
    CapletSpec probe{notional, omega, t1, t2, strikes.front()};
    probe.validate();

    native::CapletRun run;
    run.setting = setting;
    run.params = params;
    run.measure = measure;
    run.fixing_time = t1;
    run.pay_time = t2;
    run.meas_t = t2;
    run.forecasting = &fcurve;
    run.discounting = &dcurve;
    run.schedule = config.schedule;

    native::PathConfig pc;
    pc.batch = config.paths;
    pc.seed = config.seed;
    pc.antithetic = config.antithetic;
    pc.dt_max = config.dt_max;
    pc.injected_normals = config.injected_normals;

    const native::PathOutput paths = native::simulate_paths(run, pc);
    const auto samples = native::caplet_samples(run, paths, strikes, omega);

    // T-forward samples are per unit of the T2 discount bond; risk-neutral
    // samples already carry the simulated money-market discounting.
    const double scale =
        measure == MeasureKind::TForward ? notional * dcurve.df(t2) : notional;

    std::vector<PriceResult> out;
    out.reserve(strikes.size());
    for (const auto& sample : samples) {
        const sim::McEstimate est = config.antithetic ? sim::mc_estimate_antithetic(sample)
                                                      : sim::mc_estimate(sample);
        out.push_back({scale * est.mean, scale * est.standard_error, config.paths, measure});
    }
    return out;
}

PriceResult price_caplet_mc(const ModelSetting& setting, const ModelParams& params,
                            const CapletSpec& spec, MeasureKind measure,
                            const Curve& fcurve, const Curve& dcurve,
                            const McConfig& config) {
    return price_caplets_mc(setting, params, spec.t1, spec.t2, {spec.strike}, spec.omega,
                            spec.notional, measure, fcurve, dcurve, config)
        .front();
}

double atm_strike(const Curve& fcurve, double t1, double t2) {
    if (!(t1 > 0.0 && t2 > t1)) throw ValidationError("atm_strike requires 0 < T1 < T2");
    return (fcurve.df(t1) / fcurve.df(t2) - 1.0) / (t2 - t1);
}

std::vector<Quote> load_quotes(const std::string& path) {
    std::ifstream file(path);
    if (!file) throw RuntimeError("cannot open quote file " + path);
    std::vector<Quote> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(file, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream row(line);
        Quote q;
        if (!(row >> q.maturity)) continue;  // blank line
        if (!(row >> q.tenor >> q.strike >> q.price))
            throw ValidationError(path + ":" + std::to_string(lineno) +
                                  ": expected 'maturity tenor strike price'");
        std::string extra;
        if (row >> extra)
            throw ValidationError(path + ":" + std::to_string(lineno) +
                                  ": trailing token '" + extra + "'");
        if (!(q.maturity > 0.0 && q.tenor > 0.0))
            throw ValidationError(path + ":" + std::to_string(lineno) +
                                  ": maturity and tenor must be positive");
        out.push_back(q);
    }
    return out;
}

void save_quotes(const std::string& path, const std::vector<Quote>& quotes) {
    std::ofstream file(path);
    if (!file) throw RuntimeError("cannot write quote file " + path);
    file << "# maturity tenor strike price\n";
    for (const auto& q : quotes)
        file << num17(q.maturity) << " " << num17(q.tenor) << " " << num17(q.strike)
             << " " << num17(q.price) << "\n";
}

std::vector<QuoteGroup> group_quotes(const std::vector<Quote>& quotes) {
    std::vector<QuoteGroup> groups;
    for (std::size_t i = 0; i < quotes.size(); ++i) {
        const double t1 = quotes[i].maturity;
        const double t2 = quotes[i].maturity + quotes[i].tenor;
        auto it = std::find_if(groups.begin(), groups.end(), [&](const QuoteGroup& g) {
            return g.t1 == t1 && g.t2 == t2;
        });
        if (it == groups.end()) {
            groups.push_back({t1, t2, {}, {}});
            it = std::prev(groups.end());
        }
        it->strikes.push_back(quotes[i].strike);
        it->quote_index.push_back(i);
    }
    return groups;
}

std::vector<PriceResult> price_quotes(const ModelSetting& setting, const ModelParams& params,
                                      const std::vector<Quote>& quotes, double omega,
                                      double notional, MeasureKind measure,
                                      const Curve& fcurve, const Curve& dcurve,
                                      const McConfig& config) {
    if (quotes.empty()) throw ValidationError("empty quote set");
    std::vector<PriceResult> out(quotes.size());
    for (const QuoteGroup& g : group_quotes(quotes)) {
        const auto prices = price_caplets_mc(setting, params, g.t1, g.t2, g.strikes, omega,
                                             notional, measure, fcurve, dcurve, config);
        for (std::size_t m = 0; m < prices.size(); ++m) out[g.quote_index[m]] = prices[m];
    }
    return out;
}

std::vector<DiffRow> price_diff_table(const std::vector<PriceResult>& results,
                                      const std::vector<Quote>& quotes) {
    if (quotes.empty()) throw ValidationError("empty quote set");
    if (results.size() != quotes.size())
        throw ValidationError("price results and quotes differ in length");
    std::vector<DiffRow> out;
    out.reserve(quotes.size());
    for (std::size_t i = 0; i < quotes.size(); ++i) {
        DiffRow row;
        row.strike = quotes[i].strike;
        row.market = quotes[i].price;
        row.model = results[i].price;
        row.diff = row.model - row.market;
        row.se = results[i].standard_error;
        row.within_2se = std::abs(row.diff) <= 2.0 * row.se;
        out.push_back(row);
    }
    return out;
}

std::string format_diff_table(const std::vector<DiffRow>& rows) {
    std::ostringstream out;
    out << "# strike market model diff se within_2se\n";
    for (const auto& r : rows)
        out << num17(r.strike) << " " << num17(r.market) << " " << num17(r.model) << " "
            << num17(r.diff) << " " << num17(r.se) << " " << (r.within_2se ? "yes" : "no")
            << "\n";
    return out.str();
}

bool good_fit(const std::vector<DiffRow>& rows) {
    for (const auto& r : rows)
        if (!r.within_2se) return false;
    return true;
}

ScriptSetup builtin_caplet_setup(const ModelSetting& setting, const ModelParams& params,
                                 MeasureKind measure, double t1, double t2,
                                 const std::vector<double>& strikes, const Curve& fcurve,
                                 const Curve& dcurve) {
    if (strikes.empty()) throw ValidationError("no strikes for the builtin script");
    validate_params(setting, params, false);

    ScriptSetup setup;
    setup.text = builtin_script(setting, measure);

    std::vector<script::ConstValue> ks;
    for (const double k : strikes) ks.emplace_back(k);
    setup.env.parse_values["strikes"] = script::ConstValue(std::move(ks));
    setup.env.parse_values["maturity"] = script::ConstValue(t1);
    setup.env.parse_values["fixingtime"] = script::ConstValue(t1);
    setup.env.parse_values["paytime"] = script::ConstValue(t2);

    auto& b = setup.bindings;
    b["mr"] = params.lambda;
    b["delta"] = params.delta;
    b["poa"] = fcurve.df(t1) / fcurve.df(t2);
    if (measure == MeasureKind::TForward) b["measT"] = t2;

    if (setting.lv == LocalVolForm::PwLinBRLV) {
        if (params.lv.knots.size() != 3)
            throw ValidationError("builtin PwLinBRLV script uses exactly 3 knots");
        for (std::size_t i = 0; i < 3; ++i) {
            b["K" + std::to_string(i + 1)] = params.lv.knots[i];
            b["a" + std::to_string(i + 1)] = params.lv.levels[i];
        }
    } else {
        b["a"] = params.lv.a;
        b["b"] = params.lv.b;
    }
    switch (setting.sv) {
        case SVForm::NoSV: break;
        case SVForm::CIRSV: {
            const auto& sv = std::get<CirSvParams>(params.sv);
            b["theta"] = sv.theta;
            b["volofvar"] = sv.eta;
            break;
        }
        case SVForm::CorCIRSV: {
            const auto& sv = std::get<CorCirSvParams>(params.sv);
            b["theta"] = sv.theta;
            b["beta"] = sv.beta();
            b["eps"] = sv.eps();
            break;
        }
        case SVForm::QDLNSV: {
            const auto& sv = std::get<QdlnSvParams>(params.sv);
            b["kappa1"] = sv.kappa1;
            b["kappa2"] = sv.kappa2;
            b["beta"] = sv.beta;
            b["eps"] = sv.eps;
            b["rho"] = 0.0;  // scripts declare d_W*d_Z = rho; W, Z independent
            break;
        }
    }

    const Curve* fc = &fcurve;
    const Curve* dc = &dcurve;
    setup.externals["initfwd"] = [fc](double u) { return fc->inst_forward(u); };
    setup.externals["discfwd"] = [dc](double u) { return dc->inst_forward(u); };
    return setup;
}

}  // namespace cheyette::pricing
