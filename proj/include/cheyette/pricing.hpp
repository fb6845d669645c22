#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cheyette/curves.hpp"
#include "cheyette/models.hpp"
#include "cheyette/native.hpp"
#include "cheyette/script/check.hpp"
#include "cheyette/sim/engine.hpp"

namespace cheyette::pricing {

struct CapletSpec {
    double notional = 1.0;
    double omega = 1.0;  // +1 caplet, -1 floorlet
    double t1 = 0.0;     // reset (years)
    double t2 = 0.0;     // payment (years)
    double strike = 0.0;

    double delta() const { return t2 - t1; }
    void validate() const;  // 0 < t1 < t2, omega in {-1, +1}
};

// Coefficients of the reduced payoff N (omega (p_F exp(c_x x + c_y y) - k_hat))^+.
struct PayoffCoeffs {
    double p_f;    // P_F(0,T1) / P_F(0,T2)
    double c_x;    // G(delta)
    double c_y;    // G(delta)^2 / 2
    double k_hat;  // 1 + K delta
};

PayoffCoeffs payoff_coeffs(const Curve& fcurve, const Curve& dcurve, double lambda,
                           const CapletSpec& spec);

// Undiscounted Black value; v is the total log-normal standard deviation.
// v = 0 returns the intrinsic value.
double black(double forward, double strike, double v, double omega);

// Constant-vol Cheyette (LinBRLV with b=0, no SV) caplet price:
// P_D(0,T2) N Black(p_F, k_hat, v, omega), v^2 = G(delta)^2 a^2 (1-e^{-2 l T1})/(2 l).
double hw_closed_form_caplet(double a, double lambda, const Curve& fcurve,
                             const Curve& dcurve, const CapletSpec& spec);

struct PriceResult {
    double price = 0.0;
    double standard_error = 0.0;
    std::size_t n_paths = 0;
    MeasureKind measure = MeasureKind::TForward;
};

struct McConfig {
    std::size_t paths = std::size_t{1} << 17;
    std::uint64_t seed = 0;
    bool antithetic = true;
    double dt_max = sim::kDefaultDtMax;
    const std::vector<double>* injected_normals = nullptr;
    std::vector<native::ScheduleSegment> schedule;  // piecewise-constant params
};

// Monte-Carlo caplet prices on the native stepper, all strikes on shared
// paths. The T-forward pricing measure uses horizon T2 (the payment date).
std::vector<PriceResult> price_caplets_mc(const ModelSetting& setting,
                                          const ModelParams& params, double t1, double t2,
                                          const std::vector<double>& strikes, double omega,
                                          double notional, MeasureKind measure,
                                          const Curve& fcurve, const Curve& dcurve,
                                          const McConfig& config);

PriceResult price_caplet_mc(const ModelSetting& setting, const ModelParams& params,
                            const CapletSpec& spec, MeasureKind measure,
                            const Curve& fcurve, const Curve& dcurve,
                            const McConfig& config);

// The curves' forward term rate (p_F - 1)/delta, the ATM strike definition.
double atm_strike(const Curve& fcurve, double t1, double t2);

struct Quote {
    double maturity;  // T1
    double tenor;     // delta
    double strike;
    double price;  // per unit notional
};

// Quote file: comment lines with '#', rows "maturity tenor strike price".
std::vector<Quote> load_quotes(const std::string& path);
void save_quotes(const std::string& path, const std::vector<Quote>& quotes);

// Quotes sharing (maturity, tenor), in first-appearance order.
struct QuoteGroup {
    double t1 = 0.0;
    double t2 = 0.0;
    std::vector<double> strikes;
    std::vector<std::size_t> quote_index;
};

std::vector<QuoteGroup> group_quotes(const std::vector<Quote>& quotes);

// Quote-aligned prices: each (maturity, tenor) group priced on one
// shared-path simulation with the given config.
std::vector<PriceResult> price_quotes(const ModelSetting& setting, const ModelParams& params,
                                      const std::vector<Quote>& quotes, double omega,
                                      double notional, MeasureKind measure,
                                      const Curve& fcurve, const Curve& dcurve,
                                      const McConfig& config);

struct DiffRow {
    double strike;
    double market;
    double model;
    double diff;  // model - market
    double se;
    bool within_2se;
};

// Per-strike comparison table; results and quotes must align strike for
// strike. Errors on an empty quote set or mismatched strikes.
std::vector<DiffRow> price_diff_table(const std::vector<PriceResult>& results,
                                      const std::vector<Quote>& quotes);

std::string format_diff_table(const std::vector<DiffRow>& rows);
bool good_fit(const std::vector<DiffRow>& rows);

// Host-side setup for simulating a builtin script: script text, parse-time
// values (strikes, maturity/paytime, fixingtime), runtime bindings (model
// parameters, poa, measT) and the curve externals. Knots for PwLinBRLV come
// from params.lv; QDLNSV scripts bind rho = 0 (independent Brownians).
struct ScriptSetup {
    std::string text;
    script::CheckEnv env;
    std::map<std::string, sim::Binding> bindings;
    std::map<std::string, std::function<double(double)>> externals;
};

ScriptSetup builtin_caplet_setup(const ModelSetting& setting, const ModelParams& params,
                                 MeasureKind measure, double t1, double t2,
                                 const std::vector<double>& strikes, const Curve& fcurve,
                                 const Curve& dcurve);

}  // namespace cheyette::pricing
