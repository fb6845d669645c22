#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <doctest.h>

#include "cheyette/errors.hpp"
#include "cheyette/native.hpp"
#include "cheyette/pricing.hpp"
#include "cheyette/script/ast.hpp"
#include "cheyette/sim/engine.hpp"
#include "cheyette/sim/stats.hpp"
#include "cheyette/support.hpp"
#include "table_params.hpp"

using namespace cheyette;
using namespace cheyette::pricing;

namespace {

const Curve& fcurve() {
    static const Curve c = Curve::flat(CurveLabel::Forecasting, 0.025);
    return c;
}
const Curve& dcurve() {
    static const Curve c = Curve::flat(CurveLabel::Discounting, 0.020);
    return c;
}

ModelParams hull_white(double a) {
    ModelParams p;
    p.lambda = 0.03;
    p.delta = 0.25;
    p.lv.a = a;
    p.lv.b = 0.0;
    p.sv = NoSvParams{};
    return p;
}

constexpr double kAtm = 0.025078288015047967;

}  // namespace

TEST_SUITE("pricing") {

TEST_CASE("black call/put values, parity and degenerate vol") {
    CHECK(black(100.0, 95.0, 0.25, 1.0) ==
          doctest::Approx(12.40127169436203).epsilon(1e-14));
    CHECK(black(100.0, 95.0, 0.25, -1.0) ==
          doctest::Approx(7.4012716943620305).epsilon(1e-14));
    CHECK(black(100.0, 120.0, 0.4, 1.0) ==
          doctest::Approx(9.188094709522517).epsilon(1e-14));
    // Parity: C - P = F - K.
    for (double k : {80.0, 100.0, 130.0}) {
        const double c = black(100.0, k, 0.3, 1.0);
        const double p = black(100.0, k, 0.3, -1.0);
        CHECK(c - p == doctest::Approx(100.0 - k).epsilon(1e-13));
    }
    // v = 0 collapses to intrinsic.
    CHECK(black(100.0, 95.0, 0.0, 1.0) == 5.0);
    CHECK(black(100.0, 105.0, 0.0, 1.0) == 0.0);
    CHECK(black(100.0, 105.0, 0.0, -1.0) == 5.0);
    // Strikes decrease call prices.
    CHECK(black(100.0, 90.0, 0.3, 1.0) > black(100.0, 110.0, 0.3, 1.0));
    CHECK_THROWS_AS((void)black(-1.0, 95.0, 0.25, 1.0), ValidationError);
    CHECK_THROWS_AS((void)black(100.0, 95.0, -0.1, 1.0), ValidationError);
    CHECK_THROWS_AS((void)black(100.0, 95.0, 0.25, 0.5), ValidationError);
}

TEST_CASE("caplet spec validation") {
    CapletSpec s{1.0, 1.0, 1.0, 1.25, 0.025};
    CHECK_NOTHROW(s.validate());
    CHECK(s.delta() == 0.25);
    s.t2 = 0.5;
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s = {1.0, 1.0, 0.0, 1.25, 0.025};
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s = {1.0, 0.5, 1.0, 1.25, 0.025};
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s = {-2.0, 1.0, 1.0, 1.25, 0.025};
    CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("payoff coefficients of the reduced caplet") {
    const CapletSpec spec{1.0, 1.0, 1.0, 1.25, 0.025};
    const PayoffCoeffs c = payoff_coeffs(fcurve(), dcurve(), 0.03, spec);
    CHECK(c.p_f == doctest::Approx(1.006269572003762).epsilon(1e-14));
    CHECK(c.c_x == doctest::Approx(0.2490648393620528).epsilon(1e-14));
    CHECK(c.c_y == doctest::Approx(0.03101664710322258).epsilon(1e-14));
    CHECK(c.k_hat == doctest::Approx(1.00625).epsilon(1e-15));
    CHECK(c.c_y == doctest::Approx(0.5 * c.c_x * c.c_x).epsilon(1e-15));
}

TEST_CASE("atm strike definition") {
    CHECK(atm_strike(fcurve(), 1.0, 1.25) == doctest::Approx(kAtm).epsilon(1e-14));
    const PayoffCoeffs c =
        payoff_coeffs(fcurve(), dcurve(), 0.03, {1.0, 1.0, 1.0, 1.25, kAtm});
    // k_hat at the ATM strike equals the benchmark forward factor.
    CHECK(c.k_hat == doctest::Approx(c.p_f).epsilon(1e-15));
}

TEST_CASE("constant-vol closed form against an independent evaluation") {
    const double a = 0.008;
    CHECK(hw_closed_form_caplet(a, 0.03, fcurve(), dcurve(),
                                {1.0, 1.0, 1.0, 1.25, kAtm}) ==
          doctest::Approx(0.0007685772721796).epsilon(1e-13));
    CHECK(hw_closed_form_caplet(a, 0.03, fcurve(), dcurve(),
                                {1.0, 1.0, 1.0, 1.25, kAtm - 0.01}) ==
          doctest::Approx(0.0025321662411875597).epsilon(1e-13));
    CHECK(hw_closed_form_caplet(a, 0.03, fcurve(), dcurve(),
                                {1.0, 1.0, 1.0, 1.25, kAtm + 0.01}) ==
          doctest::Approx(9.474866616627501e-05).epsilon(1e-13));
    CHECK(hw_closed_form_caplet(a, 0.03, fcurve(), dcurve(),
                                {1.0, -1.0, 1.0, 1.25, kAtm}) ==
          doctest::Approx(0.0007685772721796).epsilon(1e-13));
    CHECK(hw_closed_form_caplet(a, 0.03, fcurve(), dcurve(),
                                {1.0, -1.0, 1.0, 1.25, kAtm + 0.01}) ==
          doctest::Approx(0.0025330234462370683).epsilon(1e-13));
    // Zero vol prices at intrinsic; notional scales linearly.
    CHECK(hw_closed_form_caplet(0.0, 0.03, fcurve(), dcurve(),
                                {1.0, 1.0, 1.0, 1.25, kAtm + 0.01}) == 0.0);
    CHECK(hw_closed_form_caplet(a, 0.03, fcurve(), dcurve(),
                                {100.0, 1.0, 1.0, 1.25, kAtm}) ==
          doctest::Approx(100.0 * 0.0007685772721796).epsilon(1e-13));
}

TEST_CASE("T-forward Monte Carlo agrees with the closed form") {
    const ModelParams p = hull_white(0.008);
    const ModelSetting setting{LocalVolForm::LinBRLV, SVForm::NoSV};
    McConfig cfg;
    cfg.paths = std::size_t{1} << 15;
    cfg.seed = 2024;
    const auto res =
        price_caplets_mc(setting, p, 1.0, 1.25, {kAtm - 0.01, kAtm, kAtm + 0.01}, 1.0,
                         1.0, MeasureKind::TForward, fcurve(), dcurve(), cfg);
    const double cf[] = {0.0025321662411875597, 0.0007685772721796,
                         9.474866616627501e-05};
    REQUIRE(res.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(res[i].standard_error > 0.0);
        CHECK(std::fabs(res[i].price - cf[i]) < 4.0 * res[i].standard_error);
        CHECK(res[i].measure == MeasureKind::TForward);
    }
    // Single-spec wrapper matches the batched call.
    const PriceResult one = price_caplet_mc(setting, p, {1.0, 1.0, 1.0, 1.25, kAtm},
                                            MeasureKind::TForward, fcurve(), dcurve(), cfg);
    CHECK(one.price == res[1].price);
    CHECK(one.standard_error == res[1].standard_error);
}

TEST_CASE("risk-neutral and T-forward measures price consistently") {
    const ModelParams p = hull_white(0.008);
    const ModelSetting setting{LocalVolForm::LinBRLV, SVForm::NoSV};
    McConfig cfg;
    cfg.paths = std::size_t{1} << 14;
    cfg.seed = 555;
    const auto tf = price_caplets_mc(setting, p, 1.0, 1.25, {kAtm}, 1.0, 1.0,
                                     MeasureKind::TForward, fcurve(), dcurve(), cfg);
    McConfig cfg2 = cfg;
    cfg2.seed = 556;
    const auto rn = price_caplets_mc(setting, p, 1.0, 1.25, {kAtm}, 1.0, 1.0,
                                     MeasureKind::RiskNeutral, fcurve(), dcurve(), cfg2);
    const double combined =
        std::sqrt(tf[0].standard_error * tf[0].standard_error +
                  rn[0].standard_error * rn[0].standard_error);
    CHECK(std::fabs(tf[0].price - rn[0].price) < 4.0 * combined);
}

TEST_CASE("caplet-floorlet parity holds sample by sample") {
    const ModelParams p = hull_white(0.008);
    native::CapletRun run;
    run.setting = {LocalVolForm::LinBRLV, SVForm::NoSV};
    run.params = p;
    run.measure = MeasureKind::TForward;
    run.fixing_time = 1.0;
    run.pay_time = 1.25;
    run.meas_t = 1.25;
    run.forecasting = &fcurve();
    run.discounting = &dcurve();
    native::PathConfig cfg;
    cfg.batch = 4096;
    cfg.seed = 31;
    const auto paths = native::simulate_paths(run, cfg);
    const auto caps = native::caplet_samples(run, paths, {kAtm}, 1.0);
    const auto floors = native::caplet_samples(run, paths, {kAtm}, -1.0);
    const auto mart = native::martingale_statistic(run, paths);
    const PayoffCoeffs c =
        payoff_coeffs(fcurve(), dcurve(), 0.03, {1.0, 1.0, 1.0, 1.25, kAtm});
    for (std::size_t i = 0; i < cfg.batch; ++i) {
        // pos(d) - pos(-d) = d exactly in IEEE arithmetic.
        const double d = c.p_f * mart[i] - c.k_hat;
        CHECK(caps[0][i] - floors[0][i] == d);
    }
}

TEST_CASE("martingale statistic has unit mean under the pay-time measure") {
    const ModelParams p = hull_white(0.008);
    native::CapletRun run;
    run.setting = {LocalVolForm::LinBRLV, SVForm::NoSV};
    run.params = p;
    run.measure = MeasureKind::TForward;
    run.fixing_time = 1.0;
    run.pay_time = 1.25;
    run.meas_t = 1.25;
    run.forecasting = &fcurve();
    run.discounting = &dcurve();
    native::PathConfig cfg;
    cfg.batch = std::size_t{1} << 14;
    cfg.seed = 17;
    cfg.antithetic = true;
    const auto paths = native::simulate_paths(run, cfg);
    const auto mart = native::martingale_statistic(run, paths);
    const auto est = sim::mc_estimate_antithetic(mart);
    CHECK(std::fabs(est.mean - 1.0) < 4.0 * est.standard_error);
}

TEST_CASE("quote files round trip and validate") {
    namespace fs = std::filesystem;
    const fs::path p = fs::temp_directory_path() / "cheyette_test_quotes.txt";
    const std::vector<Quote> quotes = {{1.0, 0.25, 0.02, 0.0036778136844895495},
                                       {1.0, 0.25, 0.025, 0.00074873451802949184},
                                       {2.0, 0.5, 0.03, 2.1092051080662738e-05}};
    save_quotes(p.string(), quotes);
    const auto back = load_quotes(p.string());
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back[i].maturity == quotes[i].maturity);
        CHECK(back[i].tenor == quotes[i].tenor);
        CHECK(back[i].strike == quotes[i].strike);
        CHECK(back[i].price == quotes[i].price);
    }
    fs::remove(p);

    const auto bad_file = [&](const std::string& body) {
        std::ofstream out(p);
        out << body;
        out.close();
        return p.string();
    };
    CHECK_THROWS_AS((void)load_quotes("/nonexistent/quotes.txt"), RuntimeError);
    CHECK_THROWS_WITH_AS((void)load_quotes(bad_file("1.0 0.25 0.02\n")),
                         doctest::Contains(":1"), ValidationError);
    CHECK_THROWS_AS((void)load_quotes(bad_file("1.0 0.25 0.02 0.001 junk\n")),
                    ValidationError);
    CHECK_THROWS_AS((void)load_quotes(bad_file("1.0 0.25 0.02 abc\n")),
                    ValidationError);
    CHECK_THROWS_AS((void)load_quotes(bad_file("-1.0 0.25 0.02 0.001\n")),
                    ValidationError);
    fs::remove(p);
}

TEST_CASE("quotes group by (maturity, tenor) in first-appearance order") {
    const std::vector<Quote> quotes = {{1.0, 0.25, 0.02, 1e-3},
                                       {2.0, 0.25, 0.02, 1e-3},
                                       {1.0, 0.25, 0.03, 1e-3},
                                       {2.0, 0.25, 0.04, 1e-3}};
    const auto groups = group_quotes(quotes);
    REQUIRE(groups.size() == 2);
    CHECK(groups[0].t1 == 1.0);
    CHECK(groups[0].t2 == 1.25);
    CHECK(groups[0].strikes == std::vector<double>{0.02, 0.03});
    CHECK(groups[0].quote_index == std::vector<std::size_t>{0, 2});
    CHECK(groups[1].t1 == 2.0);
    CHECK(groups[1].strikes == std::vector<double>{0.02, 0.04});
    CHECK(groups[1].quote_index == std::vector<std::size_t>{1, 3});
}

TEST_CASE("price_quotes aligns prices with the quote list") {
    const ModelParams p = hull_white(0.008);
    const ModelSetting setting{LocalVolForm::LinBRLV, SVForm::NoSV};
    const std::vector<Quote> quotes = {{1.0, 0.25, kAtm, 1e-3},
                                       {1.0, 0.25, kAtm + 0.01, 1e-4}};
    McConfig cfg;
    cfg.paths = 4096;
    cfg.seed = 8;
    const auto res = price_quotes(setting, p, quotes, 1.0, 1.0, MeasureKind::TForward,
                                  fcurve(), dcurve(), cfg);
    const auto direct = price_caplets_mc(setting, p, 1.0, 1.25, {kAtm, kAtm + 0.01},
                                         1.0, 1.0, MeasureKind::TForward, fcurve(),
                                         dcurve(), cfg);
    REQUIRE(res.size() == 2);
    CHECK(res[0].price == direct[0].price);
    CHECK(res[1].price == direct[1].price);
    CHECK(res[0].standard_error == direct[0].standard_error);
}

TEST_CASE("diff table marks quotes within two standard errors") {
    const std::vector<Quote> quotes = {{1.0, 0.25, 0.02, 0.0010},
                                       {1.0, 0.25, 0.03, 0.0010}};
    std::vector<PriceResult> res(2);
    res[0] = {0.0010 + 1.9e-5, 1e-5, 1024, MeasureKind::TForward};
    res[1] = {0.0010 + 2.1e-5, 1e-5, 1024, MeasureKind::TForward};
    const auto rows = price_diff_table(res, quotes);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].within_2se);
    CHECK(!rows[1].within_2se);
    CHECK(rows[0].diff == doctest::Approx(1.9e-5).epsilon(1e-12));
    CHECK(rows[0].strike == 0.02);
    CHECK(!good_fit(rows));
    CHECK(good_fit({rows[0]}));

    const std::string table = format_diff_table(rows);
    CHECK(table.find("# strike market model diff se within_2se") == 0);
    CHECK(table.find(" yes") != std::string::npos);
    CHECK(table.find(" no") != std::string::npos);
    CHECK(table.find(num17(rows[0].model)) != std::string::npos);

    CHECK_THROWS_WITH_AS((void)price_diff_table({}, {}),
                         doctest::Contains("empty quote set"), ValidationError);
    CHECK_THROWS_AS((void)price_diff_table(res, {quotes[0]}), ValidationError);
}

TEST_CASE("builtin caplet setup simulates and matches the native stepper") {
    // Per-setting bit parity between the DSL interpreter and the hand-coded
    // stepper, on a small batch under both measures.
    const std::vector<double> strikes = {kAtm - 0.005, kAtm, kAtm + 0.005};
    for (const auto& setting : settings_catalog()) {
        const ModelParams params = cheyette::testing::published_params(setting, kAtm);
        for (const auto measure : {MeasureKind::TForward, MeasureKind::RiskNeutral}) {
            CAPTURE(to_string(setting));
            const ScriptSetup setup = builtin_caplet_setup(
                setting, params, measure, 1.0, 1.25, strikes, fcurve(), dcurve());
            const auto prog = script::check(script::parse(setup.text), setup.env);
            const auto plan = sim::compile(prog, sim::GridHints{});
            sim::SimConfig cfg;
            cfg.batch = 64;
            cfg.seed = 99;
            cfg.bindings = setup.bindings;
            cfg.externals = setup.externals;
            const auto out = sim::simulate(plan, cfg);
            REQUIRE(out.payoff_samples.size() == strikes.size());

            native::CapletRun run;
            run.setting = setting;
            run.params = params;
            run.measure = measure;
            run.fixing_time = 1.0;
            run.pay_time = 1.25;
            run.meas_t = 1.25;
            run.forecasting = &fcurve();
            run.discounting = &dcurve();
            native::PathConfig ncfg;
            ncfg.batch = 64;
            ncfg.seed = 99;
            const auto paths = native::simulate_paths(run, ncfg);
            const auto samples = native::caplet_samples(run, paths, strikes, 1.0);
            for (std::size_t s = 0; s < strikes.size(); ++s) {
                REQUIRE(samples[s].size() == out.payoff_samples[s].size());
                CHECK(std::memcmp(samples[s].data(), out.payoff_samples[s].data(),
                                  samples[s].size() * sizeof(double)) == 0);
            }
        }
    }
}

TEST_CASE("schedule segments switch parameters at the boundary") {
    // A schedule whose segment parameters both equal the base parameters is a
    // no-op; raising the second segment's vol raises the price.
    const ModelParams p = hull_white(0.008);
    const ModelSetting setting{LocalVolForm::LinBRLV, SVForm::NoSV};
    McConfig plain;
    plain.paths = 4096;
    plain.seed = 12;
    const auto base = price_caplets_mc(setting, p, 1.0, 1.25, {kAtm}, 1.0, 1.0,
                                       MeasureKind::TForward, fcurve(), dcurve(), plain);
    McConfig seg = plain;
    seg.schedule = {{0.5, p}, {std::numeric_limits<double>::infinity(), p}};
    const auto same = price_caplets_mc(setting, p, 1.0, 1.25, {kAtm}, 1.0, 1.0,
                                       MeasureKind::TForward, fcurve(), dcurve(), seg);
    CHECK(same[0].price == base[0].price);

    ModelParams hot = hull_white(0.016);
    McConfig seg2 = plain;
    seg2.schedule = {{0.5, p}, {std::numeric_limits<double>::infinity(), hot}};
    const auto higher = price_caplets_mc(setting, p, 1.0, 1.25, {kAtm}, 1.0, 1.0,
                                         MeasureKind::TForward, fcurve(), dcurve(), seg2);
    CHECK(higher[0].price > base[0].price);
}

}  // TEST_SUITE
