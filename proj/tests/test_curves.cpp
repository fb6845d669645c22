#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "cheyette/curves.hpp"
#include "cheyette/errors.hpp"

using namespace cheyette;

namespace {

Curve sample_curve() {
    return Curve(CurveLabel::Forecasting,
                 {{0.0, 1.0}, {1.0, 0.97}, {3.0, 0.91}, {7.0, 0.80}});
}

// Flat 2.5% / 2.0% pillar sets shared with data/curves/*.txt.
Curve flat_forecasting() { return Curve::flat(CurveLabel::Forecasting, 0.025); }
Curve flat_discounting() { return Curve::flat(CurveLabel::Discounting, 0.020); }

}  // namespace

TEST_SUITE("curves") {

TEST_CASE("pillars are reproduced exactly and (0,1) is implied") {
    const Curve c(CurveLabel::Discounting, {{1.0, 0.97}, {3.0, 0.91}});
    CHECK(c.pillars().size() == 3);
    CHECK(c.pillars()[0].time == 0.0);
    CHECK(c.pillars()[0].df == 1.0);
    CHECK(c.df(0.0) == 1.0);
    CHECK(c.df(1.0) == 0.97);
    CHECK(c.df(3.0) == 0.91);
    CHECK(c.max_time() == 3.0);
    CHECK(c.label() == CurveLabel::Discounting);
}

TEST_CASE("log-linear interpolation between pillars") {
    const Curve c = sample_curve();
    // exp(w ln d_i + (1-w) ln d_{i+1}) on each interval.
    CHECK(c.df(2.0) == doctest::Approx(0.9395211546314431).epsilon(1e-15));
    CHECK(c.df(0.5) == doctest::Approx(0.9848857801796105).epsilon(1e-15));
    CHECK(c.df(6.0) == doctest::Approx(0.8261860131026483).epsilon(1e-15));
}

TEST_CASE("instantaneous forward is piecewise constant") {
    const Curve c = sample_curve();
    const double f0 = 0.030459207484708574;
    const double f1 = 0.031925735993266355;
    const double f2 = 0.03220821796074211;
    CHECK(c.inst_forward(0.5) == doctest::Approx(f0).epsilon(1e-14));
    CHECK(c.inst_forward(2.0) == doctest::Approx(f1).epsilon(1e-14));
    CHECK(c.inst_forward(5.0) == doctest::Approx(f2).epsilon(1e-14));
    // A pillar takes the right interval, the last pillar the left one.
    CHECK(c.inst_forward(1.0) == doctest::Approx(f1).epsilon(1e-14));
    CHECK(c.inst_forward(0.0) == doctest::Approx(f0).epsilon(1e-14));
    CHECK(c.inst_forward(7.0) == doctest::Approx(f2).epsilon(1e-14));
}

TEST_CASE("flat curve matches exp(-r t)") {
    const Curve c = Curve::flat(CurveLabel::Forecasting, 0.025, 10.0);
    CHECK(c.max_time() == 10.0);
    CHECK(c.df(10.0) == doctest::Approx(std::exp(-0.25)).epsilon(1e-15));
    CHECK(c.df(4.0) == doctest::Approx(std::exp(-0.1)).epsilon(1e-15));
    CHECK(c.inst_forward(3.0) == doctest::Approx(0.025).epsilon(1e-13));
}

TEST_CASE("domain and construction errors") {
    const Curve c = sample_curve();
    CHECK_THROWS_AS((void)c.df(-0.1), ValidationError);
    CHECK_THROWS_AS((void)c.df(7.0 + 1e-9), ValidationError);
    CHECK_THROWS_AS(Curve(CurveLabel::Forecasting, {}), ValidationError);
    CHECK_THROWS_AS(Curve(CurveLabel::Forecasting, {{0.0, 1.0}}), ValidationError);
    // non-increasing times
    CHECK_THROWS_AS(Curve(CurveLabel::Forecasting, {{2.0, 0.9}, {1.0, 0.95}}),
                    ValidationError);
    CHECK_THROWS_AS(Curve(CurveLabel::Forecasting, {{1.0, 0.95}, {1.0, 0.9}}),
                    ValidationError);
    // non-positive df, df(0) != 1
    CHECK_THROWS_AS(Curve(CurveLabel::Forecasting, {{1.0, 0.0}}), ValidationError);
    CHECK_THROWS_AS(Curve(CurveLabel::Forecasting, {{1.0, -0.5}}), ValidationError);
    CHECK_THROWS_AS(Curve(CurveLabel::Forecasting, {{0.0, 0.99}, {1.0, 0.9}}),
                    ValidationError);
}

TEST_CASE("text round trip preserves pillar values bitwise") {
    const Curve c = sample_curve();
    std::ostringstream out;
    c.write(out);
    std::istringstream in(out.str());
    const Curve back = Curve::read(in, "roundtrip");
    REQUIRE(back.pillars().size() == c.pillars().size());
    for (std::size_t i = 0; i < c.pillars().size(); ++i) {
        CHECK(back.pillars()[i].time == c.pillars()[i].time);
        CHECK(back.pillars()[i].df == c.pillars()[i].df);
    }
    CHECK(back.label() == c.label());
}

TEST_CASE("read accepts comments and commas, rejects junk") {
    {
        std::istringstream in(
            "# yield curve\n\ncurve discounting\n0, 1\n1, 0.98\n# tail\n2 0.96\n");
        const Curve c = Curve::read(in, "inline");
        CHECK(c.label() == CurveLabel::Discounting);
        CHECK(c.df(2.0) == 0.96);
    }
    {
        std::istringstream in("0 1\n1 0.98\n");  // missing header
        CHECK_THROWS_AS(Curve::read(in, "inline"), ValidationError);
    }
    {
        std::istringstream in("curve discounting\n1 0.98 extra\n");
        CHECK_THROWS_AS(Curve::read(in, "inline"), ValidationError);
    }
    {
        std::istringstream in("curve discounting\nnot a number\n");
        CHECK_THROWS_AS(Curve::read(in, "inline"), ValidationError);
    }
    CHECK_THROWS_AS(Curve::load("/nonexistent/curve.txt"), RuntimeError);
}

TEST_CASE("curve label strings") {
    CHECK(to_string(CurveLabel::Forecasting) == "forecasting");
    CHECK(to_string(CurveLabel::Discounting) == "discounting");
    CHECK(curve_label_from_string("forecasting") == CurveLabel::Forecasting);
    CHECK(curve_label_from_string("discounting") == CurveLabel::Discounting);
    CHECK_THROWS_AS(curve_label_from_string("funding"), ValidationError);
}

TEST_CASE("g and h closed forms") {
    CHECK(g_fn(0.03, 0.25) == doctest::Approx(0.24906483936205231).epsilon(1e-15));
    CHECK(h_fn(0.03, 0.25) == doctest::Approx(0.9925280548191384).epsilon(1e-15));
    CHECK(g_fn(0.025, 1.0) == doctest::Approx(0.9876035188666933).epsilon(1e-15));
    CHECK(g_fn(0.03, 0.0) == 0.0);
    CHECK(h_fn(0.03, 0.0) == 1.0);
}

TEST_CASE("g survives the small-lambda limit without cancellation") {
    // (1 - e^{-l x})/l -> x as l -> 0; the Taylor branch keeps full precision.
    CHECK(g_fn(1e-9, 2.0) == doctest::Approx(1.999999998).epsilon(1e-15));
    CHECK(g_fn(1e-12, 1.0) == doctest::Approx(1.0 - 5e-13).epsilon(1e-15));
    CHECK(g_fn(1e-300, 3.0) == doctest::Approx(3.0).epsilon(1e-15));
    // Continuity across the branch threshold lambda*x = 1e-6.
    const double below = g_fn(9.999e-7, 1.0);
    const double above = g_fn(1.001e-6, 1.0);
    CHECK(below == doctest::Approx(above).epsilon(1e-9));
}

TEST_CASE("mean reversion must be positive") {
    CHECK(MeanReversion(0.03).lambda == 0.03);
    CHECK_THROWS_AS(MeanReversion(0.0), ValidationError);
    CHECK_THROWS_AS(MeanReversion(-0.1), ValidationError);
}

TEST_CASE("beta0 and the affine forward map") {
    const Curve fc = flat_forecasting();
    const Curve dc = flat_discounting();
    CHECK(beta0(fc, dc, 1.0, 1.25) ==
          doctest::Approx(1.0012507815756226).epsilon(1e-14));
    const AffineForwardMap m = affine_map(fc, dc, 1.0, 1.25, 0.25);
    CHECK(m.m == doctest::Approx(1.0012507815756226).epsilon(1e-14));
    CHECK(m.s == doctest::Approx(0.005003126302490557).epsilon(1e-12));
    // Coinciding curves give the identity map.
    const AffineForwardMap id = affine_map(fc, fc, 1.0, 1.25, 0.25);
    CHECK(id.m == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(id.s == doctest::Approx(0.0).epsilon(1e-13));
}

TEST_CASE("model discount bond reconstitution") {
    const Curve fc = flat_forecasting();
    CHECK(model_df(fc, 1.0, 2.0, 0.01, 0.0004, 0.03) ==
          doctest::Approx(0.9655613929145531).epsilon(1e-14));
    // x = y = 0 collapses to the forward discount factor.
    CHECK(model_df(fc, 1.0, 2.0, 0.0, 0.0, 0.03) ==
          doctest::Approx(fc.df(2.0) / fc.df(1.0)).epsilon(1e-15));
}

TEST_CASE("benchmark forward rate") {
    const Curve fc = flat_forecasting();
    CHECK(benchmark_forward(fc, 0.03, 1.0, 0.25, 0.01, 0.0004) ==
          doctest::Approx(0.035024162084405674).epsilon(1e-13));
    // x = y = 0 gives the curve forward f(0, t+delta).
    CHECK(benchmark_forward(fc, 0.03, 1.0, 0.25, 0.0, 0.0) ==
          doctest::Approx(fc.inst_forward(1.25)).epsilon(1e-15));
    // Flat 2%, lambda small: f + x to first order.
    const Curve f2 = Curve::flat(CurveLabel::Forecasting, 0.02);
    CHECK(benchmark_forward(f2, 1e-9, 1.0, 0.25, 0.01, 0.0) ==
          doctest::Approx(0.03).epsilon(1e-7));
}

TEST_CASE("save and load through the filesystem") {
    namespace fs = std::filesystem;
    const fs::path p = fs::temp_directory_path() / "cheyette_test_curve.txt";
    const Curve c = flat_forecasting();
    c.save(p);
    const Curve back = Curve::load(p);
    CHECK(back.pillars().size() == c.pillars().size());
    CHECK(back.df(37.5) == c.df(37.5));
    fs::remove(p);
}

}  // TEST_SUITE
