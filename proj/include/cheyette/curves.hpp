#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace cheyette {

enum class CurveLabel { Forecasting, Discounting };

std::string to_string(CurveLabel label);
CurveLabel curve_label_from_string(const std::string& text);

struct CurvePoint {
    double time;  // year fraction from 0
    double df;    // discount factor, > 0
};

/// Discount-factor term structure with log-linear interpolation between
/// pillars, which makes the instantaneous forward piecewise constant.
/// Immutable after construction; safe for unrestricted concurrent reads.
class Curve {
public:
    /// Pillars must have strictly increasing times and positive discount
    /// factors. A pillar at t=0 must carry df=1; if absent, (0, 1) is added.
    /// At least one pillar beyond t=0 is required.
    Curve(CurveLabel label, std::vector<CurvePoint> pillars);

    /// Two-pillar curve with constant continuously compounded rate.
    static Curve flat(CurveLabel label, double rate, double horizon = 60.0);

    /// P(0,t). Exact at pillars (returns the stored value), log-linear in
    /// between. Throws ValidationError for t < 0 or t beyond the last pillar.
    double df(double t) const;

    /// f(0,t) = -d/dt ln P(0,t). Piecewise constant; a pillar takes the
    /// right-hand interval's slope, the last pillar the left-hand one.
    double inst_forward(double t) const;

    double max_time() const { return pillars_.back().time; }
    CurveLabel label() const { return label_; }
    const std::vector<CurvePoint>& pillars() const { return pillars_; }

    /// Text format: optional '#' comment lines, a header `curve <label>`,
    /// then one `<time> <df>` row per pillar (whitespace or comma delimited).
    static Curve load(const std::filesystem::path& path);
    static Curve read(std::istream& in, const std::string& origin);
    void write(std::ostream& out) const;
    void save(const std::filesystem::path& path) const;

private:
    CurveLabel label_;
    std::vector<CurvePoint> pillars_;
    std::vector<double> log_df_;
    std::vector<double> fwd_;  // per-interval forward rate

    std::size_t interval_index(double t, const char* op) const;
};

/// Mean-reversion speed; the lambda -> 0 limit lives inside g_fn, never in a
/// stored zero.
struct MeanReversion {
    double lambda;
    explicit MeanReversion(double l);
};

/// G(x) = (1 - e^{-lambda x}) / lambda, with a 4-term Taylor expansion for
/// lambda*x < 1e-6 to avoid cancellation.
double g_fn(double lambda, double x);

/// h(x) = e^{-lambda x}.
double h_fn(double lambda, double x);

/// beta0(tS,tE) = (P_F(0,tS)/P_F(0,tE)) * (P_D(0,tE)/P_D(0,tS)).
double beta0(const Curve& fcurve, const Curve& dcurve, double t_start, double t_end);

struct AffineForwardMap {
    double m;  // dimensionless multiplier; 1 when the curves coincide
    double s;  // additive rate spread; 0 when the curves coincide
};

/// m = beta0, s = (beta0 - 1) / delta.
AffineForwardMap affine_map(const Curve& fcurve, const Curve& dcurve,
                            double t_start, double t_end, double delta);

/// P(t,T)(x,y) = (P(0,T)/P(0,t)) exp(-G(T-t) x - 1/2 G(T-t)^2 y).
double model_df(const Curve& curve, double t, double big_t, double x, double y,
                double lambda);

/// f(t,t+delta) = f(0,t+delta) + h(delta) (x + G(delta) y).
double benchmark_forward(const Curve& fcurve, double lambda, double t,
                         double delta, double x, double y);

}  // namespace cheyette
