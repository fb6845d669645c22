#include "cheyette/curves.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cheyette/errors.hpp"
#include "cheyette/support.hpp"

namespace cheyette {

std::string to_string(CurveLabel label) {
    return label == CurveLabel::Forecasting ? "forecasting" : "discounting";
}

CurveLabel curve_label_from_string(const std::string& text) {
    if (text == "forecasting") return CurveLabel::Forecasting;
    if (text == "discounting") return CurveLabel::Discounting;
    throw ValidationError("unknown curve label '" + text +
                          "' (expected forecasting or discounting)");
}

Curve::Curve(CurveLabel label, std::vector<CurvePoint> pillars) : label_(label) {
    if (pillars.empty()) throw ValidationError("curve needs at least one pillar");
    if (pillars.front().time < 0.0)
        throw ValidationError("curve pillar times must be >= 0");
    if (pillars.front().time > 0.0)
        pillars.insert(pillars.begin(), CurvePoint{0.0, 1.0});
    if (pillars.front().df != 1.0)
        throw ValidationError("curve must have df(0) = 1");
    for (std::size_t i = 1; i < pillars.size(); ++i) {
        if (!(pillars[i].time > pillars[i - 1].time))
            throw ValidationError("curve pillar times must be strictly increasing");
        if (!(pillars[i].df > 0.0) || !std::isfinite(pillars[i].df))
            throw ValidationError("curve discount factors must be positive and finite");
    }
    if (pillars.size() < 2)
        throw ValidationError("curve needs a pillar beyond t=0");
    pillars_ = std::move(pillars);
    log_df_.resize(pillars_.size());
    for (std::size_t i = 0; i < pillars_.size(); ++i) log_df_[i] = std::log(pillars_[i].df);
    fwd_.resize(pillars_.size() - 1);
    for (std::size_t i = 0; i + 1 < pillars_.size(); ++i)
        fwd_[i] = (log_df_[i] - log_df_[i + 1]) / (pillars_[i + 1].time - pillars_[i].time);
}

Curve Curve::flat(CurveLabel label, double rate, double horizon) {
    if (!(horizon > 0.0)) throw ValidationError("flat curve horizon must be > 0");
    return Curve(label, {{0.0, 1.0}, {horizon, std::exp(-rate * horizon)}});
}

std::size_t Curve::interval_index(double t, const char* op) const {
    if (!(t >= 0.0) || t > max_time()) {
        std::ostringstream msg;
        msg << op << ": time " << t << " outside curve domain [0, " << max_time() << "]";
        throw ValidationError(msg.str());
    }
    // Index of the interval [t_i, t_{i+1}) containing t; last pillar maps to
    // the final interval.
    auto it = std::upper_bound(pillars_.begin(), pillars_.end(), t,
                               [](double v, const CurvePoint& p) { return v < p.time; });
    std::size_t i = static_cast<std::size_t>(it - pillars_.begin());
    if (i == pillars_.size()) return i - 2;
    return i - 1;
}

double Curve::df(double t) const {
    const std::size_t i = interval_index(t, "df");
    if (t == pillars_[i].time) return pillars_[i].df;
    if (t == pillars_[i + 1].time) return pillars_[i + 1].df;
    const double alpha = (t - pillars_[i].time) / (pillars_[i + 1].time - pillars_[i].time);
    return std::exp(log_df_[i] + alpha * (log_df_[i + 1] - log_df_[i]));
}

double Curve::inst_forward(double t) const {
    return fwd_[interval_index(t, "inst_forward")];
}

Curve Curve::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw RuntimeError("cannot open curve file: " + path.string());
    return read(in, path.string());
}

Curve Curve::read(std::istream& in, const std::string& origin) {
    std::string line;
    int lineno = 0;
    bool have_header = false;
    CurveLabel label = CurveLabel::Forecasting;
    std::vector<CurvePoint> pillars;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream row(line);
        std::string first;
        if (!(row >> first)) continue;
        if (!have_header) {
            if (first != "curve")
                throw ValidationError(origin + ":" + std::to_string(lineno) +
                                      ": expected header 'curve <label>'");
            std::string name;
            if (!(row >> name))
                throw ValidationError(origin + ":" + std::to_string(lineno) +
                                      ": missing curve label");
            label = curve_label_from_string(name);
            have_header = true;
            continue;
        }
        CurvePoint p{};
        std::istringstream cells(line);
        if (!(cells >> p.time >> p.df))
            throw ValidationError(origin + ":" + std::to_string(lineno) +
                                  ": expected '<time> <df>' row");
        pillars.push_back(p);
    }
    if (!have_header)
        throw ValidationError(origin + ": missing 'curve <label>' header");
    try {
        return Curve(label, std::move(pillars));
    } catch (const ValidationError& e) {
        throw ValidationError(origin + ": " + e.what());
    }
}

void Curve::write(std::ostream& out) const {
    out << "curve " << to_string(label_) << "\n";
    for (const auto& p : pillars_) out << num17(p.time) << " " << num17(p.df) << "\n";
}

void Curve::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw RuntimeError("cannot write curve file: " + path.string());
    write(out);
}

MeanReversion::MeanReversion(double l) : lambda(l) {
    if (!(lambda > 0.0)) throw ValidationError("mean reversion lambda must be > 0");
}

double g_fn(double lambda, double x) {
    if (!(lambda > 0.0)) throw ValidationError("g_fn requires lambda > 0");
    const double u = lambda * x;
    if (std::abs(u) < 1e-6)
        return x * (1.0 - u / 2.0 + u * u / 6.0 - u * u * u / 24.0);
    return (1.0 - std::exp(-u)) / lambda;
}

double h_fn(double lambda, double x) { return std::exp(-lambda * x); }

double beta0(const Curve& fcurve, const Curve& dcurve, double t_start, double t_end) {
    if (!(t_start >= 0.0 && t_start < t_end))
        throw ValidationError("beta0 requires 0 <= t_start < t_end");
    return (fcurve.df(t_start) / fcurve.df(t_end)) * (dcurve.df(t_end) / dcurve.df(t_start));
}

AffineForwardMap affine_map(const Curve& fcurve, const Curve& dcurve,
                            double t_start, double t_end, double delta) {
    if (!(delta > 0.0)) throw ValidationError("affine_map requires delta > 0");
    const double b0 = beta0(fcurve, dcurve, t_start, t_end);
    return AffineForwardMap{b0, (b0 - 1.0) / delta};
}

double model_df(const Curve& curve, double t, double big_t, double x, double y,
                double lambda) {
    if (!(t >= 0.0 && t <= big_t)) throw ValidationError("model_df requires 0 <= t <= T");
    const double g = g_fn(lambda, big_t - t);
    return (curve.df(big_t) / curve.df(t)) * std::exp(-g * x - 0.5 * g * g * y);
}

double benchmark_forward(const Curve& fcurve, double lambda, double t,
                         double delta, double x, double y) {
    return fcurve.inst_forward(t + delta) +
           h_fn(lambda, delta) * (x + g_fn(lambda, delta) * y);
}

}  // namespace cheyette
