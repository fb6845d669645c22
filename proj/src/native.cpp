#include <cmath>
#include <sstream>

#include "cheyette/errors.hpp"
#include "cheyette/native.hpp"
#include "cheyette/sim/rng.hpp"
#include "cheyette/support.hpp"

namespace cheyette::native {

namespace {

// Script-shaped helpers: the builtin scripts spell g as
// (1/mr)*(oneslike(x)-exp(-mr*x)) and h as exp(-mr*x); the steppers must
// follow that operation order exactly for bit parity with the interpreter.
inline double pos(double v) { return v > 0.0 ? v : 0.0; }
inline double g_script(double mr, double u) {
    return (1.0 / mr) * (1.0 - std::exp((-mr) * u));
}
inline double h_script(double mr, double u) { return std::exp((-mr) * u); }

// Parameter snapshot for one schedule segment, flattened by setting.
struct SegView {
    double a = 0.0, b = 0.0;
    const std::vector<double>* knots = nullptr;
    const std::vector<double>* levels = nullptr;
    double theta = 0.0, z0 = 1.0, eta = 0.0;   // CIR family (eta = volofvar)
    double beta = 0.0, eps = 0.0;              // CorCIR decomposition / QDLNSV
    double kappa1 = 0.0, kappa2 = 0.0, theta_vol = 1.0, vtheta0 = 1.0;
};

SegView view_of(const ModelSetting& setting, const ModelParams& p) {
    SegView v;
    v.a = p.lv.a;
    v.b = p.lv.b;
    if (setting.lv == LocalVolForm::PwLinBRLV) {
        v.knots = &p.lv.knots;
        v.levels = &p.lv.levels;
    }
    switch (setting.sv) {
        case SVForm::NoSV: break;
        case SVForm::CIRSV: {
            const auto& sv = std::get<CirSvParams>(p.sv);
            v.theta = sv.theta;
            v.z0 = sv.z0;
            v.eta = sv.eta;
            break;
        }
        case SVForm::CorCIRSV: {
            const auto& sv = std::get<CorCirSvParams>(p.sv);
            v.theta = sv.theta;
            v.z0 = sv.z0;
            v.beta = sv.beta();
            v.eps = sv.eps();
            break;
        }
        case SVForm::QDLNSV: {
            const auto& sv = std::get<QdlnSvParams>(p.sv);
            v.kappa1 = sv.kappa1;
            v.kappa2 = sv.kappa2;
            v.theta_vol = sv.theta_vol;
            v.beta = sv.beta;
            v.eps = sv.eps;
            v.vtheta0 = sv.vtheta0;
            break;
        }
    }
    return v;
}

// volterm assignment, matching the builtin script expression shapes.
inline double volterm_of(LocalVolForm lv, const SegView& s, double x, double f_t,
                         double deltafwd) {
    switch (lv) {
        case LocalVolForm::LinXLV: return s.a + s.b * x;
        case LocalVolForm::LinSRLV: return s.a + s.b * (f_t + x);
        case LocalVolForm::LinBRLV: return s.a + s.b * deltafwd;
        case LocalVolForm::PwLinBRLV: {
            // Left-associated sum of the conditional pieces, flat outside.
            const std::vector<double>& K = *s.knots;
            const std::vector<double>& a = *s.levels;
            const std::size_t n = K.size();
            double vt = deltafwd < K[0] ? a[0] : 0.0;
            for (std::size_t i = 0; i + 1 < n; ++i)
                vt = vt + (deltafwd >= K[i] && deltafwd < K[i + 1]
                               ? a[i] + ((a[i + 1] - a[i]) / (K[i + 1] - K[i])) *
                                            (deltafwd - K[i])
                               : 0.0);
            vt = vt + (deltafwd >= K[n - 1] ? a[n - 1] : 0.0);
            return vt;
        }
    }
    throw ValidationError("bad LocalVolForm");
}

[[noreturn]] void non_finite(const char* var, std::size_t step, double t) {
    std::ostringstream msg;
    msg << "non-finite value in '" << var << "' at step " << step << " (t=" << num17(t)
        << ")";
    throw RuntimeError(msg.str());
}

}  // namespace

PathOutput simulate_paths(const CapletRun& run, const PathConfig& config) {
    const ModelSetting setting = run.setting;
    const bool t_fwd = run.measure == MeasureKind::TForward;
    const bool cir = setting.sv == SVForm::CIRSV || setting.sv == SVForm::CorCIRSV;
    const bool corcir = setting.sv == SVForm::CorCIRSV;
    const bool qd = setting.sv == SVForm::QDLNSV;
    const bool benchmark =
        setting.lv == LocalVolForm::LinBRLV || setting.lv == LocalVolForm::PwLinBRLV;
    const std::size_t n_br = setting.sv == SVForm::NoSV ? 1 : 2;

    if (!(run.fixing_time > 0.0)) throw ValidationError("fixing_time must be positive");
    if (!t_fwd && !(run.pay_time >= run.fixing_time))
        throw ValidationError("pay_time must not precede fixing_time");
    if (t_fwd && !(run.meas_t >= run.fixing_time))
        throw ValidationError("meas_t must cover the fixing time");
    if (!run.forecasting) throw ValidationError("forecasting curve required");
    if (!t_fwd && !run.discounting)
        throw ValidationError("discounting curve required under the risk-neutral measure");
    validate_params(setting, run.params, false);
    for (const auto& seg : run.schedule) validate_params(setting, seg.params, false);
    for (std::size_t i = 1; i < run.schedule.size(); ++i)
        if (!(run.schedule[i].t_end > run.schedule[i - 1].t_end))
            throw ValidationError("schedule segment ends must be increasing");

    const std::size_t batch = config.batch;
    if (batch < 1) throw ValidationError("batch size must be positive");
    if (config.antithetic && batch % 2 != 0)
        throw ValidationError("antithetic batches must have even size");
    const std::size_t base = config.antithetic ? batch / 2 : batch;

    std::vector<double> obs{run.fixing_time};
    if (!t_fwd) obs.push_back(run.pay_time);
    const sim::TimeGrid grid = sim::TimeGrid::build(obs, config.dt_max);
    const std::size_t n_steps = grid.n_steps();
    const std::size_t idx_fix = grid.index_of(run.fixing_time);
    const std::size_t idx_pay = t_fwd ? idx_fix : grid.index_of(run.pay_time);

    if (config.injected_normals &&
        config.injected_normals->size() != n_steps * n_br * base)
        throw ValidationError("injected draws must have steps*brownians*base size");

    const double mr = run.params.lambda;
    const double delta = run.params.delta;
    const double gd = g_script(mr, delta);
    const double hd = h_script(mr, delta);

    const auto segment_at = [&](double t) -> SegView {
        if (run.schedule.empty()) return view_of(setting, run.params);
        for (const auto& seg : run.schedule)
            if (t < seg.t_end - 1e-12) return view_of(setting, seg.params);
        return view_of(setting, run.schedule.back().params);
    };

    // Per-step scalars hoisted out of the path loop; these are the exact
    // doubles the interpreter recomputes per path, so hoisting is value-safe.
    std::vector<SegView> seg_inc(n_steps), seg_asn(n_steps);
    std::vector<double> g_meas(t_fwd ? n_steps : 0), f_disc(t_fwd ? 0 : n_steps);
    std::vector<double> f_delta(benchmark ? n_steps : 0);
    std::vector<double> f_t1(setting.lv == LocalVolForm::LinSRLV ? n_steps : 0);
    for (std::size_t k = 0; k < n_steps; ++k) {
        const double t0 = grid.times[k];
        const double t1 = grid.times[k + 1];
        seg_inc[k] = segment_at(t0);
        seg_asn[k] = segment_at(t1);
        if (t_fwd) g_meas[k] = g_script(mr, run.meas_t - t0);
        if (!t_fwd) f_disc[k] = run.discounting->inst_forward(t0);
        if (benchmark) f_delta[k] = run.forecasting->inst_forward(t1 + delta);
        if (!f_t1.empty()) f_t1[k] = run.forecasting->inst_forward(t1);
    }
    const SegView seg0 = segment_at(0.0);
    const double f_delta0 = benchmark ? run.forecasting->inst_forward(0.0 + delta) : 0.0;
    const double f_t10 =
        setting.lv == LocalVolForm::LinSRLV ? run.forecasting->inst_forward(0.0) : 0.0;

    const std::vector<double>* injected = config.injected_normals;
    const std::uint64_t seed = config.seed;

    PathOutput out;
    out.x.resize(batch);
    out.y.resize(batch);
    if (!t_fwd) {
        out.numeraire.resize(batch);
        out.num0 = std::exp(0.0);
    }

    for (std::size_t p = 0; p < batch; ++p) {
        const std::size_t bp = p < base ? p : p - base;
        const bool flip = p >= base;
        const auto draw = [&](std::size_t k, std::uint32_t b) {
            double xi = injected
                            ? (*injected)[(k * n_br + b) * base + bp]
                            : sim::keyed_normal(seed, static_cast<std::uint32_t>(bp),
                                                static_cast<std::uint32_t>(k), b);
            return flip ? -xi : xi;
        };

        // t = 0 state, mirroring the script inits and derived assignments.
        double x = 0.0, y = 0.0, lm = 0.0;
        double zv = cir ? seg0.z0 : 0.0;
        double sg = qd ? seg0.vtheta0 : 0.0;
        double rvol = cir ? std::sqrt(pos(zv)) : 0.0;
        double dfwd = benchmark ? f_delta0 + hd * (x + gd * y) : 0.0;
        double vt = volterm_of(setting.lv, seg0, x, f_t10, dfwd);

        if (idx_fix == 0) {
            out.x[p] = x;
            out.y[p] = y;
        }
        if (!t_fwd && idx_pay == 0) out.numeraire[p] = std::exp(lm);

        for (std::size_t k = 0; k < n_steps; ++k) {
            const double t0 = grid.times[k];
            const double t1 = grid.times[k + 1];
            const double dt = t1 - t0;
            const double sqrtdt = std::sqrt(dt);
            const SegView& seg = seg_inc[k];

            const double dW = sqrtdt * draw(k, 0);
            const double dZ = n_br > 1 ? sqrtdt * draw(k, 1) : 0.0;

            // Increments from start-of-step values; no builtin script reads a
            // value updated earlier in the same step except logmma's x, which
            // resolves to the pre-step shadow.
            double dx, dy, dz = 0.0, ds = 0.0;
            if (cir) {
                dx = t_fwd ? (y - mr * x - g_meas[k] * zv * vt * vt) * dt +
                                 rvol * vt * dW
                           : (y - mr * x) * dt + rvol * vt * dW;
                dy = (zv * vt * vt - 2.0 * mr * y) * dt;
                if (!corcir) {
                    dz = seg.theta * (seg.z0 - pos(zv)) * dt + seg.eta * rvol * dZ;
                } else if (t_fwd) {
                    dz = (seg.theta * (seg.z0 - pos(zv)) -
                          g_meas[k] * vt * seg.beta * zv) *
                             dt +
                         seg.beta * rvol * dW + seg.eps * rvol * dZ;
                } else {
                    dz = seg.theta * (seg.z0 - pos(zv)) * dt + seg.beta * rvol * dW +
                         seg.eps * rvol * dZ;
                }
            } else if (qd) {
                dx = t_fwd ? (y - mr * x - g_meas[k] * vt * vt * sg * sg) * dt +
                                 vt * sg * dW
                           : (y - mr * x) * dt + vt * sg * dW;
                dy = (vt * vt * sg * sg - 2.0 * mr * y) * dt;
                ds = t_fwd ? ((seg.kappa1 + seg.kappa2 * sg) * (seg.theta_vol - sg) -
                              g_meas[k] * vt * seg.beta * sg * sg) *
                                 dt +
                             seg.beta * sg * dW + seg.eps * sg * dZ
                           : (seg.kappa1 + seg.kappa2 * sg) * (seg.theta_vol - sg) * dt +
                                 seg.beta * sg * dW + seg.eps * sg * dZ;
            } else {
                dx = t_fwd ? (y - mr * x - g_meas[k] * vt * vt) * dt + vt * dW
                           : (y - mr * x) * dt + vt * dW;
                dy = (vt * vt - 2.0 * mr * y) * dt;
            }
            const double dlm = t_fwd ? 0.0 : (f_disc[k] + x) * dt;

            x = x + dx;
            y = y + dy;
            if (cir) zv = zv + dz;
            if (qd) {
                sg = sg + ds;
                if (sg < 0.0) sg = 0.0;  // numerical safeguard, inactive in practice
            }
            if (!t_fwd) lm = lm + dlm;

            // Assignments at t1 with the upcoming interval's segment.
            const SegView& sega = seg_asn[k];
            if (cir) rvol = std::sqrt(pos(zv));
            if (benchmark) dfwd = f_delta[k] + hd * (x + gd * y);
            vt = volterm_of(setting.lv, sega, x, f_t1.empty() ? 0.0 : f_t1[k], dfwd);

            if (!std::isfinite(x)) non_finite("ratex", k + 1, t1);
            if (!std::isfinite(y)) non_finite("ratey", k + 1, t1);
            if (cir && !std::isfinite(zv)) non_finite("ratevariance", k + 1, t1);
            if (qd && !std::isfinite(sg)) non_finite("sigma", k + 1, t1);
            if (!std::isfinite(vt)) non_finite("volterm", k + 1, t1);
            if (!t_fwd && !std::isfinite(lm)) non_finite("logmma", k + 1, t1);

            if (k + 1 == idx_fix) {
                out.x[p] = x;
                out.y[p] = y;
            }
            if (!t_fwd && k + 1 == idx_pay) out.numeraire[p] = std::exp(lm);
        }
    }
    return out;
}

std::vector<std::vector<double>> caplet_samples(const CapletRun& run,
                                                const PathOutput& paths,
                                                const std::vector<double>& strikes,
                                                double omega) {
    if (!(omega == 1.0 || omega == -1.0))
        throw ValidationError("omega must be +1 or -1");
    const bool t_fwd = run.measure == MeasureKind::TForward;
    const double mr = run.params.lambda;
    const double delta = run.params.delta;
    const double gd = g_script(mr, delta);
    const double poa =
        run.forecasting->df(run.fixing_time) / run.forecasting->df(run.pay_time);
    const std::size_t batch = paths.x.size();

    std::vector<std::vector<double>> out(strikes.size(), std::vector<double>(batch));
    for (std::size_t i = 0; i < strikes.size(); ++i) {
        const double k = strikes[i];
        std::vector<double>& sample = out[i];
        for (std::size_t p = 0; p < batch; ++p) {
            const double e = std::exp(gd * paths.x[p] + 0.5 * gd * gd * paths.y[p]);
            const double d = poa * e - 1.0 - k * delta;
            const double pv = pos(omega * d);
            sample[p] = t_fwd ? pv : paths.num0 * (pv / paths.numeraire[p]);
        }
    }
    return out;
}

std::vector<double> martingale_statistic(const CapletRun& run, const PathOutput& paths) {
    const double gd = g_script(run.params.lambda, run.params.delta);
    std::vector<double> out(paths.x.size());
    for (std::size_t p = 0; p < out.size(); ++p)
        out[p] = std::exp(gd * paths.x[p] + 0.5 * gd * gd * paths.y[p]);
    return out;
}

}  // namespace cheyette::native
