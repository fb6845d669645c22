#include "cheyette/models.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cheyette/errors.hpp"

namespace cheyette {

using nlohmann::json;

std::string to_string(LocalVolForm f) {
    switch (f) {
        case LocalVolForm::LinSRLV: return "LinSRLV";
        case LocalVolForm::LinBRLV: return "LinBRLV";
        case LocalVolForm::LinXLV: return "LinXLV";
        case LocalVolForm::PwLinBRLV: return "PwLinBRLV";
    }
    throw ValidationError("bad LocalVolForm");
}

std::string to_string(SVForm f) {
    switch (f) {
        case SVForm::NoSV: return "NoSV";
        case SVForm::CIRSV: return "CIRSV";
        case SVForm::CorCIRSV: return "CorCIRSV";
        case SVForm::QDLNSV: return "QDLNSV";
    }
    throw ValidationError("bad SVForm");
}

std::string to_string(const ModelSetting& s) {
    if (s.sv == SVForm::NoSV) return to_string(s.lv);
    return to_string(s.lv) + "+" + to_string(s.sv);
}

ModelSetting setting_from_string(const std::string& text) {
    std::string lv = text, sv = "NoSV";
    if (auto plus = text.find('+'); plus != std::string::npos) {
        lv = text.substr(0, plus);
        sv = text.substr(plus + 1);
    }
    ModelSetting s{};
    if (lv == "LinSRLV") s.lv = LocalVolForm::LinSRLV;
    else if (lv == "LinBRLV") s.lv = LocalVolForm::LinBRLV;
    else if (lv == "LinXLV") s.lv = LocalVolForm::LinXLV;
    else if (lv == "PwLinBRLV") s.lv = LocalVolForm::PwLinBRLV;
    else throw ValidationError("unknown local-vol form '" + lv + "'");
    if (sv == "NoSV") s.sv = SVForm::NoSV;
    else if (sv == "CIRSV") s.sv = SVForm::CIRSV;
    else if (sv == "CorCIRSV") s.sv = SVForm::CorCIRSV;
    else if (sv == "QDLNSV") s.sv = SVForm::QDLNSV;
    else throw ValidationError("unknown SV form '" + sv + "'");
    return s;
}

const std::vector<ModelSetting>& settings_catalog() {
    static const std::vector<ModelSetting> catalog = {
        {LocalVolForm::LinBRLV, SVForm::CIRSV},
        {LocalVolForm::LinBRLV, SVForm::NoSV},
        {LocalVolForm::LinBRLV, SVForm::CorCIRSV},
        {LocalVolForm::PwLinBRLV, SVForm::CIRSV},
        {LocalVolForm::LinSRLV, SVForm::CIRSV},
        {LocalVolForm::LinXLV, SVForm::QDLNSV},
        {LocalVolForm::LinBRLV, SVForm::QDLNSV},
        {LocalVolForm::LinSRLV, SVForm::QDLNSV},
    };
    return catalog;
}

double CorCirSvParams::eps() const { return std::sqrt(1.0 - rho * rho) * eta; }

Measure Measure::t_forward(double meas_t) {
    if (!(meas_t > 0.0)) throw ValidationError("TForward measure horizon must be > 0");
    return {MeasureKind::TForward, meas_t};
}

void validate_params(const ModelSetting& setting, const ModelParams& params,
                     bool enforce_feller) {
    if (!(params.lambda > 0.0)) throw ValidationError("lambda must be > 0");
    if (!(params.delta > 0.0)) throw ValidationError("delta must be > 0");
    if (setting.lv == LocalVolForm::PwLinBRLV) {
        const auto& k = params.lv.knots;
        const auto& a = params.lv.levels;
        if (k.size() < 2) throw ValidationError("PwLinBRLV needs at least 2 knots");
        if (a.size() != k.size())
            throw ValidationError("PwLinBRLV needs one level per knot");
        for (std::size_t i = 1; i < k.size(); ++i)
            if (!(k[i] > k[i - 1]))
                throw ValidationError("PwLinBRLV knots must be strictly increasing");
        for (double ai : a)
            if (!(ai >= 0.0)) throw ValidationError("PwLinBRLV levels must be >= 0");
    }
    const auto check_cir = [&](double theta, double eta, double z0, double rho) {
        if (!(theta > 0.0)) throw ValidationError("CIR theta must be > 0");
        if (!(z0 > 0.0)) throw ValidationError("CIR z0 must be > 0");
        if (!(eta >= 0.0)) throw ValidationError("CIR eta must be >= 0");
        if (!(rho > -1.0 && rho < 1.0)) throw ValidationError("rho must be in (-1, 1)");
        if (enforce_feller && eta > feller_max_eta(theta, z0))
            throw ValidationError("Feller condition violated: eta^2 > 2 theta z0");
    };
    switch (setting.sv) {
        case SVForm::NoSV:
            if (!std::holds_alternative<NoSvParams>(params.sv))
                throw ValidationError("setting expects no SV parameters");
            break;
        case SVForm::CIRSV: {
            const auto* p = std::get_if<CirSvParams>(&params.sv);
            if (!p) throw ValidationError("setting expects CIR SV parameters");
            check_cir(p->theta, p->eta, p->z0, 0.0);
            break;
        }
        case SVForm::CorCIRSV: {
            const auto* p = std::get_if<CorCirSvParams>(&params.sv);
            if (!p) throw ValidationError("setting expects correlated CIR SV parameters");
            check_cir(p->theta, p->eta, p->z0, p->rho);
            break;
        }
        case SVForm::QDLNSV: {
            const auto* p = std::get_if<QdlnSvParams>(&params.sv);
            if (!p) throw ValidationError("setting expects QDLNSV parameters");
            if (!(p->theta_vol > 0.0)) throw ValidationError("theta_vol must be > 0");
            if (!(p->vtheta0 > 0.0)) throw ValidationError("vtheta0 must be > 0");
            break;
        }
    }
}

double piecewise_linear(const std::vector<double>& knots,
                        const std::vector<double>& levels, double f) {
    const std::size_t n = knots.size();
    if (f <= knots.front()) return levels.front();
    if (f >= knots.back()) return levels.back();
    std::size_t i = 0;
    while (i + 2 < n && f >= knots[i + 1]) ++i;
    const double slope = (levels[i + 1] - levels[i]) / (knots[i + 1] - knots[i]);
    return levels[i] + slope * (f - knots[i]);
}

double local_vol(const ModelSetting& setting, const ModelParams& params,
                 double t, double x, double y, const CurveContext& ctx) {
    switch (setting.lv) {
        case LocalVolForm::LinXLV:
            return params.lv.a + params.lv.b * x;
        case LocalVolForm::LinSRLV:
            return params.lv.a +
                   params.lv.b * (ctx.forecasting->inst_forward(t) + x);
        case LocalVolForm::LinBRLV:
            return params.lv.a +
                   params.lv.b * benchmark_forward(*ctx.forecasting, params.lambda, t,
                                                   params.delta, x, y);
        case LocalVolForm::PwLinBRLV:
            return piecewise_linear(params.lv.knots, params.lv.levels,
                                    benchmark_forward(*ctx.forecasting, params.lambda,
                                                      t, params.delta, x, y));
    }
    throw ValidationError("bad LocalVolForm");
}

SvStepTerms sv_step_terms(const ModelSetting& setting, const ModelParams& params,
                          const Measure& measure, double t, double sv_state,
                          double localvol_value) {
    const bool t_fwd = measure.kind == MeasureKind::TForward;
    const double g_meas =
        t_fwd ? g_fn(params.lambda, measure.horizon - t) : 0.0;
    switch (setting.sv) {
        case SVForm::NoSV:
            return {0.0, 0.0, 0.0};
        case SVForm::CIRSV: {
            const auto& p = std::get<CirSvParams>(params.sv);
            const double zp = sv_state > 0.0 ? sv_state : 0.0;
            return {p.theta * (p.z0 - zp), 0.0, p.eta * std::sqrt(zp)};
        }
        case SVForm::CorCIRSV: {
            const auto& p = std::get<CorCirSvParams>(params.sv);
            const double zp = sv_state > 0.0 ? sv_state : 0.0;
            const double root = std::sqrt(zp);
            double drift = p.theta * (p.z0 - zp);
            if (t_fwd) drift -= g_meas * localvol_value * p.beta() * sv_state;
            return {drift, p.beta() * root, p.eps() * root};
        }
        case SVForm::QDLNSV: {
            const auto& p = std::get<QdlnSvParams>(params.sv);
            double drift = (p.kappa1 + p.kappa2 * sv_state) * (p.theta_vol - sv_state);
            if (t_fwd)
                drift -= g_meas * localvol_value * p.beta * sv_state * sv_state;
            return {drift, p.beta * sv_state, p.eps * sv_state};
        }
    }
    throw ValidationError("bad SVForm");
}

double cheyette_drift(const Measure& measure, double lambda, double x, double y,
                      double sigma_total, double t) {
    double drift = y - lambda * x;
    if (measure.kind == MeasureKind::TForward)
        drift -= g_fn(lambda, measure.horizon - t) * sigma_total * sigma_total;
    return drift;
}

double feller_max_eta(double theta, double z0) {
    if (theta < 0.0 || z0 < 0.0)
        throw ValidationError("feller_max_eta requires theta, z0 >= 0");
    return std::sqrt(2.0 * theta * z0);
}

double total_vol(const ModelSetting& setting, double localvol_value, double sv_state) {
    switch (setting.sv) {
        case SVForm::NoSV: return localvol_value;
        case SVForm::CIRSV:
        case SVForm::CorCIRSV:
            return localvol_value * std::sqrt(sv_state > 0.0 ? sv_state : 0.0);
        case SVForm::QDLNSV: return localvol_value * sv_state;
    }
    throw ValidationError("bad SVForm");
}

namespace {

std::string pwlin_defs(std::size_t n) {
    std::ostringstream out;
    out << "sigmaFun1(x) = a1*oneslike(x) if x < K1*oneslike(x) else zeroslike(x)\n";
    for (std::size_t i = 1; i + 1 <= n - 1; ++i) {
        out << "sigmaFun" << i + 1 << "(x) = a" << i << " + ((a" << i + 1 << " - a" << i
            << ")/(K" << i + 1 << " - K" << i << "))*(x - K" << i << "*oneslike(x))"
            << " if x >= K" << i << "*oneslike(x) and x < K" << i + 1
            << "*oneslike(x) else zeroslike(x)\n";
    }
    out << "sigmaFun" << n + 1 << "(x) = a" << n << "*oneslike(x) if x >= K" << n
        << "*oneslike(x) else zeroslike(x)\n";
    return out.str();
}

std::string pwlin_volterm(std::size_t n) {
    std::ostringstream out;
    out << "volterm = sigmaFun1(deltafwd)";
    for (std::size_t i = 2; i <= n + 1; ++i) out << " + sigmaFun" << i << "(deltafwd)";
    out << "\n";
    return out.str();
}

}  // namespace

std::string builtin_script(const ModelSetting& setting, MeasureKind measure) {
    bool known = false;
    for (const auto& s : settings_catalog()) known = known || s == setting;
    if (!known)
        throw ValidationError("no builtin script for setting " + to_string(setting));

    const bool t_fwd = measure == MeasureKind::TForward;
    const bool cir = setting.sv == SVForm::CIRSV || setting.sv == SVForm::CorCIRSV;
    const bool qd = setting.sv == SVForm::QDLNSV;
    const bool benchmark =
        setting.lv == LocalVolForm::LinBRLV || setting.lv == LocalVolForm::PwLinBRLV;
    constexpr std::size_t n_knots = 3;

    std::ostringstream out;
    out << "# function definition\n";
    out << "g(x) = (1/mr)*(oneslike(x)-exp(-mr*x))\n";
    if (benchmark) out << "h(x) = exp(-mr*x)\n";
    if (setting.lv == LocalVolForm::PwLinBRLV) out << pwlin_defs(n_knots);

    out << "\n#system\n";
    if (cir) {
        if (t_fwd)
            out << "d_ratex = (ratey-mr*ratex-g(measT-t)*ratevariance*volterm*volterm)"
                   "*d_t+ratevolatility*volterm*d_W\n";
        else
            out << "d_ratex = (ratey-mr*ratex)*d_t+ratevolatility*volterm*d_W\n";
        out << "d_ratey = (ratevariance*volterm*volterm-2.0*mr*ratey)*d_t\n";
        if (setting.sv == SVForm::CIRSV) {
            out << "d_ratevariance = theta*(oneslike(ratevariance) - "
                   "positivepart(ratevariance))*d_t + volofvar*ratevolatility*d_Z\n";
        } else if (t_fwd) {
            out << "d_ratevariance = (theta*(oneslike(ratevariance) - "
                   "positivepart(ratevariance)) - g(measT-t)*volterm*beta*ratevariance)"
                   "*d_t + beta*ratevolatility*d_W + eps*ratevolatility*d_Z\n";
        } else {
            out << "d_ratevariance = theta*(oneslike(ratevariance) - "
                   "positivepart(ratevariance))*d_t + beta*ratevolatility*d_W + "
                   "eps*ratevolatility*d_Z\n";
        }
    } else if (qd) {
        if (t_fwd)
            out << "d_ratex = (ratey - mr*ratex - g(measT-t)*volterm*volterm*sigma*sigma)"
                   "*d_t + volterm*sigma*d_W\n";
        else
            out << "d_ratex = (ratey - mr*ratex)*d_t + volterm*sigma*d_W\n";
        out << "d_ratey = (volterm*volterm*sigma*sigma - 2.0*mr*ratey)*d_t\n";
        if (t_fwd)
            out << "d_sigma = ((kappa1 + kappa2*sigma)*(1.0 - sigma) - "
                   "g(measT-t)*volterm*beta*sigma*sigma)*d_t + beta*sigma*d_W + "
                   "eps*sigma*d_Z\n";
        else
            out << "d_sigma = (kappa1 + kappa2*sigma)*(1.0 - sigma)*d_t + "
                   "beta*sigma*d_W + eps*sigma*d_Z\n";
    } else {
        if (t_fwd)
            out << "d_ratex = (ratey-mr*ratex-g(measT-t)*volterm*volterm)*d_t"
                   "+volterm*d_W\n";
        else
            out << "d_ratex = (ratey-mr*ratex)*d_t+volterm*d_W\n";
        out << "d_ratey = (volterm*volterm-2.0*mr*ratey)*d_t\n";
    }
    if (!t_fwd) out << "d_logmma = (discfwd(t) + ratex)*d_t\n";

    if (cir) out << "ratevolatility = sqrt(positivepart(ratevariance))\n";
    if (benchmark)
        out << "deltafwd = initfwd(t + delta) + h(delta)*(ratex + g(delta)*ratey)\n";
    switch (setting.lv) {
        case LocalVolForm::LinXLV: out << "volterm = a + b*ratex\n"; break;
        case LocalVolForm::LinSRLV: out << "volterm = a + b*(initfwd(t) + ratex)\n"; break;
        case LocalVolForm::LinBRLV: out << "volterm = a + b*deltafwd\n"; break;
        case LocalVolForm::PwLinBRLV: out << pwlin_volterm(n_knots); break;
    }
    if (!t_fwd) out << "mma = exp(logmma)\n";

    if (qd) out << "\n#correlations\nd_W*d_Z = rho\n";

    out << "\n#initial values\n";
    out << "init: ratex = zeros([batchsize])\n";
    out << "init: ratey = zeros([batchsize])\n";
    if (cir) out << "init: ratevariance = ones([batchsize])\n";
    if (qd) out << "init: sigma = ones([batchsize])\n";
    if (!t_fwd) out << "init: logmma = zeros([batchsize])\n";

    out << "\n#payoffs\n";
    const char* obs = t_fwd ? "t" : "fixingtime";
    const char* pay_list = t_fwd ? "maturity" : "paytime";
    out << "for (t,k) in ([" << pay_list << "]*len(strikes),strikes): "
        << "\"calloption_strike_%f\"%k pays (positivepart(poa*exp(g(delta)*ratex[" << obs
        << "] + 0.5*g(delta)*g(delta)*ratey[" << obs << "]) - 1 - k*delta)) "
        << (t_fwd ? "nodiscount" : "numeraire mma") << "\n";
    return out.str();
}

std::vector<double> default_knots(double atm_strike) {
    if (!(atm_strike > 0.0))
        throw ValidationError("default_knots requires a positive ATM strike");
    return {0.95 * atm_strike, atm_strike, 1.05 * atm_strike};
}

namespace {

std::vector<SettingFixture> make_fixtures() {
    std::vector<SettingFixture> out;
    const auto cir_fixed = [] {
        ModelParams p;
        p.lambda = 0.03;
        p.sv = CirSvParams{0.2, 0.0, 1.0};
        return p;
    };
    const auto qd_fixed = [] {
        ModelParams p;
        p.lambda = 0.025;
        p.sv = QdlnSvParams{0.25, 0.25, 1.0, 0.0, 0.0, 1.0};
        return p;
    };
    const std::vector<ParamBound> lin_cir_bounds = {
        {"a", 0.0001, 0.015}, {"b", -0.5, 0.5}, {"eta", 0.1, 0.63}};
    const std::vector<ParamBound> qd_bounds = {
        {"a", -0.1, 0.1}, {"b", -0.1, 0.1}, {"beta", -0.1, 0.1}, {"eps", 0.1, 1.0}};

    {
        SettingFixture f;
        f.setting = {LocalVolForm::LinBRLV, SVForm::CIRSV};
        f.fixed_params = cir_fixed();
        f.bounds = lin_cir_bounds;
        f.calibrated = {{"a", 0.00832}, {"b", -0.19208}, {"eta", 0.56724}};
        f.good_fit = false;
        out.push_back(f);
    }
    {
        SettingFixture f;
        f.setting = {LocalVolForm::LinBRLV, SVForm::NoSV};
        f.fixed_params.lambda = 0.03;
        f.fixed_params.sv = NoSvParams{};
        f.bounds = {{"a", 0.0001, 0.015}, {"b", -0.5, 0.5}};
        f.calibrated = {{"a", 0.00762}, {"b", -0.15945}};
        f.good_fit = false;
        out.push_back(f);
    }
    {
        SettingFixture f;
        f.setting = {LocalVolForm::LinBRLV, SVForm::CorCIRSV};
        f.fixed_params.lambda = 0.03;
        f.fixed_params.sv = CorCirSvParams{0.2, 0.0, 0.0, 1.0};
        f.bounds = {{"a", -0.1, 0.1}, {"b", -0.1, 0.1}, {"eta", 0.1, 0.63},
                    {"rho", -0.9, 0.9}};
        f.calibrated = {{"a", 0.00679}, {"b", -0.09999}, {"rho", -0.46437},
                        {"eta", 0.31777}};
        f.good_fit = false;
        out.push_back(f);
    }
    {
        SettingFixture f;
        f.setting = {LocalVolForm::PwLinBRLV, SVForm::CIRSV};
        f.fixed_params = cir_fixed();
        f.bounds = {{"a1", 1e-6, 0.5}, {"a2", 1e-6, 0.5}, {"a3", 1e-6, 0.5},
                    {"eta", 0.1, 0.63}};
        f.calibrated = {{"a1", 0.00615}, {"a2", 0.00361}, {"a3", 0.00511},
                        {"eta", 0.62762}};
        f.good_fit = true;
        out.push_back(f);
    }
    {
        SettingFixture f;
        f.setting = {LocalVolForm::LinSRLV, SVForm::CIRSV};
        f.fixed_params = cir_fixed();
        f.bounds = lin_cir_bounds;
        f.calibrated = {{"a", 0.00766}, {"b", -0.15588}, {"eta", 0.34177}};
        f.good_fit = false;
        out.push_back(f);
    }
    {
        SettingFixture f;
        f.setting = {LocalVolForm::LinXLV, SVForm::QDLNSV};
        f.fixed_params = qd_fixed();
        f.bounds = qd_bounds;
        f.calibrated = {{"a", -0.00522}, {"b", 0.08982}, {"beta", 0.09999},
                        {"eps", 0.55189}};
        f.good_fit = true;
        out.push_back(f);
    }
    {
        SettingFixture f;
        f.setting = {LocalVolForm::LinBRLV, SVForm::QDLNSV};
        f.fixed_params = qd_fixed();
        f.bounds = qd_bounds;
        f.calibrated = {{"a", -0.00665}, {"b", 0.09999}, {"beta", 0.09999},
                        {"eps", 0.60884}};
        f.good_fit = true;
        out.push_back(f);
    }
    {
        SettingFixture f;
        f.setting = {LocalVolForm::LinSRLV, SVForm::QDLNSV};
        f.fixed_params = qd_fixed();
        f.bounds = qd_bounds;
        f.calibrated = {{"a", -0.00674}, {"b", 0.09999}, {"beta", 0.09999},
                        {"eps", 0.62731}};
        f.good_fit = false;
        out.push_back(f);
    }
    return out;
}

}  // namespace

const std::vector<SettingFixture>& table_fixtures() {
    static const std::vector<SettingFixture> fixtures = make_fixtures();
    return fixtures;
}

const SettingFixture& fixture_for(const ModelSetting& setting) {
    for (const auto& f : table_fixtures())
        if (f.setting == setting) return f;
    throw ValidationError("no fixture for setting " + to_string(setting));
}

std::vector<std::string> free_param_names(const ModelSetting& setting) {
    std::vector<std::string> names;
    if (setting.lv == LocalVolForm::PwLinBRLV) {
        const auto& f = fixture_for(setting);
        for (const auto& b : f.bounds)
            if (b.name != "eta" && b.name != "rho") names.push_back(b.name);
    } else {
        names = {"a", "b"};
    }
    switch (setting.sv) {
        case SVForm::NoSV: break;
        case SVForm::CIRSV: names.push_back("eta"); break;
        case SVForm::CorCIRSV: names.insert(names.end(), {"eta", "rho"}); break;
        case SVForm::QDLNSV: names.insert(names.end(), {"beta", "eps"}); break;
    }
    return names;
}

void set_free_param(const ModelSetting& setting, ModelParams& params,
                    const std::string& name, double value) {
    if (name == "a" && setting.lv != LocalVolForm::PwLinBRLV) {
        params.lv.a = value;
        return;
    }
    if (name == "b" && setting.lv != LocalVolForm::PwLinBRLV) {
        params.lv.b = value;
        return;
    }
    if (name.size() >= 2 && name[0] == 'a' && setting.lv == LocalVolForm::PwLinBRLV) {
        const std::size_t i = std::stoul(name.substr(1));
        if (i >= 1 && i <= params.lv.levels.size()) {
            params.lv.levels[i - 1] = value;
            return;
        }
    }
    if (name == "eta") {
        if (auto* p = std::get_if<CirSvParams>(&params.sv)) { p->eta = value; return; }
        if (auto* p = std::get_if<CorCirSvParams>(&params.sv)) { p->eta = value; return; }
    }
    if (name == "rho") {
        if (auto* p = std::get_if<CorCirSvParams>(&params.sv)) { p->rho = value; return; }
    }
    if (name == "beta") {
        if (auto* p = std::get_if<QdlnSvParams>(&params.sv)) { p->beta = value; return; }
    }
    if (name == "eps") {
        if (auto* p = std::get_if<QdlnSvParams>(&params.sv)) { p->eps = value; return; }
    }
    throw ValidationError("unknown free parameter '" + name + "' for setting " +
                          to_string(setting));
}

double get_free_param(const ModelSetting& setting, const ModelParams& params,
                      const std::string& name) {
    if (name == "a" && setting.lv != LocalVolForm::PwLinBRLV) return params.lv.a;
    if (name == "b" && setting.lv != LocalVolForm::PwLinBRLV) return params.lv.b;
    if (name.size() >= 2 && name[0] == 'a' && setting.lv == LocalVolForm::PwLinBRLV) {
        const std::size_t i = std::stoul(name.substr(1));
        if (i >= 1 && i <= params.lv.levels.size()) return params.lv.levels[i - 1];
    }
    if (name == "eta") {
        if (const auto* p = std::get_if<CirSvParams>(&params.sv)) return p->eta;
        if (const auto* p = std::get_if<CorCirSvParams>(&params.sv)) return p->eta;
    }
    if (name == "rho")
        if (const auto* p = std::get_if<CorCirSvParams>(&params.sv)) return p->rho;
    if (name == "beta")
        if (const auto* p = std::get_if<QdlnSvParams>(&params.sv)) return p->beta;
    if (name == "eps")
        if (const auto* p = std::get_if<QdlnSvParams>(&params.sv)) return p->eps;
    throw ValidationError("unknown free parameter '" + name + "' for setting " +
                          to_string(setting));
}

json params_to_json(const ModelSetting& setting, const ModelParams& params) {
    json j;
    j["setting"] = to_string(setting);
    j["lambda"] = params.lambda;
    j["delta"] = params.delta;
    if (setting.lv == LocalVolForm::PwLinBRLV)
        j["localvol"] = {{"knots", params.lv.knots}, {"levels", params.lv.levels}};
    else
        j["localvol"] = {{"a", params.lv.a}, {"b", params.lv.b}};
    switch (setting.sv) {
        case SVForm::NoSV:
            j["sv"] = {{"type", "NoSV"}};
            break;
        case SVForm::CIRSV: {
            const auto& p = std::get<CirSvParams>(params.sv);
            j["sv"] = {{"type", "CIRSV"}, {"theta", p.theta}, {"eta", p.eta}, {"z0", p.z0}};
            break;
        }
        case SVForm::CorCIRSV: {
            const auto& p = std::get<CorCirSvParams>(params.sv);
            j["sv"] = {{"type", "CorCIRSV"}, {"theta", p.theta}, {"eta", p.eta},
                       {"rho", p.rho}, {"z0", p.z0}};
            break;
        }
        case SVForm::QDLNSV: {
            const auto& p = std::get<QdlnSvParams>(params.sv);
            j["sv"] = {{"type", "QDLNSV"}, {"kappa1", p.kappa1}, {"kappa2", p.kappa2},
                       {"theta_vol", p.theta_vol}, {"beta", p.beta}, {"eps", p.eps},
                       {"vtheta0", p.vtheta0}};
            break;
        }
    }
    return j;
}

std::pair<ModelSetting, ModelParams> params_from_json(const json& j) {
    try {
        const ModelSetting setting = setting_from_string(j.at("setting").get<std::string>());
        ModelParams params;
        params.lambda = j.at("lambda").get<double>();
        params.delta = j.value("delta", 0.25);
        const json& lv = j.at("localvol");
        if (setting.lv == LocalVolForm::PwLinBRLV) {
            params.lv.knots = lv.at("knots").get<std::vector<double>>();
            params.lv.levels = lv.at("levels").get<std::vector<double>>();
        } else {
            params.lv.a = lv.at("a").get<double>();
            params.lv.b = lv.value("b", 0.0);
        }
        const json& sv = j.at("sv");
        const std::string type = sv.at("type").get<std::string>();
        if (type == "NoSV") {
            params.sv = NoSvParams{};
        } else if (type == "CIRSV") {
            params.sv = CirSvParams{sv.value("theta", 0.2), sv.at("eta").get<double>(),
                                    sv.value("z0", 1.0)};
        } else if (type == "CorCIRSV") {
            params.sv = CorCirSvParams{sv.value("theta", 0.2), sv.at("eta").get<double>(),
                                       sv.value("rho", 0.0), sv.value("z0", 1.0)};
        } else if (type == "QDLNSV") {
            params.sv = QdlnSvParams{sv.value("kappa1", 0.25), sv.value("kappa2", 0.25),
                                     sv.value("theta_vol", 1.0), sv.at("beta").get<double>(),
                                     sv.at("eps").get<double>(), sv.value("vtheta0", 1.0)};
        } else {
            throw ValidationError("unknown sv type '" + type + "'");
        }
        if (to_string(setting.sv) != type)
            throw ValidationError("sv type " + type + " does not match setting " +
                                  to_string(setting));
        validate_params(setting, params, false);
        return {setting, params};
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad model parameter JSON: ") + e.what());
    }
}

json tables_config() {
    json sections = json::array();
    for (const auto& f : table_fixtures()) {
        json fixed = {{"lambda", f.fixed_params.lambda}};
        if (const auto* p = std::get_if<CirSvParams>(&f.fixed_params.sv)) {
            fixed["theta"] = p->theta;
            fixed["z0"] = p->z0;
        } else if (const auto* p = std::get_if<CorCirSvParams>(&f.fixed_params.sv)) {
            fixed["theta"] = p->theta;
            fixed["z0"] = p->z0;
        } else if (const auto* p = std::get_if<QdlnSvParams>(&f.fixed_params.sv)) {
            fixed["kappa1"] = p->kappa1;
            fixed["kappa2"] = p->kappa2;
            fixed["theta_vol"] = p->theta_vol;
            fixed["vtheta0"] = p->vtheta0;
        }
        if (f.setting.lv == LocalVolForm::PwLinBRLV)
            fixed["knots"] = "0.95*ATM, ATM, 1.05*ATM";
        json bounds = json::object();
        for (const auto& b : f.bounds) bounds[b.name] = {b.lower, b.upper};
        json calibrated = json::object();
        for (const auto& [name, value] : f.calibrated) calibrated[name] = value;
        sections.push_back({{"setting", to_string(f.setting)},
                            {"fixed", fixed},
                            {"bounds", bounds},
                            {"calibrated", calibrated},
                            {"good_fit", f.good_fit}});
    }
    return {{"settings", sections}};
}

}  // namespace cheyette
