#pragma once

#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cheyette/curves.hpp"

namespace cheyette {

enum class LocalVolForm { LinSRLV, LinBRLV, LinXLV, PwLinBRLV };
enum class SVForm { NoSV, CIRSV, CorCIRSV, QDLNSV };

struct ModelSetting {
    LocalVolForm lv;
    SVForm sv;
    bool operator==(const ModelSetting&) const = default;
};

std::string to_string(LocalVolForm f);
std::string to_string(SVForm f);
std::string to_string(const ModelSetting& s);  // e.g. "LinXLV+QDLNSV", "LinBRLV"
ModelSetting setting_from_string(const std::string& text);

/// The eight settings studied, in table order.
const std::vector<ModelSetting>& settings_catalog();

struct LocalVolParams {
    double a = 0.0;
    double b = 0.0;
    // PwLinBRLV only: strictly increasing knots K_i with levels a_i >= 0.
    std::vector<double> knots;
    std::vector<double> levels;
};

struct NoSvParams {};

struct CirSvParams {
    double theta = 0.2;
    double eta = 0.0;
    double z0 = 1.0;
};

struct CorCirSvParams {
    double theta = 0.2;
    double eta = 0.0;
    double rho = 0.0;
    double z0 = 1.0;
    // Correlation enters through the decomposition onto independent W, Z.
    double beta() const { return rho * eta; }
    double eps() const;
};

struct QdlnSvParams {
    double kappa1 = 0.25;
    double kappa2 = 0.25;
    double theta_vol = 1.0;
    double beta = 0.0;
    double eps = 0.0;
    double vtheta0 = 1.0;
};

using SvParams = std::variant<NoSvParams, CirSvParams, CorCirSvParams, QdlnSvParams>;

struct ModelParams {
    double lambda = 0.03;
    double delta = 0.25;  // benchmark tenor
    LocalVolParams lv;
    SvParams sv;
};

/// Checks the ModelParams invariants for the given setting; with
/// enforce_feller, CIR variants must satisfy 2 theta z0 >= eta^2.
void validate_params(const ModelSetting& setting, const ModelParams& params,
                     bool enforce_feller);

enum class MeasureKind { RiskNeutral, TForward };

struct Measure {
    MeasureKind kind = MeasureKind::TForward;
    double horizon = 0.0;  // measT, used under TForward only

    static Measure risk_neutral() { return {MeasureKind::RiskNeutral, 0.0}; }
    static Measure t_forward(double meas_t);
};

struct CurveContext {
    const Curve* forecasting = nullptr;
    const Curve* discounting = nullptr;
};

/// sigma(t, x, y) for the setting's local-vol form. PwLinBRLV is continuous,
/// flat at a_1 below K_1 and at a_n above K_n.
double local_vol(const ModelSetting& setting, const ModelParams& params,
                 double t, double x, double y, const CurveContext& ctx);

/// Flat-extrapolated piecewise-linear interpolation through (knots, levels).
double piecewise_linear(const std::vector<double>& knots,
                        const std::vector<double>& levels, double f);

struct SvStepTerms {
    double drift;
    double diff_dw;  // loading on the rate Brownian W
    double diff_dz;  // loading on the independent Brownian Z
};

/// Euler coefficients for the SV state (z for CIR variants, vtheta for
/// QDLNSV). CIRSV is measure independent; CorCIRSV and QDLNSV gain the
/// -G(T-t) sigma beta drift under the T-forward measure. Negative variance is
/// handled by full truncation, never an error.
SvStepTerms sv_step_terms(const ModelSetting& setting, const ModelParams& params,
                          const Measure& measure, double t, double sv_state,
                          double localvol_value);

/// Drift of x: risk-neutral y - lambda x; T-forward subtracts
/// G(T-t) sigma_total^2 with sigma_total = sigma(t,x,y) * vtheta.
double cheyette_drift(const Measure& measure, double lambda, double x, double y,
                      double sigma_total, double t);

/// Largest vol-of-variance keeping the Feller condition: sqrt(2 theta z0).
double feller_max_eta(double theta, double z0);

/// sigma(t,x,y) * vtheta(state) for the setting, the total diffusion scale.
double total_vol(const ModelSetting& setting, double localvol_value, double sv_state);

/// DSL script implementing the setting's caplet simulation, structurally
/// matching the published example scripts. Fixed at the table defaults
/// z0 = theta_vol = vtheta0 = 1; QDLNSV scripts declare the d_W*d_Z = rho
/// correlation (bind rho = 0 for the independent-Brownian default).
std::string builtin_script(const ModelSetting& setting, MeasureKind measure);

/// Default PwLinBRLV knots around the at-the-money forward.
std::vector<double> default_knots(double atm_strike);

struct ParamBound {
    std::string name;
    double lower;
    double upper;
};

struct SettingFixture {
    ModelSetting setting;
    ModelParams fixed_params;                                  // table of fixed parameters
    std::vector<ParamBound> bounds;                            // calibration boxes
    std::vector<std::pair<std::string, double>> calibrated;    // published calibration
    bool good_fit;
};

/// Shipped defaults for the eight settings (fixed parameters, calibration
/// bounds, published calibrated vectors). PwLinBRLV knots are left empty here
/// because they are ATM-relative; resolve them with default_knots.
const std::vector<SettingFixture>& table_fixtures();
const SettingFixture& fixture_for(const ModelSetting& setting);

/// Ordered free-parameter names per setting, matching the bounds tables.
std::vector<std::string> free_param_names(const ModelSetting& setting);

/// Named access to a free parameter ("a", "b", "a1".."an", "eta", "rho",
/// "beta", "eps") inside ModelParams.
void set_free_param(const ModelSetting& setting, ModelParams& params,
                    const std::string& name, double value);
double get_free_param(const ModelSetting& setting, const ModelParams& params,
                      const std::string& name);

/// JSON round trip for (setting, params); schema documented in the README.
nlohmann::json params_to_json(const ModelSetting& setting, const ModelParams& params);
std::pair<ModelSetting, ModelParams> params_from_json(const nlohmann::json& j);

/// One section per setting with fixed parameters, bounds, and the published
/// calibrated vector; mirrors the shipped data/model_settings.json.
nlohmann::json tables_config();

}  // namespace cheyette
