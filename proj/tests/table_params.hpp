#pragma once

#include "cheyette/models.hpp"
#include "cheyette/pricing.hpp"

namespace cheyette::testing {

// Published calibrated parameter vector for a setting, with ATM-relative
// knots resolved for the piecewise-linear local vol.
inline ModelParams published_params(const ModelSetting& setting, double atm_strike) {
    const SettingFixture& f = fixture_for(setting);
    ModelParams p = f.fixed_params;
    if (setting.lv == LocalVolForm::PwLinBRLV) {
        p.lv.knots = default_knots(atm_strike);
        p.lv.levels.assign(p.lv.knots.size(), 0.0);
    }
    for (const auto& [name, value] : f.calibrated)
        set_free_param(setting, p, name, value);
    return p;
}

}  // namespace cheyette::testing
