#pragma once

#include <cstdint>
#include <vector>

#include "cheyette/curves.hpp"
#include "cheyette/models.hpp"
#include "cheyette/sim/grid.hpp"

namespace cheyette::native {

struct PathConfig {
    std::size_t batch = std::size_t{1} << 16;
    std::uint64_t seed = 0;
    bool antithetic = false;  // batch must be even; pairwise negated draws
    double dt_max = sim::kDefaultDtMax;
    // Optional raw normals, engine layout [step][brownian][base path].
    const std::vector<double>* injected_normals = nullptr;
};

// Piecewise-constant-in-time parameters: segment params apply on
// [previous t_end, t_end). lambda and delta stay those of the base run.
struct ScheduleSegment {
    double t_end;
    ModelParams params;
};

// One caplet-style simulation: x, y (and the stochastic-vol state) stepped to
// fixing_time; under the risk-neutral measure the money-market account is
// stepped further to pay_time. Mirrors the builtin scripts' host bindings.
struct CapletRun {
    ModelSetting setting;
    ModelParams params;
    MeasureKind measure = MeasureKind::TForward;
    double fixing_time = 0.0;  // T1
    double pay_time = 0.0;     // T2; risk-neutral grid extends here
    double meas_t = 0.0;       // T-forward horizon (T2)
    const Curve* forecasting = nullptr;
    const Curve* discounting = nullptr;  // risk-neutral only
    std::vector<ScheduleSegment> schedule;  // empty: params everywhere
};

struct PathOutput {
    std::vector<double> x;  // at fixing_time
    std::vector<double> y;
    // Risk-neutral: simulated money-market numeraire at pay_time and its t=0
    // value (exp(0)). Empty/1 under the T-forward measure.
    std::vector<double> numeraire;
    double num0 = 1.0;
};

// Hand-coded Euler stepper reproducing the builtin script for the setting
// bit for bit given identical draws (the DSL-vs-native equivalence property).
// Throws RuntimeError when state turns non-finite, as the interpreter does.
PathOutput simulate_paths(const CapletRun& run, const PathConfig& config);

// Undiscounted-mode payoff samples per strike on the shared paths:
// pos(omega * (poa * exp(G(delta) x + G(delta)^2/2 y) - 1 - K delta)), times
// num0/numeraire under the risk-neutral measure. omega +1 caplet, -1 floorlet.
std::vector<std::vector<double>> caplet_samples(const CapletRun& run,
                                                const PathOutput& paths,
                                                const std::vector<double>& strikes,
                                                double omega);

// The T-forward martingale statistic exp(G(delta) x + G(delta)^2/2 y), whose
// mean is 1 under the pay-time forward measure.
std::vector<double> martingale_statistic(const CapletRun& run, const PathOutput& paths);

}  // namespace cheyette::native
