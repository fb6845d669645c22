#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "cheyette/script/check.hpp"
#include "cheyette/sim/grid.hpp"

namespace cheyette::sim {

// Free-parameter binding: one value for the whole batch or one per path.
using Binding = std::variant<double, std::vector<double>>;

struct SimConfig {
    std::size_t batch = std::size_t{1} << 16;
    std::uint64_t seed = 0;
    bool antithetic = false;  // batch must be even; draws negated pairwise
    double dt_max = kDefaultDtMax;
    std::map<std::string, Binding> bindings;
    std::map<std::string, std::function<double(double)>> externals;
    // Optional raw standard-normal draws, layout [step][brownian][base path]
    // where base path count is batch (plain) or batch/2 (antithetic).
    const std::vector<double>* injected_normals = nullptr;
};

struct GridHints {
    double dt_max = kDefaultDtMax;
};

struct SimulationPlan {
    script::CheckedProgram program;
    TimeGrid grid;
    std::vector<std::pair<std::string, double>> needed_obs;  // (var, time)
    std::set<std::string> used_externals;
    bool constant_correlation = false;
    std::vector<std::vector<double>> constant_lower;  // Cholesky when constant
};

struct SimOutput {
    std::vector<std::string> payoff_names;
    std::vector<std::vector<double>> payoff_samples;  // [payoff][path]
    // Recorded state observations keyed "var@time" (17 significant digits).
    std::map<std::string, std::vector<double>> observations;
};

// Fixes the time grid and payoff extraction for a checked program.
// Errors: empty payoff set; constant correlation matrix not PSD.
SimulationPlan compile(const script::CheckedProgram& program, const GridHints& hints);

// Batched Euler run. Increments read start-of-step values, assignments are
// re-derived after each step, discount modes are applied per payoff.
// Deterministic: identical (plan, config) gives bit-identical output.
// Throws RuntimeError naming step and variable when state turns non-finite.
SimOutput simulate(const SimulationPlan& plan, const SimConfig& config);

}  // namespace cheyette::sim
