#include "cheyette/sim/grid.hpp"

#include <algorithm>
#include <cmath>

#include "cheyette/errors.hpp"

namespace cheyette::sim {

TimeGrid TimeGrid::build(std::span<const double> obs_times, double dt_max) {
    if (!(dt_max > 0.0)) throw ValidationError("grid dt_max must be > 0");
    std::vector<double> obs(obs_times.begin(), obs_times.end());
    for (double t : obs)
        if (!std::isfinite(t) || t < 0.0)
            throw ValidationError("observation times must be finite and >= 0");
    std::sort(obs.begin(), obs.end());
    obs.erase(std::unique(obs.begin(), obs.end()), obs.end());

    const double t_max = obs.empty() ? 0.0 : obs.back();
    std::vector<double> times;
    if (t_max > 0.0) {
        const auto n = static_cast<std::size_t>(std::ceil(t_max / dt_max - 1e-9));
        times.reserve(n + obs.size() + 1);
        for (std::size_t i = 0; i <= n; ++i)
            times.push_back(t_max * (static_cast<double>(i) / static_cast<double>(n)));
    } else {
        times.push_back(0.0);
    }
    // Snap uniform points onto a coincident observation, then insert the rest.
    for (double t : obs) {
        auto it = std::lower_bound(times.begin(), times.end(), t - 1e-12);
        if (it != times.end() && std::abs(*it - t) <= 1e-12) {
            *it = t;
        } else {
            times.insert(it, t);
        }
    }
    times.erase(std::unique(times.begin(), times.end()), times.end());
    if (times.front() != 0.0) times.insert(times.begin(), 0.0);

    TimeGrid grid;
    grid.dt_max = dt_max;
    grid.times = std::move(times);
    grid.observed.assign(grid.times.size(), false);
    for (double t : obs) grid.observed[grid.index_of(t)] = true;
    return grid;
}

std::size_t TimeGrid::index_of(double t) const {
    auto it = std::lower_bound(times.begin(), times.end(), t);
    if (it == times.end() || *it != t)
        throw ValidationError("time not on simulation grid");
    return static_cast<std::size_t>(it - times.begin());
}

}  // namespace cheyette::sim
