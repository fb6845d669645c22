#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cheyette::sim {

inline constexpr double kDefaultDtMax = 1.0 / 96.0;

/// Uniform Euler grid with observation times inserted exactly. Times start at
/// 0, are strictly increasing, and no step exceeds dt_max.
struct TimeGrid {
    std::vector<double> times;
    std::vector<bool> observed;  // per time index
    double dt_max = kDefaultDtMax;

    /// obs_times must be finite and >= 0; duplicates are fine. A nearly
    /// coincident uniform point (within 1e-12 absolute) is snapped onto the
    /// observation time so the observation appears exactly.
    static TimeGrid build(std::span<const double> obs_times, double dt_max);

    std::size_t n_steps() const { return times.size() - 1; }

    /// Index of an exact grid time; throws if t is not on the grid.
    std::size_t index_of(double t) const;
};

}  // namespace cheyette::sim
