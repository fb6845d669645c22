#include "cheyette/sim/stats.hpp"

#include <cmath>
#include <vector>

#include "cheyette/errors.hpp"
#include "cheyette/support.hpp"

namespace cheyette::sim {

McEstimate mc_estimate(std::span<const double> samples) {
    const std::size_t n = samples.size();
    if (n < 2) throw ValidationError("mc_estimate requires at least 2 samples");
    const double mean = pairwise_sum(samples) / static_cast<double>(n);
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = samples[i] - mean;
        sq[i] = d * d;
    }
    const double var = pairwise_sum(sq) / static_cast<double>(n - 1);
    return {mean, std::sqrt(var / static_cast<double>(n)), n};
}

McEstimate mc_estimate_antithetic(std::span<const double> samples) {
    const std::size_t n = samples.size();
    if (n < 4 || n % 2 != 0)
        throw ValidationError("mc_estimate_antithetic requires an even count of >= 4 samples");
    const std::size_t m = n / 2;
    // The batch mean is computed over the union so it matches the plain
    // estimator bit for bit; only the SE switches to pair averages.
    const double mean = pairwise_sum(samples) / static_cast<double>(n);
    std::vector<double> sq(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double pair_mean = 0.5 * (samples[i] + samples[i + m]);
        const double d = pair_mean - mean;
        sq[i] = d * d;
    }
    const double var = pairwise_sum(sq) / static_cast<double>(m - 1);
    return {mean, std::sqrt(var / static_cast<double>(m)), m};
}

}  // namespace cheyette::sim
