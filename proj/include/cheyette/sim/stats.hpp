#pragma once

#include <cstddef>
#include <span>

namespace cheyette::sim {

struct McEstimate {
    double mean;
    double standard_error;
    std::size_t n;  // number of independent samples behind the SE
};

/// Sample mean and SE = sd / sqrt(n) with the (n-1)-denominator standard
/// deviation. Deterministic pairwise reduction; requires n >= 2.
McEstimate mc_estimate(std::span<const double> samples);

/// Antithetic batches: samples are laid out as pairs (i, i + n/2). The mean
/// is the plain mean of the whole batch (identical to the pair-average mean);
/// the SE treats each pair average as one independent sample. Requires an
/// even count with at least two pairs.
McEstimate mc_estimate_antithetic(std::span<const double> samples);

}  // namespace cheyette::sim
