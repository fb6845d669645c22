#pragma once

#include <array>
#include <cstdint>

namespace cheyette::sim {

/// Philox4x32-10 block: counter-based, so any (seed, counter) cell can be
/// evaluated independently of every other draw.
std::array<std::uint32_t, 4> philox4x32(const std::array<std::uint32_t, 4>& counter,
                                        const std::array<std::uint32_t, 2>& key);

/// Uniform in (0, 1), never hitting either endpoint: the top 53 bits of a
/// 64-bit word, centered on the cell midpoint.
double uniform_from_bits(std::uint32_t hi, std::uint32_t lo);

/// Inverse standard-normal CDF, Wichura's AS 241 PPND16 rational
/// approximation (double-precision coefficients). Requires u in (0, 1).
double normal_inv_cdf(double u);

/// Uniform draw for the cell (a, b, c) of the stream keyed by seed.
double keyed_uniform(std::uint64_t seed, std::uint32_t a, std::uint32_t b, std::uint32_t c);

/// Standard normal draw for the cell (a, b, c); simulation code uses
/// (path, step, brownian).
double keyed_normal(std::uint64_t seed, std::uint32_t a, std::uint32_t b, std::uint32_t c);

}  // namespace cheyette::sim
