#include <cmath>
#include <cstdint>
#include <vector>

#include <doctest.h>

#include "cheyette/errors.hpp"
#include "cheyette/sim/rng.hpp"

using namespace cheyette;
using namespace cheyette::sim;

TEST_SUITE("rng") {

TEST_CASE("philox4x32-10 known-answer vectors") {
    // Reference block outputs for the standard round keys and multipliers.
    {
        const auto r = philox4x32({0u, 0u, 0u, 0u}, {0u, 0u});
        CHECK(r[0] == 0x6627e8d5u);
        CHECK(r[1] == 0xe169c58du);
        CHECK(r[2] == 0xbc57ac4cu);
        CHECK(r[3] == 0x9b00dbd8u);
    }
    {
        const auto r = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                  {0xffffffffu, 0xffffffffu});
        CHECK(r[0] == 0x408f276du);
        CHECK(r[1] == 0x41c83b0eu);
        CHECK(r[2] == 0xa20bc7c6u);
        CHECK(r[3] == 0x6d5451fdu);
    }
    {
        const auto r = philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                  {0xa4093822u, 0x299f31d0u});
        CHECK(r[0] == 0xd16cfe09u);
        CHECK(r[1] == 0x94fdccebu);
        CHECK(r[2] == 0x5001e420u);
        CHECK(r[3] == 0x24126ea1u);
    }
}

TEST_CASE("uniform_from_bits stays inside the open unit interval") {
    CHECK(uniform_from_bits(0u, 0u) == 0x1.0p-54);
    // All-ones cell is the largest double below 1, not 1.
    CHECK(uniform_from_bits(0xffffffffu, 0xffffffffu) == 1.0 - 0x1.0p-54);
    CHECK(uniform_from_bits(0xffffffffu, 0xffffffffu) < 1.0);
    // Midpoint cell: top bit set, rest zero -> 0.5 + 2^-54.
    CHECK(uniform_from_bits(0x80000000u, 0u) == 0.5 + 0x1.0p-54);
    // Only the top 53 bits matter.
    CHECK(uniform_from_bits(0u, 0x7ffu) == uniform_from_bits(0u, 0u));
    CHECK(uniform_from_bits(0u, 0x800u) != uniform_from_bits(0u, 0u));
}

TEST_CASE("normal_inv_cdf matches the reference normal quantiles") {
    // scipy.stats.norm.ppf on an independent implementation of the same
    // quantile function; agreement to a few ulps.
    const struct { double u, z; } table[] = {
        {0.975, 1.959963984540054},
        {0.025, -1.9599639845400545},
        {0.84134474606854293, 1.0},
        {0.1, -1.2815515655446004},
        {0.9, 1.2815515655446004},
        {0.0001, -3.7190164854556804},
        {0.9999, 3.719016485455709},
        {1e-10, -6.361340902404056},
        {1.0 - 1e-12, 7.0344869100478356},
        {1e-300, -37.0470962993612},
    };
    for (const auto& row : table) {
        const double z = normal_inv_cdf(row.u);
        CHECK(z == doctest::Approx(row.z).epsilon(4e-15));
    }
    CHECK(normal_inv_cdf(0.5) == 0.0);
}

TEST_CASE("normal_inv_cdf rejects the closed endpoints") {
    CHECK_THROWS_AS((void)normal_inv_cdf(0.0), ValidationError);
    CHECK_THROWS_AS((void)normal_inv_cdf(1.0), ValidationError);
    CHECK_THROWS_AS((void)normal_inv_cdf(-0.5), ValidationError);
    CHECK_THROWS_AS((void)normal_inv_cdf(1.5), ValidationError);
}

TEST_CASE("keyed draws are deterministic and cell-independent") {
    CHECK(keyed_uniform(42, 1, 2, 3) == keyed_uniform(42, 1, 2, 3));
    CHECK(keyed_normal(42, 1, 2, 3) == keyed_normal(42, 1, 2, 3));
    CHECK(keyed_uniform(42, 1, 2, 3) != keyed_uniform(43, 1, 2, 3));
    CHECK(keyed_uniform(42, 1, 2, 3) != keyed_uniform(42, 2, 2, 3));
    CHECK(keyed_uniform(42, 1, 2, 3) != keyed_uniform(42, 1, 3, 3));
    CHECK(keyed_uniform(42, 1, 2, 3) != keyed_uniform(42, 1, 2, 4));
    // The full 64-bit seed keys the stream, not just the low word.
    CHECK(keyed_uniform(42, 1, 2, 3) != keyed_uniform(42 + (std::uint64_t{1} << 32), 1, 2, 3));
    CHECK(keyed_normal(7, 0, 0, 0) == normal_inv_cdf(keyed_uniform(7, 0, 0, 0)));
}

TEST_CASE("keyed normals look standard normal") {
    const std::size_t n = 20000;
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = keyed_normal(20260814, static_cast<std::uint32_t>(i), 0, 0);
        sum += z;
        sum2 += z * z;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    CHECK(std::fabs(mean) < 0.03);      // ~4 sigma of the sample mean
    CHECK(std::fabs(var - 1.0) < 0.05);
    // Uniforms fill (0,1) evenly enough for a coarse histogram.
    int buckets[10] = {};
    for (std::size_t i = 0; i < n; ++i) {
        const double u = keyed_uniform(99, static_cast<std::uint32_t>(i), 1, 2);
        CHECK(u > 0.0);
        CHECK(u < 1.0);
        ++buckets[static_cast<int>(u * 10.0)];
    }
    for (int b : buckets) CHECK(std::fabs(b - 2000) < 300);
}

}  // TEST_SUITE
