#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "quanta/rng.hpp"

#include "oracles.hpp"

using quanta::PixelRng;

TEST_SUITE("rng") {

TEST_CASE("philox oracle reproduces the published known-answer vectors") {
    for (const auto& kat : oracle::kat_philox4x32_10()) {
        const oracle::PhiloxCtr got = oracle::philox4x32_10(kat.ctr, kat.key);
        for (int i = 0; i < 4; ++i) CHECK(got[i] == kat.expected[i]);
    }
}

TEST_CASE("word stream matches the independent philox implementation") {
    const struct {
        uint64_t seed, stream, pixel;
    } cases[] = {
        {0, 0, 0},
        {0xDEADBEEFCAFEF00Dull, 7, 12345},
        {1, quanta::stream_space::synthetic + 42, 0xFFFFFFFFull},
        {0xFFFFFFFFFFFFFFFFull, 0xFFFFFFFFFFFFFFFFull, 3},
    };
    for (const auto& c : cases) {
        CAPTURE(c.seed);
        CAPTURE(c.stream);
        CAPTURE(c.pixel);
        // 11 words spans three philox blocks, so the block counter increment
        // is exercised, not just the first block.
        const std::vector<uint32_t> want = oracle::philox_stream(c.seed, c.stream, c.pixel, 11);
        PixelRng rng(c.seed, c.stream, c.pixel);
        for (uint32_t w : want) CHECK(rng.next_u32() == w);
    }
}

TEST_CASE("identical construction replays the identical sequence") {
    PixelRng a(42, 3, 99);
    PixelRng b(42, 3, 99);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u32() == b.next_u32());
}

TEST_CASE("seed, stream, and pixel all separate the streams") {
    // Distinct counters/keys must give (with overwhelming probability)
    // distinct first words.
    PixelRng base(42, 3, 99);
    PixelRng other_seed(43, 3, 99);
    PixelRng other_stream(42, 4, 99);
    PixelRng other_pixel(42, 3, 100);
    const uint32_t w = PixelRng(42, 3, 99).next_u32();
    CHECK(base.next_u32() == w);
    CHECK(other_seed.next_u32() != w);
    CHECK(other_stream.next_u32() != w);
    CHECK(other_pixel.next_u32() != w);
}

TEST_CASE("uniform draws have the right mean, variance, and range") {
    PixelRng rng(7, 0, 0);
    const int n = 200000;
    std::vector<double> xs(n);
    for (double& x : xs) {
        x = rng.next_uniform();
        REQUIRE(x >= 0.0);
        REQUIRE(x < 1.0);
    }
    // U(0,1): mean 1/2 (SE = sqrt(1/12/n)), var 1/12.
    const double mean = oracle::sample_mean(xs);
    const double var = oracle::sample_var(xs);
    CHECK(std::abs(mean - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / n));
    CHECK(std::abs(var - 1.0 / 12.0) < 0.002);
}

TEST_CASE("gaussian draws have standard-normal moments and tails") {
    PixelRng rng(11, 0, 5);
    const int n = 200000;
    std::vector<double> xs(n);
    int beyond_3 = 0;
    for (double& x : xs) {
        x = rng.next_gaussian();
        if (std::abs(x) > 3.0) ++beyond_3;
    }
    CHECK(std::abs(oracle::sample_mean(xs)) < 4.0 / std::sqrt(static_cast<double>(n)));
    // SE of the sample variance of a normal is sqrt(2/n).
    CHECK(std::abs(oracle::sample_var(xs) - 1.0) < 4.0 * std::sqrt(2.0 / n));
    // P(|Z| > 3) = 2 * (1 - Phi(3)) ~ 0.0027; binomial 4-sigma band.
    const double p3 = 2.0 * (1.0 - oracle::normal_cdf(3.0));
    const double se3 = std::sqrt(p3 * (1.0 - p3) / n);
    CHECK(std::abs(static_cast<double>(beyond_3) / n - p3) < 4.0 * se3);
}

TEST_CASE("poisson draws match analytic moments across both sampler regimes") {
    // 3.0 exercises CDF inversion, 40.0 the PTRS rejection path, and 9.99 /
    // 10.01 straddle the switchover.
    for (double mean : {0.5, 3.0, 9.99, 10.01, 40.0}) {
        CAPTURE(mean);
        PixelRng rng(123, 1, 77);
        const int n = 200000;
        std::vector<double> xs(n);
        for (double& x : xs) x = static_cast<double>(rng.next_poisson(mean));
        // Poisson: mean = var = lambda; SE(var) needs mu4 = lambda(1+3lambda).
        CHECK(std::abs(oracle::sample_mean(xs) - mean) < 4.0 * std::sqrt(mean / n));
        const double se_var = std::sqrt((mean * (1.0 + 3.0 * mean) - mean * mean) / n);
        CHECK(std::abs(oracle::sample_var(xs) - mean) < 4.0 * se_var);
    }
}

TEST_CASE("poisson pmf matches brute force at small means") {
    // Frequency of each small k against the closed-form pmf, 4-sigma bands.
    const double mean = 2.5;
    PixelRng rng(5, 2, 1);
    const int n = 200000;
    std::vector<int> counts(12, 0);
    for (int i = 0; i < n; ++i) {
        const uint64_t k = rng.next_poisson(mean);
        if (k < counts.size()) ++counts[static_cast<size_t>(k)];
    }
    for (size_t k = 0; k < counts.size(); ++k) {
        const double p = oracle::poisson_pmf(mean, k);
        const double se = std::sqrt(p * (1.0 - p) / n);
        CHECK(std::abs(static_cast<double>(counts[k]) / n - p) < 4.0 * se + 1e-12);
    }
}

TEST_CASE("poisson of nonpositive mean is zero") {
    PixelRng rng(1, 0, 0);
    CHECK(rng.next_poisson(0.0) == 0);
    CHECK(rng.next_poisson(-1.0) == 0);
}

} // TEST_SUITE
