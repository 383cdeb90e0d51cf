#pragma once

// Independent reference implementations the test suites compare the library
// against. Everything here is a direct enumeration, a brute-force loop, or a
// second from-scratch implementation of a published algorithm, deliberately
// sharing no code with src/, so a test failure always means one of the two
// sides is wrong rather than both drifting together.

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "quanta/image.hpp"
#include "quanta/sensor.hpp"

namespace oracle {

// ---------------------------------------------------------------------------
// Philox4x32-10, reimplemented from the published algorithm (Salmon et al.,
// SC 2011). Verified against the reference known-answer vectors in
// kat_philox4x32_10() below before being used to check the library generator.
// ---------------------------------------------------------------------------

using PhiloxCtr = std::array<uint32_t, 4>;
using PhiloxKey = std::array<uint32_t, 2>;

inline PhiloxCtr philox4x32_10(PhiloxCtr ctr, PhiloxKey key) {
    constexpr uint32_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
    constexpr uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const uint64_t p0 = static_cast<uint64_t>(m0) * ctr[0];
        const uint64_t p1 = static_cast<uint64_t>(m1) * ctr[2];
        ctr = {static_cast<uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<uint32_t>(p1),
               static_cast<uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<uint32_t>(p0)};
        key[0] += w0;
        key[1] += w1;
    }
    return ctr;
}

struct PhiloxKat {
    PhiloxCtr ctr;
    PhiloxKey key;
    PhiloxCtr expected;
};

/// Known-answer vectors from the Random123 reference distribution.
inline std::vector<PhiloxKat> kat_philox4x32_10() {
    return {
        {{0u, 0u, 0u, 0u}, {0u, 0u}, {0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}},
        {{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
         {0xffffffffu, 0xffffffffu},
         {0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}},
        {{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
         {0xa4093822u, 0x299f31d0u},
         {0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}},
    };
}

/// The word stream PixelRng must produce for a (seed, stream, pixel) triple,
/// per its documented counter layout {block, pixel, stream_lo, stream_hi}
/// with the 64-bit seed split across the key words.
inline std::vector<uint32_t> philox_stream(uint64_t seed, uint64_t stream, uint64_t pixel,
                                           size_t words) {
    const PhiloxKey key = {static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)};
    std::vector<uint32_t> out;
    out.reserve(words);
    uint32_t block = 0;
    while (out.size() < words) {
        const PhiloxCtr ctr = {block++, static_cast<uint32_t>(pixel),
                               static_cast<uint32_t>(stream), static_cast<uint32_t>(stream >> 32)};
        const PhiloxCtr v = philox4x32_10(ctr, key);
        for (uint32_t w : v) {
            if (out.size() == words) break;
            out.push_back(w);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Distributions
// ---------------------------------------------------------------------------

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Poisson pmf via lgamma, stable for any k.
inline double poisson_pmf(double lambda, uint64_t k) {
    if (lambda <= 0.0) return k == 0 ? 1.0 : 0.0;
    const double lk = static_cast<double>(k);
    return std::exp(lk * std::log(lambda) - lambda - std::lgamma(lk + 1.0));
}

/// Exact distribution of the sensor readout
///   Y = clamp(round(min(Poisson(lambda), fwc) + Normal(0, sigma^2)), 0, N)
/// as a pmf over {0, ..., N}, N = 2^n_bits - 1. Enumerates electron counts
/// until the Poisson tail is below 1e-16 (the tail collapses onto e = fwc
/// exactly when reached, so full-well clipping loses no mass). Rounding is
/// half-away-from-zero, which makes bin 0 own all analog values below 0.5
/// and bin N own everything at or above N - 0.5.
inline std::vector<double> readout_pmf(double lambda, const quanta::SensorParams& params) {
    const int n = params.adc_max();
    const double sigma = params.read_noise_sigma;
    std::vector<double> pmf(static_cast<size_t>(n) + 1, 0.0);

    const auto deposit = [&](int e, double pe) {
        if (pe <= 0.0) return;
        if (sigma == 0.0) {
            pmf[static_cast<size_t>(std::min(e, n))] += pe;
            return;
        }
        pmf[0] += pe * normal_cdf((0.5 - e) / sigma);
        pmf[static_cast<size_t>(n)] += pe * (1.0 - normal_cdf((n - 0.5 - e) / sigma));
        const int lo = std::max(1, e - static_cast<int>(std::ceil(12.0 * sigma)) - 1);
        const int hi = std::min(n - 1, e + static_cast<int>(std::ceil(12.0 * sigma)) + 1);
        for (int k = lo; k <= hi; ++k)
            pmf[static_cast<size_t>(k)] +=
                pe * (normal_cdf((k + 0.5 - e) / sigma) - normal_cdf((k - 0.5 - e) / sigma));
    };

    double pe = std::exp(-lambda);
    double cum = 0.0;
    for (uint64_t e = 0; e < params.fwc; ++e) {
        deposit(static_cast<int>(e), pe);
        cum += pe;
        if (1.0 - cum < 1e-16) return pmf;
        pe *= lambda / static_cast<double>(e + 1);
    }
    deposit(static_cast<int>(params.fwc), 1.0 - cum);
    return pmf;
}

struct PmfMoments {
    double mean = 0.0;
    double var = 0.0;
    double mu4 = 0.0; ///< fourth central moment, for the SE of a sample variance
};

inline PmfMoments pmf_moments(const std::vector<double>& pmf) {
    PmfMoments m;
    for (size_t k = 0; k < pmf.size(); ++k) m.mean += static_cast<double>(k) * pmf[k];
    for (size_t k = 0; k < pmf.size(); ++k) {
        const double d = static_cast<double>(k) - m.mean;
        m.var += d * d * pmf[k];
        m.mu4 += d * d * d * d * pmf[k];
    }
    return m;
}

/// Standard error of a sample mean over n draws from this pmf.
inline double se_of_mean(const PmfMoments& m, double n) { return std::sqrt(m.var / n); }

/// Standard error of a sample variance over n draws: Var(s^2) ~ (mu4 - var^2)/n.
inline double se_of_var(const PmfMoments& m, double n) {
    return std::sqrt(std::max(0.0, m.mu4 - m.var * m.var) / n);
}

/// Shannon entropy of the readout pmf in nats: the expected per-pixel NLL
/// when the evaluated estimate equals the true flux.
inline double pmf_entropy(const std::vector<double>& pmf) {
    double h = 0.0;
    for (double p : pmf)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

/// Variance of -ln p(Y) under the pmf, for the SE of a mean NLL.
inline double pmf_nll_variance(const std::vector<double>& pmf) {
    const double h = pmf_entropy(pmf);
    double second = 0.0;
    for (double p : pmf)
        if (p > 0.0) second += p * std::log(p) * std::log(p);
    return std::max(0.0, second - h * h);
}

/// Mean per-pixel NLL of a constant-lambda frame under the readout model.
inline double nll_of_frame(double lambda, const quanta::QuantaFrame& frame,
                           const quanta::SensorParams& params) {
    const std::vector<double> pmf = readout_pmf(lambda, params);
    double total = 0.0;
    for (uint16_t y : frame.values)
        total += -std::log(std::max(pmf[static_cast<size_t>(y)], 1e-300));
    return total / static_cast<double>(frame.size());
}

// ---------------------------------------------------------------------------
// Sample statistics
// ---------------------------------------------------------------------------

template <typename Container>
double sample_mean(const Container& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

template <typename Container>
double sample_var(const Container& xs) {
    const double m = sample_mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return s / static_cast<double>(xs.size() - 1);
}

// ---------------------------------------------------------------------------
// Metric references: direct-loop PSNR / SSIM / TV
// ---------------------------------------------------------------------------

inline double ref_psnr(const quanta::ImageD& a, const quanta::ImageD& b, double peak) {
    double mse = 0.0;
    for (size_t i = 0; i < a.size(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

/// Single-scale SSIM, the standard form: 11x11 Gaussian window (sigma 1.5)
/// normalized to unit sum, K1 = 0.01, K2 = 0.03 on unit dynamic range,
/// averaged over window positions that lie fully inside the image. Uses
/// two-pass weighted central moments where the library may use raw moments;
/// the forms agree to ~1e-12 on [0,1] data.
inline double ref_ssim(const quanta::ImageD& a, const quanta::ImageD& b) {
    constexpr int radius = 5;
    constexpr double sigma = 1.5;
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    const int win = 2 * radius + 1;

    double w[win][win];
    double wsum = 0.0;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
            w[dy + radius][dx + radius] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            wsum += w[dy + radius][dx + radius];
        }
    for (auto& row : w)
        for (double& v : row) v /= wsum;

    double total = 0.0;
    size_t count = 0;
    for (int cy = radius; cy < a.height - radius; ++cy) {
        for (int cx = radius; cx < a.width - radius; ++cx) {
            double ma = 0.0, mb = 0.0;
            for (int dy = -radius; dy <= radius; ++dy)
                for (int dx = -radius; dx <= radius; ++dx) {
                    ma += w[dy + radius][dx + radius] * a.at(cx + dx, cy + dy);
                    mb += w[dy + radius][dx + radius] * b.at(cx + dx, cy + dy);
                }
            double va = 0.0, vb = 0.0, cov = 0.0;
            for (int dy = -radius; dy <= radius; ++dy)
                for (int dx = -radius; dx <= radius; ++dx) {
                    const double da = a.at(cx + dx, cy + dy) - ma;
                    const double db = b.at(cx + dx, cy + dy) - mb;
                    va += w[dy + radius][dx + radius] * da * da;
                    vb += w[dy + radius][dx + radius] * db * db;
                    cov += w[dy + radius][dx + radius] * da * db;
                }
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                     ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

inline double ref_total_variation(const quanta::ImageD& img) {
    double tv = 0.0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            if (x + 1 < img.width) tv += std::abs(img.at(x + 1, y) - img.at(x, y));
            if (y + 1 < img.height) tv += std::abs(img.at(x, y + 1) - img.at(x, y));
        }
    return tv;
}

} // namespace oracle
