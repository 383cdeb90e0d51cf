#include "quanta/rng.hpp"

#include <cmath>

namespace quanta {

namespace {

constexpr uint32_t kPhiloxW32A = 0x9E3779B9u;
constexpr uint32_t kPhiloxW32B = 0xBB67AE85u;
constexpr uint32_t kPhiloxM4x32A = 0xD2511F53u;
constexpr uint32_t kPhiloxM4x32B = 0xCD9E8D57u;

inline void mul_hi_lo(uint32_t a, uint32_t b, uint32_t& lo, uint32_t& hi) {
    const uint64_t p = static_cast<uint64_t>(a) * b;
    lo = static_cast<uint32_t>(p);
    hi = static_cast<uint32_t>(p >> 32);
}

inline void philox_round(uint32_t ctr[4], const uint32_t key[2]) {
    uint32_t lo0, hi0, lo1, hi1;
    mul_hi_lo(kPhiloxM4x32A, ctr[0], lo0, hi0);
    mul_hi_lo(kPhiloxM4x32B, ctr[2], lo1, hi1);
    const uint32_t r0 = hi1 ^ ctr[1] ^ key[0];
    const uint32_t r1 = lo1;
    const uint32_t r2 = hi0 ^ ctr[3] ^ key[1];
    const uint32_t r3 = lo0;
    ctr[0] = r0;
    ctr[1] = r1;
    ctr[2] = r2;
    ctr[3] = r3;
}

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kInv2Pow32 = 2.3283064365386962890625e-10; // 2^-32

} // namespace

PixelRng::PixelRng(uint64_t seed, uint64_t stream, uint64_t pixel_index) {
    key_[0] = static_cast<uint32_t>(seed);
    key_[1] = static_cast<uint32_t>(seed >> 32);
    ctr_[0] = 0;
    ctr_[1] = static_cast<uint32_t>(pixel_index);
    ctr_[2] = static_cast<uint32_t>(stream);
    ctr_[3] = static_cast<uint32_t>(stream >> 32);
    pos_ = 4; // force refill on first draw
}

void PixelRng::refill() {
    uint32_t c[4] = {ctr_[0], ctr_[1], ctr_[2], ctr_[3]};
    uint32_t k[2] = {key_[0], key_[1]};
    for (int round = 0; round < 10; ++round) {
        philox_round(c, k);
        k[0] += kPhiloxW32A;
        k[1] += kPhiloxW32B;
    }
    block_[0] = c[0];
    block_[1] = c[1];
    block_[2] = c[2];
    block_[3] = c[3];
    ++ctr_[0];
    pos_ = 0;
}

uint32_t PixelRng::next_u32() {
    if (pos_ >= 4) refill();
    return block_[pos_++];
}

double PixelRng::next_uniform() {
    return static_cast<double>(next_u32()) * kInv2Pow32;
}

double PixelRng::next_gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_gauss_;
    }
    // u1 in (0,1] keeps the log finite
    const double u1 = (static_cast<double>(next_u32()) + 1.0) * kInv2Pow32;
    const double u2 = static_cast<double>(next_u32()) * kInv2Pow32;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = kTwoPi * u2;
    spare_gauss_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

uint64_t PixelRng::next_poisson(double mean) {
    if (!(mean > 0.0)) return 0;

    if (mean < 10.0) {
        // Sequential search by CDF inversion.
        const double u = next_uniform();
        double p = std::exp(-mean);
        double cdf = p;
        uint64_t k = 0;
        while (u > cdf && k < 1000) {
            ++k;
            p *= mean / static_cast<double>(k);
            cdf += p;
        }
        return k;
    }

    // PTRS transformed rejection (Hormann 1993), valid for mean >= 10.
    const double slam = std::sqrt(mean);
    const double loglam = std::log(mean);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);

    for (;;) {
        const double u = next_uniform() - 0.5;
        // (0,1) open interval keeps the log finite
        const double v = (static_cast<double>(next_u32()) + 0.5) * kInv2Pow32;
        const double us = 0.5 - std::abs(u);
        const double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
        if (us >= 0.07 && v <= v_r) return static_cast<uint64_t>(kf);
        if (kf < 0.0 || (us < 0.013 && v > us)) continue;
        const double lhs = std::log(v * inv_alpha / (a / (us * us) + b));
        const double rhs = kf * loglam - mean - std::lgamma(kf + 1.0);
        if (lhs <= rhs) return static_cast<uint64_t>(kf);
    }
}

} // namespace quanta
