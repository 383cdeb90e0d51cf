#pragma once

#include <cstdint>

namespace quanta {

/// Seed plus stream identifier. The stream is a frame index (or an offset
/// into one of the reserved stream spaces below); identical (seed, stream)
/// reproduces identical draws bit-for-bit on any build.
struct RngSeed {
    uint64_t seed = 0;
    uint64_t stream = 0;
};

/// Reserved stream-id bases so captured-data simulation, in-loop synthetic
/// simulation, and sampler noise never share a counter.
namespace stream_space {
inline constexpr uint64_t capture = 0;
inline constexpr uint64_t synthetic = uint64_t(1) << 32;
inline constexpr uint64_t sampler = uint64_t(1) << 33;
} // namespace stream_space

/// Counter-based generator: Philox4x32-10 (Salmon et al., SC 2011).
///
/// Key is the 64-bit seed; the 128-bit counter is laid out as
/// {block, pixel, stream_lo, stream_hi}, so every (seed, stream, pixel)
/// triple owns an independent substream of 2^32 blocks of four 32-bit words.
/// All derived samplers (uniform, Gaussian, Poisson) consume from that
/// substream only, which makes per-pixel simulation order-independent.
class PixelRng {
public:
    PixelRng(uint64_t seed, uint64_t stream, uint64_t pixel_index);

    uint32_t next_u32();

    /// Uniform on [0, 1).
    double next_uniform();

    /// Standard normal via Box-Muller (pairs cached).
    double next_gaussian();

    /// Poisson sample: sequential inversion for mean < 10, Hormann's PTRS
    /// transformed rejection for mean >= 10.
    uint64_t next_poisson(double mean);

private:
    void refill();

    uint32_t key_[2];
    uint32_t ctr_[4];
    uint32_t block_[4];
    int pos_;
    double spare_gauss_ = 0.0;
    bool has_spare_ = false;
};

} // namespace quanta
