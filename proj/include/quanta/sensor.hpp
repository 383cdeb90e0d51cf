#pragma once

#include <string>
#include <vector>

#include "quanta/image.hpp"
#include "quanta/rng.hpp"

#include <nlohmann/json_fwd.hpp>

namespace quanta {

/// Physical description of a single-photon detector.
struct SensorParams {
    double qe = 0.80;            ///< quantum efficiency, fraction of flux converted
    double dark_current = 1.6;   ///< electrons per pixel per frame
    double read_noise_sigma = 0.2; ///< electrons RMS per pixel
    int n_bits = 3;              ///< ADC bit depth
    uint32_t fwc = 100;          ///< full-well capacity in electrons

    int adc_max() const { return (1 << n_bits) - 1; }

    /// Throws InputDomainError unless 0 < qe <= 1, dark >= 0, sigma >= 0,
    /// 1 <= n_bits <= 16 and fwc >= 2^n_bits - 1.
    void validate() const;

    /// Named parameter sets. "paper-spd" is the default SPD profile
    /// (QE 0.80, dark 1.6 e-, read noise 0.2 e-, 3-bit ADC).
    static SensorParams preset(const std::string& name);
    static std::vector<std::string> preset_names();

    static SensorParams from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// Parameters of the time-step-dependent synthetic photon-flux ramp used
/// inside the restoration loop.
struct SyntheticSchedule {
    int total_steps = 10;
    double base_ppp = 3.25;
    double gain = 3.0;
};

/// Photons-per-pixel the synthetic simulator targets at reverse-diffusion
/// step t: ppp(t) = base * (1 + gain * (T - t) / T). Non-increasing in t,
/// so late steps (small t) receive brighter, more reliable measurements.
double synthetic_ppp_schedule(int t, int total_steps, double base_ppp, double gain);

/// One exposure of the Poisson-Gaussian-ADC forward model:
///   e ~ Poisson(qe*flux + dark); e = min(e, fwc);
///   a = e + Gaussian(0, read_noise_sigma^2);
///   Y = clamp(round(a), 0, 2^n_bits - 1)
/// with round-half-away-from-zero. Deterministic given (seed, stream).
QuantaFrame simulate_frame(const FluxImage& flux, const SensorParams& params, RngSeed seed);

/// Simulates frame i of the video with stream = seed.stream + i, so frames
/// are mutually independent and the whole burst is reproducible.
QuantaBurst simulate_burst(const FluxVideo& video, const SensorParams& params, RngSeed seed);

/// Global factor s such that mean over all pixels and frames of
/// qe * s * flux equals target_ppp. Dark counts are excluded from PPP.
double flux_scale_for_ppp(const FluxVideo& video, const SensorParams& params, double target_ppp);

FluxVideo scale_flux_to_ppp(const FluxVideo& video, const SensorParams& params, double target_ppp);

/// Synthetic measurements plus the flux factor that was applied before
/// simulation, so callers can map counts back to the estimate's flux units.
struct SyntheticBurst {
    QuantaBurst burst;
    double flux_scale = 1.0;
};

/// Clamps the estimate to >= 0, rescales it to synthetic_ppp_schedule(t, ...)
/// and simulates a burst on streams disjoint from the captured-data streams
/// (stream_space::synthetic + seed.stream + t*frames + i). An all-zero
/// estimate skips the rescale (flux_scale = 1) and yields a dark-only burst.
SyntheticBurst simulate_synthetic_measurements(const FluxVideo& estimate, const SensorParams& params,
                                               int t, const SyntheticSchedule& schedule, RngSeed seed);

} // namespace quanta
