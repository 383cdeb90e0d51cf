#pragma once

#include <functional>
#include <string>
#include <vector>

#include "quanta/denoise.hpp"
#include "quanta/flow.hpp"
#include "quanta/image.hpp"
#include "quanta/rng.hpp"
#include "quanta/sensor.hpp"

#include <nlohmann/json_fwd.hpp>

namespace quanta {

/// A captured burst together with everything a reconstruction method needs
/// to interpret it.
struct ReconstructionRequest {
    QuantaBurst burst;
    SensorParams params;
    int reference = -1; ///< output reference frame; -1 selects the middle frame

    int frame_count() const { return static_cast<int>(burst.frames.size()); }
    /// Resolved reference index (middle frame when reference is -1).
    int reference_index() const;
    void validate() const;
};

/// Classical align-and-merge baseline configuration. Flows are chained
/// through consecutive frames by default because burst-length displacements
/// can exceed the direct estimator's pull-in range.
struct AlignMergeConfig {
    DenoiserSpec denoiser;
    FlowConfig flow;
    double merge_sigma = 1.0; ///< flux-unit sigma of the consistency weights

    AlignMergeConfig() { flow.chain = true; }

    void validate() const;
    static AlignMergeConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// Reverse-sampler configuration. The loop runs t = total_steps .. 1; the
/// cumulative signal-retention schedule alpha_bar is a shifted cosine with
/// alpha_bar(0) = 1 and alpha_bar(total_steps) > 0. Fusion weights and the
/// refinement denoiser strength are interpolated linearly over the run:
/// weights grow and strengths shrink as t decreases.
struct SamplerConfig {
    int total_steps = 10;
    double schedule_shift = 0.008; ///< cosine-schedule offset keeping alpha_bar(T) > 0

    double synthetic_base_ppp = 3.25; ///< photon budget of the synthetic burst at t = T
    double synthetic_gain = 3.0;      ///< ramp factor, see synthetic_ppp_schedule

    double fusion_weight_start = 0.2; ///< synthetic-data weight at t = T
    double fusion_weight_end = 0.6;   ///< synthetic-data weight at t = 1

    /// Refinement denoiser strengths at t = T and t = 1. Zero by default: the
    /// in-loop predenoiser already smooths every fused frame, and a second
    /// pass over the blended estimate compounds its bias across steps.
    double refine_strength_start = 0.0;
    double refine_strength_end = 0.0;

    double self_conditioning = 0.7; ///< gamma: weight of the fused candidate vs previous estimate
    /// Base flux-unit sigma of the temporal-fusion weights. Tighter than the
    /// align-merge default because the loop re-merges every step, so rejected
    /// neighbors still contribute through later, better-aligned passes.
    double merge_sigma = 0.5;
    bool deterministic = true;      ///< skip the posterior noise term in the chain update

    DenoiserSpec predenoiser; ///< in-loop per-frame predenoiser (fixed strength)
    FlowConfig flow;          ///< in-loop flow estimation; chained by default

    SamplerConfig() { flow.chain = true; }

    /// Cumulative signal retention at step t in [0, total_steps]; strictly
    /// decreasing, alpha_bar(0) = 1, always > 0.
    double alpha_bar(int t) const;
    double fusion_weight(int t) const;
    double refine_strength(int t) const;
    SyntheticSchedule synthetic_schedule() const;

    void validate() const;
    static SamplerConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// Per-step sampler telemetry.
struct StepDiagnostics {
    int step = 0;                   ///< t value this entry describes
    double alpha_bar = 0.0;         ///< schedule value at t
    double synthetic_ppp = 0.0;     ///< photon budget of this step's synthetic burst
    double fusion_weight = 0.0;     ///< synthetic-data weight used in the fusion
    double refine_strength = 0.0;   ///< refinement denoiser strength used
    double consistency = 0.0;       ///< forward_consistency of the reference estimate
    double max_update = 0.0;        ///< max-abs change of the estimate since the previous step
};

struct SamplerResult {
    FluxVideo restored; ///< one frame per input frame, flux units
    std::vector<StepDiagnostics> steps;
};

/// Called after every sampler step with the current clean estimate; used by
/// the CLI to dump per-step snapshots.
using StepObserver = std::function<void(const FluxVideo& estimate, const StepDiagnostics& diag)>;

/// Per-pixel mean of the burst mapped to flux units: (mean - dark)/qe,
/// clamped at 0. Deliberately ignores clipping, so it is biased wherever
/// the ADC saturates; documented simple estimator.
FluxImage naive_average(const QuantaBurst& burst, const SensorParams& params);

/// Burst reconstruction around the request's reference frame: predenoise
/// every frame, estimate flows to the reference, warp, and average with
/// per-pixel consistency weights w = exp(-(warped - ref)^2 / (2 sigma^2))
/// gated by the warp validity mask.
FluxImage align_merge(const ReconstructionRequest& request, const AlignMergeConfig& cfg);

/// Crude photon-budget estimate of a captured burst: mean count minus the
/// dark level, clamped to a small positive floor. Biased low when the ADC
/// clips, which only makes the synthetic ramp start conservatively.
double estimate_ppp(const QuantaBurst& burst, const SensorParams& params);

/// Iterative restorer structured as a reverse diffusion chain with the
/// sensor forward model injected in the loop. Each step simulates a
/// synthetic burst from the current estimate at a scheduled photon budget,
/// fuses it with the captured data, re-runs predenoise + flow + temporal
/// fusion per reference frame, refines with a strength-scheduled denoiser
/// blended against the previous estimate (self-conditioning), and advances
/// the noisy iterate with a DDIM-style update. Returns one restored frame
/// per input frame. Deterministic given (seed, cfg.deterministic).
SamplerResult qudi_sample(const ReconstructionRequest& request, const SamplerConfig& cfg,
                          RngSeed seed, const StepObserver& observer = {});

/// Mean per-pixel negative log-likelihood of the quanta frame under the
/// Poisson-Gaussian-ADC model given the flux estimate. ADC bins integrate
/// the Gaussian over (y - 0.5, y + 0.5] with open end bins; with zero read
/// noise this reduces to the exact (clipped) Poisson pmf. Lower is better.
double forward_consistency(const FluxImage& estimate, const QuantaFrame& frame,
                           const SensorParams& params);

/// Mean of forward_consistency over all frames of the burst against a
/// single flux estimate.
double forward_consistency(const FluxImage& estimate, const QuantaBurst& burst,
                           const SensorParams& params);

} // namespace quanta
