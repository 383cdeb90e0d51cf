#pragma once

#include <string>

#include "quanta/image.hpp"
#include "quanta/sensor.hpp"

#include <nlohmann/json_fwd.hpp>

namespace quanta {

enum class DenoiserKind { NonLocalMeans, TotalVariation };

struct DenoiserSpec {
    DenoiserKind kind = DenoiserKind::NonLocalMeans;
    double strength = 0.8;  ///< NLM filtering parameter h, or TV regularization weight
    int patch_radius = 2;   ///< NLM 5x5 patches
    int search_radius = 5;  ///< NLM 11x11 search window
    double tv_tolerance = 1e-4;
    int tv_max_iterations = 200;

    void validate() const;
    static DenoiserSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// Variance-stabilizing transform for the Poisson-Gaussian model:
///   x -> 2 * sqrt(max(x*g + 3/8*g^2 + sigma^2, 0)) / g
/// with gain g in electrons per DN (1 for raw counts) and sigma the read
/// noise. Output variance is approximately 1 for input means >= 4.
ImageD generalized_anscombe(const ImageD& image, const SensorParams& params, double gain = 1.0);
ImageD generalized_anscombe(const QuantaFrame& frame, const SensorParams& params, double gain = 1.0);

/// Algebraic inverse of generalized_anscombe; round-trips to 1e-9 for x >= 0.
ImageD inverse_anscombe(const ImageD& image, const SensorParams& params, double gain = 1.0);

/// Single-image denoiser. NLM: 5x5 patches, 11x11 search window, h = strength
/// (h = 0 keeps only exact patch matches, so the input passes through).
/// TV: Chambolle dual-projection run to tv_tolerance or tv_max_iterations.
ImageD denoise_image(const ImageD& image, const DenoiserSpec& spec);

/// Predenoising stage: stabilize, denoise, unstabilize, remove the dark
/// level and divide by qe so the result lands in nonnegative flux units.
ImageD predenoise_frame(const QuantaFrame& frame, const SensorParams& params,
                        const DenoiserSpec& spec);

/// Same pipeline for an image already in flux units (used inside the
/// restoration loop, where fused frames are no longer integer counts):
/// pseudo-counts = flux*qe + dark, then the predenoise_frame path.
ImageD predenoise_flux(const ImageD& flux, const SensorParams& params, const DenoiserSpec& spec);

} // namespace quanta
