#pragma once

#include <string>
#include <vector>

#include "quanta/image.hpp"

#include <nlohmann/json_fwd.hpp>

namespace quanta {

struct FlowField;

/// 10*log10(peak^2 / MSE). Identical images return +infinity.
double psnr(const ImageD& reference, const ImageD& test, double peak = 1.0);

/// Single-scale SSIM: 11x11 Gaussian window sigma 1.5, K1 = 0.01, K2 = 0.03,
/// averaged over window positions fully inside the image. Inputs are expected
/// in [0, 1]; images smaller than the window are rejected.
double ssim(const ImageD& reference, const ImageD& test);

/// Anisotropic total variation: sum of |forward x-difference| + |forward y-difference|.
double total_variation(const ImageD& image);

/// Mean masked |frame_k - warp(frame_{k+1}, flows[k])| over consecutive pairs;
/// flows[k] maps frame-k coordinates into frame k+1.
double temporal_consistency(const std::vector<ImageD>& video, const std::vector<FlowField>& flows);

/// PSNR/SSIM on flux images: both are normalized by the ground-truth max and
/// clamped to [0, 1] first, so numbers are comparable across methods.
double psnr_flux(const ImageD& reference_flux, const ImageD& test_flux);
double ssim_flux(const ImageD& reference_flux, const ImageD& test_flux);

struct MetricRow {
    std::string method;
    double ppp = 0.0;
    int frame = 0;
    double psnr = 0.0;
    double ssim = 0.0;
    double tv = 0.0;
    double temporal = std::numeric_limits<double>::quiet_NaN();
};

/// Per-frame metric rows plus their means, serializable to JSON and CSV with
/// stable column order {method, ppp, frame, psnr, ssim, tv, temporal}.
struct MetricReport {
    std::vector<MetricRow> rows;

    double mean_psnr() const;
    double mean_ssim() const;

    nlohmann::json to_json() const;
    static std::string csv_header();
    std::string to_csv() const;
};

} // namespace quanta
