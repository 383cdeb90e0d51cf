#include "quanta/denoise.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace quanta {

void DenoiserSpec::validate() const {
    if (!(strength >= 0.0) || !std::isfinite(strength))
        throw InputDomainError("denoiser: strength must be >= 0, got " + std::to_string(strength));
    if (patch_radius < 1 || patch_radius > 5)
        throw InputDomainError("denoiser: patch_radius must be in [1, 5]");
    if (search_radius < patch_radius || search_radius > 15)
        throw InputDomainError("denoiser: search_radius must be in [patch_radius, 15]");
    if (!(tv_tolerance > 0.0))
        throw InputDomainError("denoiser: tv_tolerance must be > 0");
    if (tv_max_iterations < 1)
        throw InputDomainError("denoiser: tv_max_iterations must be >= 1");
}

DenoiserSpec DenoiserSpec::from_json(const nlohmann::json& j) {
    DenoiserSpec s;
    const std::string kind = j.value("kind", "non-local-means");
    if (kind == "non-local-means" || kind == "nlm")
        s.kind = DenoiserKind::NonLocalMeans;
    else if (kind == "total-variation" || kind == "tv")
        s.kind = DenoiserKind::TotalVariation;
    else
        throw InputDomainError("denoiser: unknown kind \"" + kind +
                               "\" (expected non-local-means or total-variation)");
    s.strength = j.value("strength", s.strength);
    s.patch_radius = j.value("patch_radius", s.patch_radius);
    s.search_radius = j.value("search_radius", s.search_radius);
    s.tv_tolerance = j.value("tv_tolerance", s.tv_tolerance);
    s.tv_max_iterations = j.value("tv_max_iterations", s.tv_max_iterations);
    s.validate();
    return s;
}

nlohmann::json DenoiserSpec::to_json() const {
    return nlohmann::json{
        {"kind", kind == DenoiserKind::NonLocalMeans ? "non-local-means" : "total-variation"},
        {"strength", strength},
        {"patch_radius", patch_radius},
        {"search_radius", search_radius},
        {"tv_tolerance", tv_tolerance},
        {"tv_max_iterations", tv_max_iterations}};
}

ImageD generalized_anscombe(const ImageD& image, const SensorParams& params, double gain) {
    if (!(gain > 0.0))
        throw InputDomainError("generalized_anscombe: gain must be > 0");
    const double sigma2 = params.read_noise_sigma * params.read_noise_sigma;
    const double offset = 0.375 * gain * gain + sigma2;
    ImageD out = image;
    for (double& v : out.values)
        v = 2.0 * std::sqrt(std::max(v * gain + offset, 0.0)) / gain;
    return out;
}

ImageD generalized_anscombe(const QuantaFrame& frame, const SensorParams& params, double gain) {
    ImageD img(frame.width, frame.height);
    for (size_t i = 0; i < frame.size(); ++i) img[i] = frame.values[i];
    return generalized_anscombe(img, params, gain);
}

ImageD inverse_anscombe(const ImageD& image, const SensorParams& params, double gain) {
    if (!(gain > 0.0))
        throw InputDomainError("inverse_anscombe: gain must be > 0");
    const double sigma2 = params.read_noise_sigma * params.read_noise_sigma;
    const double offset = 0.375 * gain * gain + sigma2;
    ImageD out = image;
    for (double& v : out.values) {
        const double half = v * gain * 0.5;
        v = (half * half - offset) / gain;
    }
    return out;
}

namespace {

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Box sum over (2r+1)^2 patches of a replicate-padded buffer.
void patch_sums(const std::vector<double>& padded, int pw, int ph, int r,
                std::vector<double>& out, int w, int h, std::vector<double>& scratch) {
    scratch.resize(padded.size());
    const int win = 2 * r + 1;
    // rows
    for (int y = 0; y < ph; ++y) {
        const double* row = padded.data() + static_cast<size_t>(y) * pw;
        double* srow = scratch.data() + static_cast<size_t>(y) * pw;
        double s = 0.0;
        for (int x = 0; x < win - 1; ++x) s += row[x];
        for (int x = 0; x + win - 1 < pw; ++x) {
            s += row[x + win - 1];
            srow[x] = s;
            s -= row[x];
        }
    }
    // columns on the row sums
    out.assign(static_cast<size_t>(w) * h, 0.0);
    for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int y = 0; y < win - 1; ++y) s += scratch[static_cast<size_t>(y) * pw + x];
        for (int y = 0; y + win - 1 < ph; ++y) {
            s += scratch[static_cast<size_t>(y + win - 1) * pw + x];
            out[static_cast<size_t>(y) * w + x] = s;
            s -= scratch[static_cast<size_t>(y) * pw + x];
        }
    }
}

ImageD nlm_denoise(const ImageD& img, const DenoiserSpec& spec) {
    const int w = img.width, h = img.height;
    const int pr = spec.patch_radius;
    const int sr = spec.search_radius;
    const double hh = spec.strength * spec.strength;
    const double patch_count = static_cast<double>((2 * pr + 1) * (2 * pr + 1));

    std::vector<double> acc_w(img.size(), 0.0), acc_v(img.size(), 0.0);
    std::vector<double> diff2(static_cast<size_t>(w + 2 * pr) * (h + 2 * pr));
    std::vector<double> dist(img.size()), scratch;
    const int pw = w + 2 * pr, ph = h + 2 * pr;

    for (int dy = -sr; dy <= sr; ++dy) {
        for (int dx = -sr; dx <= sr; ++dx) {
            // squared difference to the shifted image, replicate-padded by pr
            for (int y = -pr; y < h + pr; ++y) {
                const int cy = clampi(y, 0, h - 1);
                const int sy = clampi(y + dy, 0, h - 1);
                double* row = diff2.data() + static_cast<size_t>(y + pr) * pw;
                for (int x = -pr; x < w + pr; ++x) {
                    const int cx = clampi(x, 0, w - 1);
                    const int sx = clampi(x + dx, 0, w - 1);
                    const double d = img.at(cx, cy) - img.at(sx, sy);
                    row[x + pr] = d * d;
                }
            }
            patch_sums(diff2, pw, ph, pr, dist, w, h, scratch);

            for (int y = 0; y < h; ++y) {
                const int sy = clampi(y + dy, 0, h - 1);
                for (int x = 0; x < w; ++x) {
                    const size_t i = static_cast<size_t>(y) * w + x;
                    const double msd = dist[i] / patch_count;
                    double wt;
                    if (hh > 0.0)
                        wt = std::exp(-msd / hh);
                    else
                        wt = msd == 0.0 ? 1.0 : 0.0;
                    acc_w[i] += wt;
                    acc_v[i] += wt * img.at(clampi(x + dx, 0, w - 1), sy);
                }
            }
        }
    }

    ImageD out(w, h);
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = acc_w[i] > 0.0 ? acc_v[i] / acc_w[i] : img[i];
    return out;
}

// Chambolle's dual projection for min_u 0.5*||u - f||^2 + lambda*TV(u).
ImageD tv_denoise(const ImageD& img, const DenoiserSpec& spec) {
    const double lambda = spec.strength;
    if (lambda == 0.0) return img;
    const int w = img.width, h = img.height;
    std::vector<double> px(img.size(), 0.0), py(img.size(), 0.0), div(img.size(), 0.0);
    const double tau = 0.25;

    for (int iter = 0; iter < spec.tv_max_iterations; ++iter) {
        // divergence of p
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const size_t i = static_cast<size_t>(y) * w + x;
                double d = 0.0;
                d += px[i] - (x > 0 ? px[i - 1] : 0.0);
                d += py[i] - (y > 0 ? py[i - w] : 0.0);
                div[i] = d;
            }
        }
        double max_change = 0.0;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const size_t i = static_cast<size_t>(y) * w + x;
                const double val = div[i] - img[i] / lambda;
                const double gx = (x + 1 < w) ? (div[i + 1] - img[i + 1] / lambda) - val : 0.0;
                const double gy = (y + 1 < h) ? (div[i + w] - img[i + w] / lambda) - val : 0.0;
                const double norm = 1.0 + tau * std::sqrt(gx * gx + gy * gy);
                const double nx = (px[i] + tau * gx) / norm;
                const double ny = (py[i] + tau * gy) / norm;
                max_change = std::max(max_change, std::abs(nx - px[i]));
                max_change = std::max(max_change, std::abs(ny - py[i]));
                px[i] = nx;
                py[i] = ny;
            }
        }
        if (max_change < spec.tv_tolerance) break;
    }

    // u = f - lambda * div(p)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            double d = 0.0;
            d += px[i] - (x > 0 ? px[i - 1] : 0.0);
            d += py[i] - (y > 0 ? py[i - w] : 0.0);
            div[i] = d;
        }
    }
    ImageD out(w, h);
    for (size_t i = 0; i < out.size(); ++i) out[i] = img[i] - lambda * div[i];
    return out;
}

} // namespace

ImageD denoise_image(const ImageD& image, const DenoiserSpec& spec) {
    spec.validate();
    if (image.width <= 0 || image.height <= 0)
        throw InputDomainError("denoise_image: empty image");
    for (double v : image.values)
        if (!std::isfinite(v))
            throw NumericalError("denoise_image: non-finite input value");
    return spec.kind == DenoiserKind::NonLocalMeans ? nlm_denoise(image, spec)
                                                    : tv_denoise(image, spec);
}

namespace {

ImageD counts_to_flux_denoised(const ImageD& counts, const SensorParams& params,
                               const DenoiserSpec& spec) {
    const ImageD stabilized = generalized_anscombe(counts, params);
    const ImageD denoised = denoise_image(stabilized, spec);
    ImageD out = inverse_anscombe(denoised, params);
    for (double& v : out.values)
        v = std::max((v - params.dark_current) / params.qe, 0.0);
    return out;
}

} // namespace

ImageD predenoise_frame(const QuantaFrame& frame, const SensorParams& params,
                        const DenoiserSpec& spec) {
    params.validate();
    if (frame.n_bits != params.n_bits)
        throw InputDomainError("predenoise_frame: frame bit depth " + std::to_string(frame.n_bits) +
                               " does not match sensor n_bits " + std::to_string(params.n_bits));
    ImageD counts(frame.width, frame.height);
    for (size_t i = 0; i < frame.size(); ++i) counts[i] = frame.values[i];
    return counts_to_flux_denoised(counts, params, spec);
}

ImageD predenoise_flux(const ImageD& flux, const SensorParams& params, const DenoiserSpec& spec) {
    params.validate();
    // Clamp in the pseudo-count domain, not the flux domain: a flux reading
    // below -dark/qe maps to pseudo-count 0, exactly like a zero raw count.
    ImageD counts = flux;
    for (double& v : counts.values) v = std::max(v * params.qe + params.dark_current, 0.0);
    return counts_to_flux_denoised(counts, params, spec);
}

} // namespace quanta
