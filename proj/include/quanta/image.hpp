#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "quanta/errors.hpp"

namespace quanta {

/// Dense row-major single-channel raster.
template <typename T>
struct Image {
    int width = 0;
    int height = 0;
    std::vector<T> values;

    Image() = default;
    Image(int w, int h, T fill = T{})
        : width(w), height(h), values(static_cast<size_t>(w) * h, fill) {
        if (w <= 0 || h <= 0)
            throw InputDomainError("image dimensions must be positive, got " +
                                   std::to_string(w) + "x" + std::to_string(h));
    }

    size_t size() const { return values.size(); }
    T& at(int x, int y) { return values[static_cast<size_t>(y) * width + x]; }
    const T& at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
    T& operator[](size_t i) { return values[i]; }
    const T& operator[](size_t i) const { return values[i]; }

    bool same_dims(const Image& o) const { return width == o.width && height == o.height; }
};

using ImageD = Image<double>;
using MaskU8 = Image<uint8_t>;

/// Expected photo-electrons per pixel per frame (the latent clean signal).
using FluxImage = ImageD;

/// Integer low-bit sensor readout, every value in [0, 2^n_bits - 1].
struct QuantaFrame {
    int width = 0;
    int height = 0;
    int n_bits = 0;
    std::vector<uint16_t> values;

    QuantaFrame() = default;
    QuantaFrame(int w, int h, int bits)
        : width(w), height(h), n_bits(bits), values(static_cast<size_t>(w) * h, 0) {}

    size_t size() const { return values.size(); }
    uint16_t& at(int x, int y) { return values[static_cast<size_t>(y) * width + x]; }
    const uint16_t& at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
    int max_value() const { return (1 << n_bits) - 1; }
};

struct FluxVideo {
    std::vector<FluxImage> frames;

    FluxVideo() = default;
    explicit FluxVideo(std::vector<FluxImage> f) : frames(std::move(f)) {}

    size_t frame_count() const { return frames.size(); }
    int width() const { return frames.empty() ? 0 : frames.front().width; }
    int height() const { return frames.empty() ? 0 : frames.front().height; }
};

struct QuantaBurst {
    std::vector<QuantaFrame> frames;

    size_t frame_count() const { return frames.size(); }
    int width() const { return frames.empty() ? 0 : frames.front().width; }
    int height() const { return frames.empty() ? 0 : frames.front().height; }
};

/// Grayscale clip as stored on disk. Frames hold either [0,1] normalized
/// intensities or small integer counts, depending on provenance.
struct VideoClip {
    std::vector<ImageD> frames;
    double frame_rate = 0.0;
    std::map<std::string, std::string> metadata;

    size_t frame_count() const { return frames.size(); }
    int width() const { return frames.empty() ? 0 : frames.front().width; }
    int height() const { return frames.empty() ? 0 : frames.front().height; }
};

inline void check_same_dims(const ImageD& a, const ImageD& b, const char* what) {
    if (!a.same_dims(b))
        throw InputDomainError(std::string(what) + ": dimension mismatch, " +
                               std::to_string(a.width) + "x" + std::to_string(a.height) +
                               " vs " + std::to_string(b.width) + "x" + std::to_string(b.height));
}

/// Rejects negative or non-finite flux, naming the first offending pixel.
inline void check_flux(const FluxImage& flux, const char* what) {
    for (int y = 0; y < flux.height; ++y) {
        for (int x = 0; x < flux.width; ++x) {
            const double v = flux.at(x, y);
            if (!std::isfinite(v) || v < 0.0)
                throw InputDomainError(std::string(what) + ": invalid flux value " +
                                       std::to_string(v) + " at pixel (" + std::to_string(x) +
                                       "," + std::to_string(y) + ")");
        }
    }
}

inline double image_mean(const ImageD& img) {
    double s = 0.0;
    for (double v : img.values) s += v;
    return img.size() ? s / static_cast<double>(img.size()) : 0.0;
}

inline double image_max(const ImageD& img) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : img.values) m = std::max(m, v);
    return m;
}

} // namespace quanta
