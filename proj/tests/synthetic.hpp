#pragma once

// Synthetic-scene builders shared by the test suites: smooth band-limited
// wave patterns whose inter-frame motion is an exact global pan, so flow
// recovery and reconstruction quality can be scored against known ground
// truth without any image assets.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "quanta/image.hpp"

namespace testutil {

struct Wave {
    double fx, fy, phase, amplitude;
};

inline std::vector<Wave> make_waves(uint64_t seed, int count, double max_frequency) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> freq(0.01, max_frequency);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> sign(-1.0, 1.0);
    std::vector<Wave> waves(count);
    for (auto& w : waves) {
        w.fx = freq(gen) * (sign(gen) < 0 ? -1.0 : 1.0);
        w.fy = freq(gen) * (sign(gen) < 0 ? -1.0 : 1.0);
        w.phase = phase(gen);
        w.amplitude = 1.0 / count;
    }
    return waves;
}

inline double wave_value(const std::vector<Wave>& waves, double x, double y) {
    double v = 0.0;
    for (const auto& w : waves)
        v += w.amplitude * std::cos(2.0 * std::numbers::pi * (w.fx * x + w.fy * y) + w.phase);
    return 0.5 + 0.45 * v * static_cast<double>(waves.size()) /
                     std::sqrt(static_cast<double>(waves.size()));
}

/// One band-limited frame with values in (0, 1), sampled at an optional
/// subpixel offset so translated copies are exactly consistent.
inline quanta::ImageD wave_image(int width, int height, uint64_t seed, double max_frequency,
                                 double shift_x = 0.0, double shift_y = 0.0) {
    const std::vector<Wave> waves = make_waves(seed, 6, max_frequency);
    quanta::ImageD img(width, height);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            img.at(x, y) =
                std::clamp(wave_value(waves, x + shift_x, y + shift_y), 0.0, 1.0);
    return img;
}

/// Panning clip: frame t samples the scene at (x + pan_x * t, y + pan_y * t),
/// so ground-truth flow between consecutive frames is exactly (pan_x, pan_y).
inline quanta::FluxVideo wave_clip(int width, int height, int frames, double pan_x, double pan_y,
                                   uint64_t seed, double max_frequency) {
    const std::vector<Wave> waves = make_waves(seed, 6, max_frequency);
    quanta::FluxVideo video;
    video.frames.reserve(static_cast<size_t>(frames));
    for (int t = 0; t < frames; ++t) {
        quanta::ImageD frame(width, height);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                frame.at(x, y) = std::clamp(
                    wave_value(waves, x + pan_x * t, y + pan_y * t), 0.0, 1.0);
        video.frames.push_back(std::move(frame));
    }
    return video;
}

} // namespace testutil
