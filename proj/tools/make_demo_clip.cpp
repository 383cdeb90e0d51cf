// Generates a smooth, band-limited panning test clip as a PGM sequence.
// Frames sample a fixed sum of random-phase sinusoids at subpixel offsets,
// so the inter-frame motion is exactly the requested pan.

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "quanta/errors.hpp"
#include "quanta/image.hpp"
#include "quanta/video_io.hpp"

namespace {

struct Wave {
    double fx, fy, phase, amplitude;
};

std::vector<Wave> make_waves(uint64_t seed, int count, double max_frequency) {
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

double scene_value(const std::vector<Wave>& waves, double x, double y) {
    double v = 0.0;
    for (const auto& w : waves)
        v += w.amplitude * std::cos(2.0 * std::numbers::pi * (w.fx * x + w.fy * y) + w.phase);
    return 0.5 + 0.45 * v * static_cast<double>(waves.size()) /
                     std::sqrt(static_cast<double>(waves.size()));
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Render a smooth panning grayscale clip as a PGM sequence"};
    std::string out;
    int width = 96, height = 96, frames = 11, bit_depth = 16;
    double pan_x = 3.0, pan_y = 0.0, max_frequency = 0.06;
    uint64_t seed = 7;
    app.add_option("--out", out, "output directory")->required();
    app.add_option("--width", width, "frame width");
    app.add_option("--height", height, "frame height");
    app.add_option("--frames", frames, "frame count");
    app.add_option("--pan-x", pan_x, "horizontal pan in pixels per frame");
    app.add_option("--pan-y", pan_y, "vertical pan in pixels per frame");
    app.add_option("--seed", seed, "scene seed");
    app.add_option("--fmax", max_frequency, "maximum scene frequency in cycles per pixel");
    app.add_option("--bit-depth", bit_depth, "8 or 16")->check(CLI::IsMember({8, 16}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? quanta::exit_code::ok : quanta::exit_code::config;
    }

    try {
        if (width < 8 || height < 8 || frames < 1)
            throw quanta::InputDomainError("clip must be at least 8x8 with one frame");
        const std::vector<Wave> waves = make_waves(seed, 6, max_frequency);
        quanta::VideoClip clip;
        clip.frames.reserve(frames);
        for (int t = 0; t < frames; ++t) {
            quanta::ImageD frame(width, height);
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x)
                    frame.at(x, y) = std::clamp(
                        scene_value(waves, x + pan_x * t, y + pan_y * t), 0.0, 1.0);
            clip.frames.push_back(std::move(frame));
        }
        const size_t clamped = quanta::write_image_sequence(clip, out, bit_depth);
        std::printf("wrote %d frames (%dx%d, %d-bit) to %s\n", frames, width, height, bit_depth,
                    out.c_str());
        if (clamped > 0)
            std::fprintf(stderr, "warning: %zu values clamped while writing\n", clamped);
        return quanta::exit_code::ok;
    } catch (const quanta::InputDomainError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return quanta::exit_code::config;
    } catch (const quanta::IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return quanta::exit_code::io;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return quanta::exit_code::unexpected;
    }
}
