#pragma once

#include <filesystem>
#include <vector>

#include "quanta/image.hpp"

namespace quanta {

/// Dense per-pixel displacement in pixels. flow(p) points from a pixel in
/// the field's own frame to the matching location in the other frame.
struct FlowField {
    int width = 0;
    int height = 0;
    std::vector<double> u;
    std::vector<double> v;

    FlowField() = default;
    FlowField(int w, int h)
        : width(w), height(h), u(static_cast<size_t>(w) * h, 0.0),
          v(static_cast<size_t>(w) * h, 0.0) {}

    size_t size() const { return u.size(); }
};

/// Levels of 2x-decimated, Gaussian-smoothed images; level 0 is full resolution.
struct ImagePyramid {
    std::vector<ImageD> levels;
};

struct FlowConfig {
    int levels = 4;
    int iterations = 3;      ///< refinement iterations per level
    int window_radius = 3;   ///< 7x7 Lucas-Kanade window
    double damping = 1e-3;   ///< Tikhonov term on the structure tensor
    bool chain = false;      ///< compose consecutive flows instead of direct estimation
};

/// Largest level count such that the coarsest level keeps min dimension >= 8.
int max_pyramid_levels(int width, int height);

/// Gaussian blur (sigma 1.0) then 2x decimation per level; level dims are
/// ceil(previous / 2).
ImagePyramid build_pyramid(const ImageD& image, int levels);

/// Coarse-to-fine iterative Lucas-Kanade. The result maps reference
/// coordinates into the target: warp_bilinear(target, flow) ~= reference.
FlowField estimate_flow(const ImageD& reference, const ImageD& target, const FlowConfig& cfg);
FlowField estimate_flow(const ImageD& reference, const ImageD& target, int levels, int iterations);

struct WarpResult {
    ImageD image;
    MaskU8 valid; ///< 0 where the sample point fell outside the source image
};

/// output(p) = bilinear sample of image at p + flow(p); out-of-bounds samples
/// clamp to the edge and are flagged invalid in the mask.
WarpResult warp_bilinear(const ImageD& image, const FlowField& flow);

/// Catmull-Rom sampled warp: sharper than bilinear at subpixel offsets, with
/// the result clamped to the local 4x4 tap range to suppress ringing. Same
/// validity semantics as warp_bilinear.
WarpResult warp_catmull_rom(const ImageD& image, const FlowField& flow);

/// a_to_b followed by b_to_c: result(p) = a_to_b(p) + b_to_c(p + a_to_b(p)).
FlowField compose_flows(const FlowField& a_to_b, const FlowField& b_to_c);

/// One flow per non-reference frame (ascending frame index, reference
/// skipped), each mapping reference coordinates into that frame. With
/// cfg.chain, consecutive-frame flows are estimated once and composed
/// outward from the reference.
std::vector<FlowField> bidirectional_flows(const std::vector<ImageD>& frames, int reference_index,
                                           const FlowConfig& cfg);

/// Raw debug dump: little-endian {u32 width, u32 height, f32 u-plane, f32 v-plane}.
void write_flow(const FlowField& flow, const std::filesystem::path& path);
FlowField read_flow(const std::filesystem::path& path);

} // namespace quanta
