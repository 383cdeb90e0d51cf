#include "quanta/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace quanta {

namespace {

// Sampled Gaussian, sigma 1.0, radius 3, normalized.
struct Blur7 {
    double w[7];
    Blur7() {
        double s = 0.0;
        for (int k = -3; k <= 3; ++k) {
            w[k + 3] = std::exp(-0.5 * k * k);
            s += w[k + 3];
        }
        for (double& x : w) x /= s;
    }
};

const Blur7 kBlur;

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

ImageD gaussian_blur(const ImageD& img) {
    ImageD tmp(img.width, img.height);
    ImageD out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double s = 0.0;
            for (int k = -3; k <= 3; ++k)
                s += kBlur.w[k + 3] * img.at(clampi(x + k, 0, img.width - 1), y);
            tmp.at(x, y) = s;
        }
    }
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double s = 0.0;
            for (int k = -3; k <= 3; ++k)
                s += kBlur.w[k + 3] * tmp.at(x, clampi(y + k, 0, img.height - 1));
            out.at(x, y) = s;
        }
    }
    return out;
}

ImageD decimate2(const ImageD& img) {
    const int w = (img.width + 1) / 2;
    const int h = (img.height + 1) / 2;
    ImageD out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out.at(x, y) = img.at(2 * x, 2 * y);
    return out;
}

// Bilinear resize of a flow component to new dims, values scaled by 2.
std::vector<double> upsample_component(const std::vector<double>& src, int sw, int sh, int dw, int dh) {
    std::vector<double> dst(static_cast<size_t>(dw) * dh);
    const double sx = dw > 1 ? static_cast<double>(sw - 1) / (dw - 1) : 0.0;
    const double sy = dh > 1 ? static_cast<double>(sh - 1) / (dh - 1) : 0.0;
    for (int y = 0; y < dh; ++y) {
        const double fy = y * sy;
        const int y0 = clampi(static_cast<int>(fy), 0, sh - 1);
        const int y1 = clampi(y0 + 1, 0, sh - 1);
        const double ay = fy - y0;
        for (int x = 0; x < dw; ++x) {
            const double fx = x * sx;
            const int x0 = clampi(static_cast<int>(fx), 0, sw - 1);
            const int x1 = clampi(x0 + 1, 0, sw - 1);
            const double ax = fx - x0;
            const double v00 = src[static_cast<size_t>(y0) * sw + x0];
            const double v10 = src[static_cast<size_t>(y0) * sw + x1];
            const double v01 = src[static_cast<size_t>(y1) * sw + x0];
            const double v11 = src[static_cast<size_t>(y1) * sw + x1];
            dst[static_cast<size_t>(y) * dw + x] =
                2.0 * ((1 - ay) * ((1 - ax) * v00 + ax * v10) + ay * ((1 - ax) * v01 + ax * v11));
        }
    }
    return dst;
}

// Sliding box sum along rows then columns, windows truncated at borders.
void box_sum(std::vector<double>& img, int w, int h, int radius, std::vector<double>& scratch) {
    scratch.resize(img.size());
    for (int y = 0; y < h; ++y) {
        const double* row = img.data() + static_cast<size_t>(y) * w;
        double* out = scratch.data() + static_cast<size_t>(y) * w;
        double s = 0.0;
        for (int x = 0; x <= radius && x < w; ++x) s += row[x];
        out[0] = s;
        for (int x = 1; x < w; ++x) {
            if (x + radius < w) s += row[x + radius];
            if (x - radius - 1 >= 0) s -= row[x - radius - 1];
            out[x] = s;
        }
    }
    for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int y = 0; y <= radius && y < h; ++y) s += scratch[static_cast<size_t>(y) * w + x];
        img[x] = s;
        for (int y = 1; y < h; ++y) {
            if (y + radius < h) s += scratch[static_cast<size_t>(y + radius) * w + x];
            if (y - radius - 1 >= 0) s -= scratch[static_cast<size_t>(y - radius - 1) * w + x];
            img[static_cast<size_t>(y) * w + x] = s;
        }
    }
}

// In-place separable blur (same sigma-1 kernel as the pyramid) on one flow
// component, replicate borders. Constants, and in particular the all-zero
// field, are exact fixed points.
void smooth_component(std::vector<double>& comp, int w, int h, std::vector<double>& scratch) {
    scratch.resize(comp.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int k = -3; k <= 3; ++k)
                s += kBlur.w[k + 3] * comp[static_cast<size_t>(y) * w + clampi(x + k, 0, w - 1)];
            scratch[static_cast<size_t>(y) * w + x] = s;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int k = -3; k <= 3; ++k)
                s += kBlur.w[k + 3] * scratch[static_cast<size_t>(clampi(y + k, 0, h - 1)) * w + x];
            comp[static_cast<size_t>(y) * w + x] = s;
        }
}

// One Lucas-Kanade refinement pass at a single pyramid level: re-warp the
// target, solve the damped 7x7 normal equations per pixel, then smooth the
// flow field. The smoothing is load-bearing, not cosmetic: iterating the raw
// per-pixel solves diverges, because the box window's frequency response has
// negative lobes, so mid-frequency flow ripple is over-corrected and grows
// by roughly 2x per pass. A sigma-1 blur of the field damps exactly those
// frequencies while leaving the (globally smooth) motion untouched.
void lk_refine(const ImageD& ref, const ImageD& tgt, FlowField& flow, int window_radius,
               double damping) {
    const int w = ref.width, h = ref.height;
    const WarpResult warped = warp_bilinear(tgt, flow);

    std::vector<double> sxx(flow.size()), sxy(flow.size()), syy(flow.size()), sxt(flow.size()),
        syt(flow.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            const double ix = 0.5 * (warped.image.at(clampi(x + 1, 0, w - 1), y) -
                                     warped.image.at(clampi(x - 1, 0, w - 1), y));
            const double iy = 0.5 * (warped.image.at(x, clampi(y + 1, 0, h - 1)) -
                                     warped.image.at(x, clampi(y - 1, 0, h - 1)));
            const double it = warped.image[i] - ref[i];
            // Out-of-bounds warp samples carry edge-clamped values, not
            // data; letting them into the sums blows up the border flow,
            // and the smoothing pass would then drag that error inward.
            const double ok = warped.valid[i] ? 1.0 : 0.0;
            sxx[i] = ok * ix * ix;
            sxy[i] = ok * ix * iy;
            syy[i] = ok * iy * iy;
            sxt[i] = ok * ix * it;
            syt[i] = ok * iy * it;
        }
    }
    std::vector<double> scratch;
    box_sum(sxx, w, h, window_radius, scratch);
    box_sum(sxy, w, h, window_radius, scratch);
    box_sum(syy, w, h, window_radius, scratch);
    box_sum(sxt, w, h, window_radius, scratch);
    box_sum(syt, w, h, window_radius, scratch);

    for (size_t i = 0; i < flow.size(); ++i) {
        // A pixel whose own sample left the image has no residual of its
        // own; solving its lopsided window tends to oscillate. Its flow is
        // carried outward from valid neighbors by the smoothing instead.
        if (!warped.valid[i]) continue;
        const double a = sxx[i] + damping;
        const double b = sxy[i];
        const double c = syy[i] + damping;
        const double det = a * c - b * b;
        if (det <= 0.0) continue;
        // solve [a b; b c] d = -[sxt; syt]
        const double du = (-sxt[i] * c + syt[i] * b) / det;
        const double dv = (-a * syt[i] + b * sxt[i]) / det;
        // Under-relax: border windows see one-sided data and their full
        // Gauss-Newton step overshoots, flipping sign every pass. 3/4 of
        // the step breaks that period-2 cycle and still converges in the
        // two-three iterations the defaults allow. Steps beyond the window
        // are outside the linearization's reach entirely; cap them.
        constexpr double relax = 0.75;
        const double cap = static_cast<double>(window_radius);
        flow.u[i] += std::clamp(relax * du, -cap, cap);
        flow.v[i] += std::clamp(relax * dv, -cap, cap);
    }

    smooth_component(flow.u, w, h, scratch);
    smooth_component(flow.v, w, h, scratch);
}

} // namespace

int max_pyramid_levels(int width, int height) {
    int levels = 1;
    int w = width, h = height;
    while (true) {
        const int nw = (w + 1) / 2, nh = (h + 1) / 2;
        if (std::min(nw, nh) < 8) break;
        w = nw;
        h = nh;
        ++levels;
    }
    return levels;
}

ImagePyramid build_pyramid(const ImageD& image, int levels) {
    if (levels < 1)
        throw InputDomainError("build_pyramid: levels must be >= 1");
    if (image.width <= 0 || image.height <= 0)
        throw InputDomainError("build_pyramid: empty image");
    if (levels > max_pyramid_levels(image.width, image.height))
        throw InputDomainError("build_pyramid: " + std::to_string(levels) +
                               " levels leaves coarsest dimension below 8 for " +
                               std::to_string(image.width) + "x" + std::to_string(image.height));
    ImagePyramid pyr;
    pyr.levels.push_back(image);
    for (int l = 1; l < levels; ++l)
        pyr.levels.push_back(decimate2(gaussian_blur(pyr.levels.back())));
    return pyr;
}

WarpResult warp_bilinear(const ImageD& image, const FlowField& flow) {
    if (image.width != flow.width || image.height != flow.height)
        throw InputDomainError("warp_bilinear: flow/image dimension mismatch");
    const int w = image.width, h = image.height;
    WarpResult res{ImageD(w, h), MaskU8(w, h, 1)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            double sx = x + flow.u[i];
            double sy = y + flow.v[i];
            if (sx < 0.0 || sx > w - 1 || sy < 0.0 || sy > h - 1) {
                res.valid[i] = 0;
                sx = std::min(static_cast<double>(w - 1), std::max(0.0, sx));
                sy = std::min(static_cast<double>(h - 1), std::max(0.0, sy));
            }
            const int x0 = static_cast<int>(sx);
            const int y0 = static_cast<int>(sy);
            const int x1 = std::min(x0 + 1, w - 1);
            const int y1 = std::min(y0 + 1, h - 1);
            const double ax = sx - x0;
            const double ay = sy - y0;
            res.image[i] = (1 - ay) * ((1 - ax) * image.at(x0, y0) + ax * image.at(x1, y0)) +
                           ay * ((1 - ax) * image.at(x0, y1) + ax * image.at(x1, y1));
        }
    }
    return res;
}

WarpResult warp_catmull_rom(const ImageD& image, const FlowField& flow) {
    if (image.width != flow.width || image.height != flow.height)
        throw InputDomainError("warp_catmull_rom: flow/image dimension mismatch");
    const int w = image.width, h = image.height;
    WarpResult res{ImageD(w, h), MaskU8(w, h, 1)};
    const auto kernel = [](double d, double k[4]) {
        // Catmull-Rom weights for the four taps around fractional offset d.
        const double d2 = d * d, d3 = d2 * d;
        k[0] = 0.5 * (-d3 + 2.0 * d2 - d);
        k[1] = 0.5 * (3.0 * d3 - 5.0 * d2 + 2.0);
        k[2] = 0.5 * (-3.0 * d3 + 4.0 * d2 + d);
        k[3] = 0.5 * (d3 - d2);
    };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            double sx = x + flow.u[i];
            double sy = y + flow.v[i];
            if (sx < 0.0 || sx > w - 1 || sy < 0.0 || sy > h - 1) {
                res.valid[i] = 0;
                sx = std::min(static_cast<double>(w - 1), std::max(0.0, sx));
                sy = std::min(static_cast<double>(h - 1), std::max(0.0, sy));
            }
            const int x0 = static_cast<int>(sx);
            const int y0 = static_cast<int>(sy);
            double kx[4], ky[4];
            kernel(sx - x0, kx);
            kernel(sy - y0, ky);
            double value = 0.0;
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (int dy = -1; dy <= 2; ++dy) {
                const int yy = std::clamp(y0 + dy, 0, h - 1);
                double row = 0.0;
                for (int dx = -1; dx <= 2; ++dx) {
                    const int xx = std::clamp(x0 + dx, 0, w - 1);
                    const double v = image.at(xx, yy);
                    row += kx[dx + 1] * v;
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
                value += ky[dy + 1] * row;
            }
            res.image[i] = std::clamp(value, lo, hi);
        }
    }
    return res;
}

FlowField estimate_flow(const ImageD& reference, const ImageD& target, const FlowConfig& cfg) {
    check_same_dims(reference, target, "estimate_flow");
    if (cfg.iterations < 1)
        throw InputDomainError("estimate_flow: iterations must be >= 1");

    const ImagePyramid pr = build_pyramid(reference, cfg.levels);
    const ImagePyramid pt = build_pyramid(target, cfg.levels);

    FlowField flow(pr.levels.back().width, pr.levels.back().height);
    for (int l = cfg.levels - 1; l >= 0; --l) {
        const ImageD& r = pr.levels[l];
        const ImageD& t = pt.levels[l];
        if (flow.width != r.width || flow.height != r.height) {
            FlowField up(r.width, r.height);
            up.u = upsample_component(flow.u, flow.width, flow.height, r.width, r.height);
            up.v = upsample_component(flow.v, flow.width, flow.height, r.width, r.height);
            flow = std::move(up);
        }
        for (int it = 0; it < cfg.iterations; ++it)
            lk_refine(r, t, flow, cfg.window_radius, cfg.damping);
    }
    return flow;
}

FlowField estimate_flow(const ImageD& reference, const ImageD& target, int levels, int iterations) {
    FlowConfig cfg;
    cfg.levels = levels;
    cfg.iterations = iterations;
    return estimate_flow(reference, target, cfg);
}

FlowField compose_flows(const FlowField& a_to_b, const FlowField& b_to_c) {
    if (a_to_b.width != b_to_c.width || a_to_b.height != b_to_c.height)
        throw InputDomainError("compose_flows: dimension mismatch");
    const int w = a_to_b.width, h = a_to_b.height;
    FlowField out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            double sx = x + a_to_b.u[i];
            double sy = y + a_to_b.v[i];
            sx = std::min(static_cast<double>(w - 1), std::max(0.0, sx));
            sy = std::min(static_cast<double>(h - 1), std::max(0.0, sy));
            const int x0 = static_cast<int>(sx);
            const int y0 = static_cast<int>(sy);
            const int x1 = std::min(x0 + 1, w - 1);
            const int y1 = std::min(y0 + 1, h - 1);
            const double ax = sx - x0;
            const double ay = sy - y0;
            const size_t i00 = static_cast<size_t>(y0) * w + x0;
            const size_t i10 = static_cast<size_t>(y0) * w + x1;
            const size_t i01 = static_cast<size_t>(y1) * w + x0;
            const size_t i11 = static_cast<size_t>(y1) * w + x1;
            const double bu = (1 - ay) * ((1 - ax) * b_to_c.u[i00] + ax * b_to_c.u[i10]) +
                              ay * ((1 - ax) * b_to_c.u[i01] + ax * b_to_c.u[i11]);
            const double bv = (1 - ay) * ((1 - ax) * b_to_c.v[i00] + ax * b_to_c.v[i10]) +
                              ay * ((1 - ax) * b_to_c.v[i01] + ax * b_to_c.v[i11]);
            out.u[i] = a_to_b.u[i] + bu;
            out.v[i] = a_to_b.v[i] + bv;
        }
    }
    return out;
}

std::vector<FlowField> bidirectional_flows(const std::vector<ImageD>& frames, int reference_index,
                                           const FlowConfig& cfg) {
    const int n = static_cast<int>(frames.size());
    if (n == 0)
        throw InputDomainError("bidirectional_flows: empty burst");
    if (reference_index < 0 || reference_index >= n)
        throw InputDomainError("bidirectional_flows: reference index " +
                               std::to_string(reference_index) + " outside [0, " +
                               std::to_string(n - 1) + "]");
    for (int i = 1; i < n; ++i) check_same_dims(frames[0], frames[i], "bidirectional_flows");

    std::vector<FlowField> flows;
    flows.reserve(n > 0 ? n - 1 : 0);

    if (!cfg.chain) {
        for (int k = 0; k < n; ++k) {
            if (k == reference_index) continue;
            flows.push_back(estimate_flow(frames[reference_index], frames[k], cfg));
        }
        return flows;
    }

    // Consecutive flows f[i]: frame-i coordinates into frame i+1.
    std::vector<FlowField> fwd(n > 1 ? n - 1 : 0);
    std::vector<FlowField> bwd(n > 1 ? n - 1 : 0); // bwd[i]: frame i+1 -> frame i
    for (int i = 0; i + 1 < n; ++i) {
        fwd[i] = estimate_flow(frames[i], frames[i + 1], cfg);
        bwd[i] = estimate_flow(frames[i + 1], frames[i], cfg);
    }

    std::vector<FlowField> to_frame(n); // reference coords -> frame k
    to_frame[reference_index] = FlowField(frames[0].width, frames[0].height);
    for (int k = reference_index + 1; k < n; ++k)
        to_frame[k] = compose_flows(to_frame[k - 1], fwd[k - 1]);
    for (int k = reference_index - 1; k >= 0; --k)
        to_frame[k] = compose_flows(to_frame[k + 1], bwd[k]);

    for (int k = 0; k < n; ++k)
        if (k != reference_index) flows.push_back(std::move(to_frame[k]));
    return flows;
}

void write_flow(const FlowField& flow, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw IoError("write_flow: cannot open " + path.string());
    const uint32_t w = static_cast<uint32_t>(flow.width);
    const uint32_t h = static_cast<uint32_t>(flow.height);
    f.write(reinterpret_cast<const char*>(&w), 4);
    f.write(reinterpret_cast<const char*>(&h), 4);
    std::vector<float> plane(flow.size());
    for (size_t i = 0; i < flow.size(); ++i) plane[i] = static_cast<float>(flow.u[i]);
    f.write(reinterpret_cast<const char*>(plane.data()), static_cast<std::streamsize>(plane.size() * 4));
    for (size_t i = 0; i < flow.size(); ++i) plane[i] = static_cast<float>(flow.v[i]);
    f.write(reinterpret_cast<const char*>(plane.data()), static_cast<std::streamsize>(plane.size() * 4));
    if (!f)
        throw IoError("write_flow: short write to " + path.string());
}

FlowField read_flow(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw IoError("read_flow: cannot open " + path.string());
    uint32_t w = 0, h = 0;
    f.read(reinterpret_cast<char*>(&w), 4);
    f.read(reinterpret_cast<char*>(&h), 4);
    if (!f || w == 0 || h == 0)
        throw IoError("read_flow: bad header in " + path.string());
    FlowField flow(static_cast<int>(w), static_cast<int>(h));
    std::vector<float> plane(flow.size());
    f.read(reinterpret_cast<char*>(plane.data()), static_cast<std::streamsize>(plane.size() * 4));
    for (size_t i = 0; i < flow.size(); ++i) flow.u[i] = plane[i];
    f.read(reinterpret_cast<char*>(plane.data()), static_cast<std::streamsize>(plane.size() * 4));
    for (size_t i = 0; i < flow.size(); ++i) flow.v[i] = plane[i];
    if (!f)
        throw IoError("read_flow: truncated file " + path.string());
    return flow;
}

} // namespace quanta
