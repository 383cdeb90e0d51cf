#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "quanta/errors.hpp"
#include "quanta/flow.hpp"

#include "synthetic.hpp"

using namespace quanta;

namespace {

/// Mean endpoint error against a constant ground-truth displacement,
/// measured away from the borders where warping has no data.
double mean_epe(const FlowField& flow, double tu, double tv, int margin) {
    double total = 0.0;
    size_t count = 0;
    for (int y = margin; y < flow.height - margin; ++y)
        for (int x = margin; x < flow.width - margin; ++x) {
            const size_t i = static_cast<size_t>(y) * flow.width + x;
            total += std::hypot(flow.u[i] - tu, flow.v[i] - tv);
            ++count;
        }
    return total / static_cast<double>(count);
}

double max_abs_flow(const FlowField& flow) {
    double m = 0.0;
    for (size_t i = 0; i < flow.size(); ++i)
        m = std::max({m, std::abs(flow.u[i]), std::abs(flow.v[i])});
    return m;
}

/// Mean |warp(target, flow) - reference| over pixels the warp marked valid.
double warp_residual(const ImageD& reference, const ImageD& target, const FlowField& flow) {
    const WarpResult w = warp_bilinear(target, flow);
    double total = 0.0;
    size_t count = 0;
    for (size_t i = 0; i < reference.size(); ++i)
        if (w.valid[i]) {
            total += std::abs(w.image[i] - reference[i]);
            ++count;
        }
    return total / static_cast<double>(count);
}

} // namespace

TEST_SUITE("flow") {

TEST_CASE("pyramid levels halve with ceiling dimensions") {
    const ImageD img = testutil::wave_image(256, 256, 1, 0.05);
    const ImagePyramid pyr = build_pyramid(img, 4);
    REQUIRE(pyr.levels.size() == 4);
    const int w[] = {256, 128, 64, 32};
    for (int l = 0; l < 4; ++l) {
        CHECK(pyr.levels[l].width == w[l]);
        CHECK(pyr.levels[l].height == w[l]);
    }

    // odd dimensions round up
    const ImagePyramid odd = build_pyramid(ImageD(49, 35, 0.5), 2);
    CHECK(odd.levels[1].width == 25);
    CHECK(odd.levels[1].height == 18);
}

TEST_CASE("constants survive every pyramid level") {
    const ImagePyramid pyr = build_pyramid(ImageD(64, 48, 0.37), 3);
    for (const auto& level : pyr.levels)
        for (double v : level.values) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("impulse spreads by exactly the separable blur kernel") {
    // Level 1 = blur(sigma 1, radius 3, normalized, sampled) then 2x
    // decimation at even coordinates. An impulse at an even coordinate pair
    // keeps the kernel's center weight at the decimated location.
    ImageD img(64, 64, 0.0);
    img.at(32, 32) = 1.0;
    const ImagePyramid pyr = build_pyramid(img, 2);

    double g[7], gsum = 0.0;
    for (int k = -3; k <= 3; ++k) {
        g[k + 3] = std::exp(-0.5 * k * k);
        gsum += g[k + 3];
    }
    const double center = (g[3] / gsum) * (g[3] / gsum);
    CHECK(pyr.levels[1].at(16, 16) == doctest::Approx(center).epsilon(1e-12));
    // the blur conserves mass at level 0
    double sum = 0.0;
    for (double v : pyr.levels[0].values) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("too many pyramid levels for the image size is an error") {
    CHECK(max_pyramid_levels(256, 256) == 6); // 256 -> 8 after 5 halvings
    CHECK_NOTHROW(build_pyramid(ImageD(256, 256, 0.0), 6));
    CHECK_THROWS_AS(build_pyramid(ImageD(256, 256, 0.0), 7), InputDomainError);
    CHECK_THROWS_AS(build_pyramid(ImageD(64, 64, 0.0), 0), InputDomainError);
}

TEST_CASE("flow of an image against itself is zero") {
    const ImageD img = testutil::wave_image(128, 128, 3, 0.06);
    const FlowField flow = estimate_flow(img, img, 4, 3);
    CHECK(max_abs_flow(flow) < 0.05);
}

TEST_CASE("integer translation (3,-2) is recovered under 0.5 px") {
    // Target shifted by (3,-2): the scene point at reference pixel p sits at
    // p + (3,-2) in the target sampling grid used below.
    const ImageD ref = testutil::wave_image(256, 256, 7, 0.05);
    const ImageD target = testutil::wave_image(256, 256, 7, 0.05, -3.0, 2.0);
    const FlowField flow = estimate_flow(ref, target, 4, 3);
    CHECK(mean_epe(flow, 3.0, -2.0, 16) < 0.5);
    // median-style check via the warp: residual must be small
    CHECK(warp_residual(ref, target, flow) < 0.01);
}

TEST_CASE("subpixel translation (0.5,0) is recovered under 0.3 px") {
    const ImageD ref = testutil::wave_image(256, 256, 11, 0.04);
    const ImageD target = testutil::wave_image(256, 256, 11, 0.04, -0.5, 0.0);
    const FlowField flow = estimate_flow(ref, target, 4, 3);
    CHECK(mean_epe(flow, 0.5, 0.0, 16) < 0.3);
}

TEST_CASE("recovered pan stays within 0.5 px for |t| up to 4") {
    for (double t : {-4.0, -2.5, 2.0, 4.0}) {
        CAPTURE(t);
        const ImageD ref = testutil::wave_image(256, 256, 19, 0.05);
        const ImageD target = testutil::wave_image(256, 256, 19, 0.05, -t, -0.5 * t);
        const FlowField flow = estimate_flow(ref, target, 4, 3);
        CHECK(mean_epe(flow, t, 0.5 * t, 20) < 0.5);
    }
}

TEST_CASE("warp residual shrinks as refinement iterations increase") {
    const ImageD ref = testutil::wave_image(192, 192, 23, 0.05);
    const ImageD target = testutil::wave_image(192, 192, 23, 0.05, -2.7, 1.3);
    double prev = std::numeric_limits<double>::infinity();
    for (int iters = 1; iters <= 3; ++iters) {
        const FlowField flow = estimate_flow(ref, target, 4, iters);
        const double res = warp_residual(ref, target, flow);
        CHECK(res <= prev + 1e-12);
        prev = res;
    }
}

TEST_CASE("zero-flow warp is bit-exact identity") {
    const ImageD img = testutil::wave_image(64, 48, 2, 0.08);
    const WarpResult w = warp_bilinear(img, FlowField(64, 48));
    for (size_t i = 0; i < img.size(); ++i) {
        CHECK(w.image[i] == img[i]);
        CHECK(w.valid[i] == 1);
    }
}

TEST_CASE("constant flow on a ramp shifts it exactly") {
    ImageD ramp(32, 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 32; ++x) ramp.at(x, y) = static_cast<double>(x);
    FlowField flow(32, 16);
    for (double& u : flow.u) u = 1.0;

    const WarpResult w = warp_bilinear(ramp, flow);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 31; ++x) {
            CHECK(w.image.at(x, y) == doctest::Approx(ramp.at(x, y) + 1.0).epsilon(1e-12));
            CHECK(w.valid.at(x, y) == 1);
        }
    // the last column samples x = 32, outside the image: clamped and invalid
    for (int y = 0; y < 16; ++y) {
        CHECK(w.image.at(31, y) == doctest::Approx(31.0));
        CHECK(w.valid.at(31, y) == 0);
    }
}

TEST_CASE("fully out-of-bounds flow clamps to the edge and invalidates all") {
    const ImageD img = testutil::wave_image(16, 16, 4, 0.1);
    FlowField flow(16, 16);
    for (double& u : flow.u) u = 100.0;
    const WarpResult w = warp_bilinear(img, flow);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            CHECK(w.valid.at(x, y) == 0);
            CHECK(w.image.at(x, y) == doctest::Approx(img.at(15, y)));
        }
}

TEST_CASE("catmull-rom warp matches integer shifts and stays in local range") {
    const ImageD img = testutil::wave_image(48, 48, 6, 0.09);

    // integer displacement: exact copy of the source pixel
    FlowField shift(48, 48);
    for (double& u : shift.u) u = 2.0;
    const WarpResult wi = warp_catmull_rom(img, shift);
    for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 45; ++x)
            CHECK(wi.image.at(x, y) == doctest::Approx(img.at(x + 2, y)).epsilon(1e-12));

    // subpixel displacement: output bounded by the image range (the 4x4 tap
    // clamp forbids overshoot beyond local extremes, so global ones hold too)
    FlowField sub(48, 48);
    std::mt19937_64 gen(77);
    std::uniform_real_distribution<double> d(-1.5, 1.5);
    for (size_t i = 0; i < sub.size(); ++i) {
        sub.u[i] = d(gen);
        sub.v[i] = d(gen);
    }
    const WarpResult ws = warp_catmull_rom(img, sub);
    const double lo = *std::min_element(img.values.begin(), img.values.end());
    const double hi = *std::max_element(img.values.begin(), img.values.end());
    for (size_t i = 0; i < ws.image.size(); ++i) {
        CHECK(ws.image[i] >= lo - 1e-12);
        CHECK(ws.image[i] <= hi + 1e-12);
    }

    // zero flow identity
    const WarpResult wz = warp_catmull_rom(img, FlowField(48, 48));
    for (size_t i = 0; i < img.size(); ++i) CHECK(wz.image[i] == doctest::Approx(img[i]));
}

TEST_CASE("flow composition adds displacements along the chain") {
    FlowField ab(8, 8), bc(8, 8);
    for (double& u : ab.u) u = 1.0;
    // bc carries a horizontal gradient so the lookup offset matters
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) bc.v[static_cast<size_t>(y) * 8 + x] = 0.5 * x;

    const FlowField ac = compose_flows(ab, bc);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 6; ++x) {
            const size_t i = static_cast<size_t>(y) * 8 + x;
            CHECK(ac.u[i] == doctest::Approx(1.0));
            // bc sampled at x + 1
            CHECK(ac.v[i] == doctest::Approx(0.5 * (x + 1.0)));
        }
}

TEST_CASE("bidirectional flows count frames and respect pan linearity") {
    SUBCASE("identical frames give zero flows") {
        std::vector<ImageD> frames(5, testutil::wave_image(64, 64, 8, 0.07));
        const auto flows = bidirectional_flows(frames, 2, FlowConfig{});
        REQUIRE(flows.size() == 4);
        for (const auto& f : flows) CHECK(max_abs_flow(f) < 0.05);
    }

    SUBCASE("11 frames around reference 5 give 10 fields") {
        // 64x64 is the smallest square the default 4-level pyramid accepts
        std::vector<ImageD> frames;
        const FluxVideo clip = testutil::wave_clip(64, 64, 11, 0.8, 0.0, 9, 0.06);
        for (const auto& f : clip.frames) frames.push_back(f);
        const auto flows = bidirectional_flows(frames, 5, FlowConfig{});
        CHECK(flows.size() == 10);
        CHECK_THROWS_AS(bidirectional_flows(frames, 11, FlowConfig{}), InputDomainError);
        CHECK_THROWS_AS(bidirectional_flows(frames, -1, FlowConfig{}), InputDomainError);
    }

    SUBCASE("linear pan yields linear flows, direct and chained") {
        // frame t samples the scene at x + 2t, so matching points obey
        // x_k = x_ref + 2 * (ref - k)
        const double pan = 2.0;
        const int ref = 3;
        const FluxVideo clip = testutil::wave_clip(128, 128, 7, pan, 0.0, 10, 0.05);

        for (bool chain : {false, true}) {
            CAPTURE(chain);
            FlowConfig cfg;
            cfg.chain = chain;
            const auto flows = bidirectional_flows(clip.frames, ref, cfg);
            REQUIRE(flows.size() == 6);
            int fi = 0;
            for (int k = 0; k < 7; ++k) {
                if (k == ref) continue;
                const double expect_u = pan * (ref - k);
                CHECK(mean_epe(flows[fi], expect_u, 0.0, 20) < 0.5);
                ++fi;
            }
        }
    }
}

TEST_CASE("flow files round-trip through the raw dump format") {
    FlowField flow(9, 5);
    std::mt19937_64 gen(13);
    std::uniform_real_distribution<double> d(-4.0, 4.0);
    for (size_t i = 0; i < flow.size(); ++i) {
        flow.u[i] = d(gen);
        flow.v[i] = d(gen);
    }
    const auto path = std::filesystem::temp_directory_path() / "quanta_flow_test.flo";
    write_flow(flow, path);
    const FlowField back = read_flow(path);
    std::filesystem::remove(path);

    REQUIRE(back.width == 9);
    REQUIRE(back.height == 5);
    for (size_t i = 0; i < flow.size(); ++i) {
        // stored as f32
        CHECK(back.u[i] == doctest::Approx(flow.u[i]).epsilon(1e-6));
        CHECK(back.v[i] == doctest::Approx(flow.v[i]).epsilon(1e-6));
    }
}

TEST_CASE("dimension mismatches are rejected") {
    const ImageD a(32, 32, 0.5);
    const ImageD b(33, 32, 0.5);
    CHECK_THROWS_AS(estimate_flow(a, b, 2, 3), InputDomainError);
    FlowField f(16, 16);
    CHECK_THROWS_AS(warp_bilinear(a, f), InputDomainError);
}

} // TEST_SUITE
