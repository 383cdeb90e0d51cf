#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "quanta/errors.hpp"
#include "quanta/video_io.hpp"

using namespace quanta;
namespace fs = std::filesystem;

namespace {

/// Fresh scratch directory per test case, removed on destruction.
struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("quanta_io_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

VideoClip random_clip(int w, int h, int frames, uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    VideoClip clip;
    clip.frame_rate = 30.0;
    for (int i = 0; i < frames; ++i) {
        ImageD img(w, h);
        for (double& v : img.values) v = unit(gen);
        clip.frames.push_back(std::move(img));
    }
    return clip;
}

} // namespace

TEST_SUITE("video_io") {

TEST_CASE("single image round-trips through pgm and png") {
    TempDir dir("gray");
    ImageD img(17, 9);
    for (size_t i = 0; i < img.size(); ++i)
        img[i] = static_cast<double>(i) / static_cast<double>(img.size() - 1);

    for (const char* name : {"img.pgm", "img.png"}) {
        CAPTURE(name);
        const size_t clamped = write_gray_image(img, dir.path / name, 16);
        CHECK(clamped == 0);
        const ImageD back = read_gray_image(dir.path / name);
        REQUIRE(back.width == img.width);
        REQUIRE(back.height == img.height);
        double max_err = 0.0;
        for (size_t i = 0; i < img.size(); ++i)
            max_err = std::max(max_err, std::abs(back[i] - img[i]));
        CHECK(max_err <= 1.0 / 65535.0);
    }
}

TEST_CASE("all-255 8-bit image reads as all 1.0") {
    TempDir dir("white");
    // Write a P5 file by hand so the read path is tested on its own.
    const fs::path p = dir.path / "white.pgm";
    {
        std::ofstream out(p, std::ios::binary);
        out << "P5\n4 3\n255\n";
        for (int i = 0; i < 12; ++i) out.put(static_cast<char>(0xFF));
    }
    const ImageD img = read_gray_image(p);
    REQUIRE(img.width == 4);
    REQUIRE(img.height == 3);
    for (double v : img.values) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("out-of-range values are clamped and counted on write") {
    TempDir dir("clamp");
    ImageD img(4, 4, 0.5);
    img.at(0, 0) = -0.25;
    img.at(1, 0) = 1.75;
    const size_t clamped = write_gray_image(img, dir.path / "c.pgm", 8);
    CHECK(clamped == 2);
    const ImageD back = read_gray_image(dir.path / "c.pgm");
    CHECK(back.at(0, 0) == doctest::Approx(0.0));
    CHECK(back.at(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("quanta frames keep their raw counts and bit depth") {
    TempDir dir("quanta");
    QuantaFrame frame(5, 4, 3);
    for (size_t i = 0; i < frame.size(); ++i) frame.values[i] = static_cast<uint16_t>(i % 8);
    write_quanta_image(frame, dir.path / "q.pgm");
    const QuantaFrame back = read_quanta_image(dir.path / "q.pgm");
    CHECK(back.n_bits == 3);
    CHECK(back.values == frame.values);
}

TEST_CASE("image sequences write and read back in order") {
    TempDir dir("seq");
    const VideoClip clip = random_clip(12, 10, 11, 99);
    const size_t clamped = write_image_sequence(clip, dir.path, 16);
    CHECK(clamped == 0);

    const VideoClip back = read_image_sequence(dir.path, "frame_*.pgm");
    REQUIRE(back.frame_count() == 11);
    for (size_t f = 0; f < 11; ++f)
        for (size_t i = 0; i < clip.frames[f].size(); ++i)
            CHECK(std::abs(back.frames[f][i] - clip.frames[f][i]) <= 1.0 / 65535.0);
}

TEST_CASE("a missing index is reported by name") {
    TempDir dir("gap");
    const VideoClip clip = random_clip(8, 8, 6, 5);
    write_image_sequence(clip, dir.path, 8);
    fs::remove(dir.path / "frame_0003.pgm");
    CHECK_THROWS_WITH_AS(read_image_sequence(dir.path, "frame_*.pgm"),
                         doctest::Contains("frame_0003"), IoError);
}

TEST_CASE("mixed dimensions in a sequence are rejected") {
    TempDir dir("mixed");
    write_gray_image(ImageD(8, 8, 0.5), dir.path / "frame_0000.pgm", 8);
    write_gray_image(ImageD(9, 8, 0.5), dir.path / "frame_0001.pgm", 8);
    CHECK_THROWS_AS(read_image_sequence(dir.path, "frame_*.pgm"), IoError);
}

TEST_CASE("empty clips and missing directories are errors") {
    TempDir dir("empty");
    CHECK_THROWS_AS(write_image_sequence(VideoClip{}, dir.path, 8), InputDomainError);
    CHECK_THROWS_AS(read_image_sequence(dir.path / "nope", "frame_*.pgm"), IoError);
    CHECK_THROWS_AS(read_image_sequence(dir.path, "frame_*.pgm"), IoError); // no matches
}

TEST_CASE("quanta sequences round-trip") {
    TempDir dir("qseq");
    QuantaBurst burst;
    std::mt19937_64 gen(17);
    for (int f = 0; f < 4; ++f) {
        QuantaFrame frame(6, 5, 3);
        for (auto& v : frame.values) v = static_cast<uint16_t>(gen() % 8);
        burst.frames.push_back(std::move(frame));
    }
    write_quanta_sequence(burst, dir.path);
    const QuantaBurst back = read_quanta_sequence(dir.path, "frame_*.pgm");
    REQUIRE(back.frame_count() == 4);
    for (size_t f = 0; f < 4; ++f) {
        CHECK(back.frames[f].n_bits == 3);
        CHECK(back.frames[f].values == burst.frames[f].values);
    }
}

TEST_CASE("bit accessors address row-major msb-first storage") {
    BitPlaneStream s(10, 3, 2);
    CHECK(s.payload.size() == s.bytes_per_frame() * 2);
    s.set_bit(0, 0, 0, true); // first pixel -> MSB of byte 0
    CHECK((s.payload[0] & 0x80) != 0);
    s.set_bit(1, 9, 2, true); // last pixel of frame 1
    CHECK(s.bit(1, 9, 2));
    CHECK_FALSE(s.bit(0, 9, 2));
    s.set_bit(0, 0, 0, false);
    CHECK_FALSE(s.bit(0, 0, 0));
}

TEST_CASE("bit plane stream file format round-trips") {
    TempDir dir("qbps");
    BitPlaneStream s(13, 7, 5);
    std::mt19937_64 gen(23);
    for (int f = 0; f < 5; ++f)
        for (int y = 0; y < 7; ++y)
            for (int x = 0; x < 13; ++x) s.set_bit(f, x, y, (gen() & 1) != 0);

    const fs::path p = dir.path / "s.qbps";
    write_bit_plane_stream(s, p);

    // header: magic + three u32 little-endian
    std::ifstream in(p, std::ios::binary);
    char magic[4];
    in.read(magic, 4);
    CHECK(std::string(magic, 4) == "QBPS");

    const BitPlaneStream back = read_bit_plane_stream(p);
    CHECK(back.width == 13);
    CHECK(back.height == 7);
    CHECK(back.frame_count == 5);
    CHECK(back.payload == s.payload);

    // corrupting the magic must be caught
    {
        std::fstream f(p, std::ios::binary | std::ios::in | std::ios::out);
        f.put('X');
    }
    CHECK_THROWS_AS(read_bit_plane_stream(p), IoError);
}

TEST_CASE("seven all-one planes in groups of seven sum to a frame of sevens") {
    BitPlaneStream s(9, 4, 7);
    for (int f = 0; f < 7; ++f)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 9; ++x) s.set_bit(f, x, y, true);
    const VideoClip clip = sum_bit_planes(s, 7, 3);
    REQUIRE(clip.frame_count() == 1);
    for (double v : clip.frames[0].values) CHECK(v == doctest::Approx(7.0));
    CHECK(clip.metadata.at("n_bits") == "3");
    CHECK(clip.metadata.at("group_size") == "7");
}

TEST_CASE("alternating planes match the direct summation oracle") {
    // 14 frames alternating all-zero / all-one; each group of 7 holds either
    // 3 or 4 ones per pixel depending on the phase of the alternation.
    BitPlaneStream s(5, 5, 14);
    for (int f = 0; f < 14; ++f)
        if (f % 2 == 1)
            for (int y = 0; y < 5; ++y)
                for (int x = 0; x < 5; ++x) s.set_bit(f, x, y, true);

    const VideoClip clip = sum_bit_planes(s, 7, 3);
    REQUIRE(clip.frame_count() == 2);
    // brute-force oracle over the packed bits
    for (int g = 0; g < 2; ++g)
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 5; ++x) {
                int want = 0;
                for (int f = 7 * g; f < 7 * (g + 1); ++f) want += s.bit(f, x, y) ? 1 : 0;
                CHECK(clip.frames[g].at(x, y) == doctest::Approx(want));
            }
}

TEST_CASE("random planes match the oracle and trailing partials are dropped") {
    BitPlaneStream s(11, 6, 17); // 17 = 3 groups of 5 + partial 2
    std::mt19937_64 gen(31);
    for (int f = 0; f < 17; ++f)
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 11; ++x) s.set_bit(f, x, y, (gen() & 3) == 0);

    const VideoClip clip = sum_bit_planes(s, 5, 3);
    REQUIRE(clip.frame_count() == 3);
    for (int g = 0; g < 3; ++g)
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 11; ++x) {
                int want = 0;
                for (int f = 5 * g; f < 5 * (g + 1); ++f) want += s.bit(f, x, y) ? 1 : 0;
                CHECK(clip.frames[g].at(x, y) == doctest::Approx(want));
            }
}

TEST_CASE("frame rate divides by the group size") {
    BitPlaneStream s(8, 8, 21);
    const VideoClip clip = sum_bit_planes(s, 7, 3, false, 10000.0);
    CHECK(clip.frame_rate == doctest::Approx(10000.0 / 7.0));
}

TEST_CASE("group sizes beyond the target range need the clamp flag") {
    BitPlaneStream s(4, 4, 9);
    for (int f = 0; f < 9; ++f)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) s.set_bit(f, x, y, true);

    // 9 ones cannot be represented in 3 bits
    CHECK_THROWS_AS(sum_bit_planes(s, 9, 3), InputDomainError);
    const VideoClip clip = sum_bit_planes(s, 9, 3, /*allow_clamp=*/true);
    REQUIRE(clip.frame_count() == 1);
    for (double v : clip.frames[0].values) CHECK(v == doctest::Approx(7.0));

    CHECK_THROWS_AS(sum_bit_planes(s, 0, 3), InputDomainError);
}

TEST_CASE("clips of integer counts convert to bursts and back reject junk") {
    VideoClip clip;
    ImageD img(4, 3);
    for (size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i % 8);
    clip.frames.push_back(img);

    const QuantaBurst burst = clip_to_burst(clip, 3);
    REQUIRE(burst.frame_count() == 1);
    CHECK(burst.frames[0].n_bits == 3);
    for (size_t i = 0; i < img.size(); ++i)
        CHECK(burst.frames[0].values[i] == static_cast<uint16_t>(img[i]));

    clip.frames[0].at(0, 0) = 0.5; // non-integer
    CHECK_THROWS_AS(clip_to_burst(clip, 3), InputDomainError);
    clip.frames[0].at(0, 0) = 8.0; // out of 3-bit range
    CHECK_THROWS_AS(clip_to_burst(clip, 3), InputDomainError);
}

} // TEST_SUITE
