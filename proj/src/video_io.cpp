#include "quanta/video_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>

#include <png.h>

namespace quanta {

namespace fs = std::filesystem;

namespace {

std::string lower_extension(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

// ---------------------------------------------------------------- PGM (P5)

struct RawImage {
    int width = 0;
    int height = 0;
    int maxval = 0;
    std::vector<uint16_t> samples;
};

/// Reads the next integer token, skipping whitespace and '#' comments.
long pgm_token(std::istream& in, const fs::path& path) {
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    if (c == EOF || !std::isdigit(c))
        throw IoError("malformed PGM header in " + path.string());
    long value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        if (value > 1000000000)
            throw IoError("absurd value in PGM header of " + path.string());
        c = in.get();
    }
    if (c != EOF) in.unget();
    return value;
}

RawImage read_pgm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || magic[1] != '5')
        throw IoError(path.string() + " is not a binary PGM (P5) file");

    RawImage img;
    img.width = static_cast<int>(pgm_token(in, path));
    img.height = static_cast<int>(pgm_token(in, path));
    img.maxval = static_cast<int>(pgm_token(in, path));
    if (img.width <= 0 || img.height <= 0 || img.maxval < 1 || img.maxval > 65535)
        throw IoError("bad PGM dimensions/maxval in " + path.string());
    in.get(); // single whitespace byte separating header from payload

    const size_t count = static_cast<size_t>(img.width) * img.height;
    img.samples.resize(count);
    if (img.maxval < 256) {
        std::vector<uint8_t> raw(count);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count));
        if (!in)
            throw IoError("truncated PGM payload in " + path.string());
        for (size_t i = 0; i < count; ++i) img.samples[i] = raw[i];
    } else {
        std::vector<uint8_t> raw(count * 2);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (!in)
            throw IoError("truncated PGM payload in " + path.string());
        for (size_t i = 0; i < count; ++i) // 16-bit PGM samples are big-endian
            img.samples[i] = static_cast<uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    }
    for (uint16_t s : img.samples)
        if (s > img.maxval)
            throw IoError("PGM sample exceeds maxval in " + path.string());
    return img;
}

void write_pgm(const RawImage& img, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot open " + path.string() + " for writing");
    out << "P5\n" << img.width << " " << img.height << "\n" << img.maxval << "\n";
    const size_t count = img.samples.size();
    if (img.maxval < 256) {
        std::vector<uint8_t> raw(count);
        for (size_t i = 0; i < count; ++i) raw[i] = static_cast<uint8_t>(img.samples[i]);
        out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(count));
    } else {
        std::vector<uint8_t> raw(count * 2);
        for (size_t i = 0; i < count; ++i) {
            raw[2 * i] = static_cast<uint8_t>(img.samples[i] >> 8);
            raw[2 * i + 1] = static_cast<uint8_t>(img.samples[i] & 0xFF);
        }
        out.write(reinterpret_cast<const char*>(raw.data()),
                  static_cast<std::streamsize>(raw.size()));
    }
    if (!out)
        throw IoError("short write to " + path.string());
}

// ------------------------------------------------------------------- PNG

RawImage read_png(const fs::path& path) {
    RawImage img;
    std::vector<uint8_t> data;
    std::vector<png_bytep> rows;

    FILE* fp = std::fopen(path.string().c_str(), "rb");
    if (!fp)
        throw IoError("cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        std::fclose(fp);
        throw IoError("libpng initialization failed");
    }
    std::string error;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("failed to read PNG " + path.string() +
                      (error.empty() ? "" : ": " + error));
    }

    png_init_io(png, fp);
    png_read_info(png, info);
    const png_byte color = png_get_color_type(png, info);
    if (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_GRAY_ALPHA) {
        error = "not a grayscale PNG";
        png_error(png, "not grayscale");
    }
    if (color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_strip_alpha(png);
    if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);

    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    const int depth = png_get_bit_depth(png, info);
    img.maxval = depth == 16 ? 65535 : 255;

    const size_t rowbytes = png_get_rowbytes(png, info);
    data.resize(rowbytes * static_cast<size_t>(img.height));
    rows.resize(img.height);
    for (int y = 0; y < img.height; ++y) rows[y] = data.data() + rowbytes * static_cast<size_t>(y);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);

    img.samples.resize(static_cast<size_t>(img.width) * img.height);
    for (int y = 0; y < img.height; ++y) {
        const uint8_t* row = data.data() + rowbytes * static_cast<size_t>(y);
        for (int x = 0; x < img.width; ++x) {
            if (depth == 16) // PNG stores 16-bit samples big-endian
                img.samples[static_cast<size_t>(y) * img.width + x] =
                    static_cast<uint16_t>((row[2 * x] << 8) | row[2 * x + 1]);
            else
                img.samples[static_cast<size_t>(y) * img.width + x] = row[x];
        }
    }
    return img;
}

void write_png(const RawImage& img, const fs::path& path) {
    std::vector<uint8_t> data;
    std::vector<png_bytep> rows;

    FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (!fp)
        throw IoError("cannot open " + path.string() + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        std::fclose(fp);
        throw IoError("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("failed to write PNG " + path.string());
    }

    const int depth = img.maxval > 255 ? 16 : 8;
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), depth, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const size_t rowbytes = static_cast<size_t>(img.width) * (depth == 16 ? 2 : 1);
    data.resize(rowbytes * static_cast<size_t>(img.height));
    for (int y = 0; y < img.height; ++y) {
        uint8_t* row = data.data() + rowbytes * static_cast<size_t>(y);
        for (int x = 0; x < img.width; ++x) {
            const uint16_t s = img.samples[static_cast<size_t>(y) * img.width + x];
            if (depth == 16) {
                row[2 * x] = static_cast<uint8_t>(s >> 8);
                row[2 * x + 1] = static_cast<uint8_t>(s & 0xFF);
            } else {
                row[x] = static_cast<uint8_t>(s);
            }
        }
    }
    rows.resize(img.height);
    for (int y = 0; y < img.height; ++y) rows[y] = data.data() + rowbytes * static_cast<size_t>(y);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

RawImage read_raw_image(const fs::path& path) {
    const std::string ext = lower_extension(path);
    if (ext == ".pgm") return read_pgm(path);
    if (ext == ".png") return read_png(path);
    throw IoError("unsupported image format \"" + ext + "\" (expected .pgm or .png): " +
                  path.string());
}

// ---------------------------------------------------------- sequence names

struct SequencePattern {
    std::string prefix;
    std::string suffix;
};

SequencePattern split_pattern(const std::string& pattern) {
    const size_t star = pattern.find('*');
    if (star == std::string::npos || pattern.find('*', star + 1) != std::string::npos)
        throw InputDomainError("sequence pattern must contain exactly one '*': " + pattern);
    return SequencePattern{pattern.substr(0, star), pattern.substr(star + 1)};
}

std::string pad_index(long index, int width) {
    std::string digits = std::to_string(index);
    while (static_cast<int>(digits.size()) < width) digits.insert(digits.begin(), '0');
    return digits;
}

struct SequenceEntry {
    long index;
    fs::path path;
};

/// Matching files ordered by index, verified gap-free.
std::vector<SequenceEntry> list_sequence(const fs::path& directory, const std::string& pattern) {
    const SequencePattern pat = split_pattern(pattern);
    if (!fs::is_directory(directory))
        throw IoError("not a directory: " + directory.string());

    std::map<long, SequenceEntry> found;
    int digit_width = 0;
    for (const auto& entry : fs::directory_iterator(directory)) {
        const std::string name = entry.path().filename().string();
        if (name.size() <= pat.prefix.size() + pat.suffix.size()) continue;
        if (name.compare(0, pat.prefix.size(), pat.prefix) != 0) continue;
        if (name.compare(name.size() - pat.suffix.size(), pat.suffix.size(), pat.suffix) != 0)
            continue;
        const std::string middle =
            name.substr(pat.prefix.size(), name.size() - pat.prefix.size() - pat.suffix.size());
        if (middle.empty() ||
            !std::all_of(middle.begin(), middle.end(),
                         [](unsigned char c) { return std::isdigit(c); }))
            continue;
        const long index = std::stol(middle);
        digit_width = std::max(digit_width, static_cast<int>(middle.size()));
        found[index] = SequenceEntry{index, entry.path()};
    }
    if (found.empty())
        throw IoError("no files matching \"" + pattern + "\" in " + directory.string());

    std::vector<SequenceEntry> entries;
    entries.reserve(found.size());
    long expected = found.begin()->first;
    for (const auto& [index, entry] : found) {
        if (index != expected)
            throw IoError("image sequence has a gap: missing " + pat.prefix +
                          pad_index(expected, digit_width) + pat.suffix + " in " +
                          directory.string());
        entries.push_back(entry);
        ++expected;
    }
    return entries;
}

int quanta_bits_for_maxval(int maxval, const fs::path& path) {
    int bits = 0;
    while ((1 << bits) - 1 < maxval) ++bits;
    if ((1 << bits) - 1 != maxval)
        throw IoError("quanta image maxval " + std::to_string(maxval) +
                      " is not 2^n - 1 in " + path.string());
    return bits;
}

} // namespace

// --------------------------------------------------------------- images

ImageD read_gray_image(const fs::path& path) {
    const RawImage raw = read_raw_image(path);
    ImageD out(raw.width, raw.height);
    const double scale = 1.0 / static_cast<double>(raw.maxval);
    for (size_t i = 0; i < raw.samples.size(); ++i) out[i] = raw.samples[i] * scale;
    return out;
}

size_t write_gray_image(const ImageD& image, const fs::path& path, int bit_depth) {
    if (image.size() == 0)
        throw InputDomainError("write_gray_image: empty image");
    if (bit_depth != 8 && bit_depth != 16)
        throw InputDomainError("write_gray_image: bit depth must be 8 or 16, got " +
                               std::to_string(bit_depth));
    RawImage raw;
    raw.width = image.width;
    raw.height = image.height;
    raw.maxval = (1 << bit_depth) - 1;
    raw.samples.resize(image.size());
    size_t clamped = 0;
    for (size_t i = 0; i < image.size(); ++i) {
        double v = image[i];
        if (!std::isfinite(v))
            throw NumericalError("write_gray_image: non-finite pixel value");
        if (v < 0.0 || v > 1.0) {
            v = std::clamp(v, 0.0, 1.0);
            ++clamped;
        }
        raw.samples[i] = static_cast<uint16_t>(std::lround(v * raw.maxval));
    }

    const std::string ext = lower_extension(path);
    if (ext == ".pgm")
        write_pgm(raw, path);
    else if (ext == ".png")
        write_png(raw, path);
    else
        throw IoError("unsupported image format \"" + ext + "\" (expected .pgm or .png): " +
                      path.string());
    return clamped;
}

QuantaFrame read_quanta_image(const fs::path& path) {
    const RawImage raw = read_raw_image(path);
    QuantaFrame frame(raw.width, raw.height, quanta_bits_for_maxval(raw.maxval, path));
    frame.values = raw.samples;
    return frame;
}

void write_quanta_image(const QuantaFrame& frame, const fs::path& path) {
    if (frame.size() == 0)
        throw InputDomainError("write_quanta_image: empty frame");
    if (lower_extension(path) != ".pgm")
        throw IoError("quanta frames are stored as PGM, got " + path.string());
    RawImage raw;
    raw.width = frame.width;
    raw.height = frame.height;
    raw.maxval = frame.max_value();
    for (uint16_t v : frame.values)
        if (v > raw.maxval)
            throw InputDomainError("write_quanta_image: value " + std::to_string(v) +
                                   " exceeds " + std::to_string(raw.maxval));
    raw.samples = frame.values;
    write_pgm(raw, path);
}

// ------------------------------------------------------------- sequences

VideoClip read_image_sequence(const fs::path& directory, const std::string& pattern) {
    VideoClip clip;
    for (const auto& entry : list_sequence(directory, pattern)) {
        ImageD frame = read_gray_image(entry.path);
        if (!clip.frames.empty() && !clip.frames.front().same_dims(frame))
            throw IoError("image sequence mixes dimensions at " + entry.path.string());
        clip.frames.push_back(std::move(frame));
    }
    return clip;
}

size_t write_image_sequence(const VideoClip& clip, const fs::path& directory, int bit_depth,
                            const std::string& pattern) {
    if (clip.frames.empty())
        throw InputDomainError("write_image_sequence: empty clip");
    const SequencePattern pat = split_pattern(pattern);
    fs::create_directories(directory);
    size_t clamped = 0;
    for (size_t i = 0; i < clip.frames.size(); ++i) {
        const fs::path path =
            directory / (pat.prefix + pad_index(static_cast<long>(i), 4) + pat.suffix);
        clamped += write_gray_image(clip.frames[i], path, bit_depth);
    }
    return clamped;
}

QuantaBurst read_quanta_sequence(const fs::path& directory, const std::string& pattern) {
    QuantaBurst burst;
    for (const auto& entry : list_sequence(directory, pattern)) {
        QuantaFrame frame = read_quanta_image(entry.path);
        if (!burst.frames.empty()) {
            const QuantaFrame& first = burst.frames.front();
            if (frame.width != first.width || frame.height != first.height ||
                frame.n_bits != first.n_bits)
                throw IoError("quanta sequence mixes dimensions or bit depth at " +
                              entry.path.string());
        }
        burst.frames.push_back(std::move(frame));
    }
    return burst;
}

void write_quanta_sequence(const QuantaBurst& burst, const fs::path& directory,
                           const std::string& pattern) {
    if (burst.frames.empty())
        throw InputDomainError("write_quanta_sequence: empty burst");
    const SequencePattern pat = split_pattern(pattern);
    fs::create_directories(directory);
    for (size_t i = 0; i < burst.frames.size(); ++i)
        write_quanta_image(burst.frames[i], directory / (pat.prefix +
                                                         pad_index(static_cast<long>(i), 4) +
                                                         pat.suffix));
}

// ------------------------------------------------------------ bit planes

BitPlaneStream::BitPlaneStream(int w, int h, int frames) : width(w), height(h), frame_count(frames) {
    if (w <= 0 || h <= 0 || frames < 0)
        throw InputDomainError("bit-plane stream dimensions must be positive");
    payload.assign(bytes_per_frame() * static_cast<size_t>(frames), 0);
}

bool BitPlaneStream::bit(int frame, int x, int y) const {
    const size_t idx = static_cast<size_t>(y) * width + x;
    const uint8_t byte = payload[static_cast<size_t>(frame) * bytes_per_frame() + idx / 8];
    return (byte >> (7 - idx % 8)) & 1u;
}

void BitPlaneStream::set_bit(int frame, int x, int y, bool value) {
    const size_t idx = static_cast<size_t>(y) * width + x;
    uint8_t& byte = payload[static_cast<size_t>(frame) * bytes_per_frame() + idx / 8];
    const uint8_t mask = static_cast<uint8_t>(1u << (7 - idx % 8));
    if (value)
        byte |= mask;
    else
        byte &= static_cast<uint8_t>(~mask);
}

void BitPlaneStream::validate() const {
    if (width <= 0 || height <= 0 || frame_count < 0)
        throw InputDomainError("bit-plane stream: bad dimensions");
    if (payload.size() != bytes_per_frame() * static_cast<size_t>(frame_count))
        throw InputDomainError("bit-plane stream: payload length " +
                               std::to_string(payload.size()) + " does not match " +
                               std::to_string(bytes_per_frame()) + " bytes x " +
                               std::to_string(frame_count) + " frames");
}

namespace {
constexpr char kBitPlaneMagic[4] = {'Q', 'B', 'P', 'S'};

uint32_t read_u32_le(std::istream& in) {
    uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_u32_le(std::ostream& out, uint32_t v) {
    const uint8_t b[4] = {static_cast<uint8_t>(v & 0xFF), static_cast<uint8_t>((v >> 8) & 0xFF),
                          static_cast<uint8_t>((v >> 16) & 0xFF),
                          static_cast<uint8_t>((v >> 24) & 0xFF)};
    out.write(reinterpret_cast<const char*>(b), 4);
}
} // namespace

BitPlaneStream read_bit_plane_stream(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kBitPlaneMagic, 4) != 0)
        throw IoError(path.string() + " is not a bit-plane stream (bad magic)");
    BitPlaneStream stream;
    stream.width = static_cast<int>(read_u32_le(in));
    stream.height = static_cast<int>(read_u32_le(in));
    stream.frame_count = static_cast<int>(read_u32_le(in));
    if (!in || stream.width <= 0 || stream.height <= 0 || stream.frame_count < 0)
        throw IoError("bad bit-plane stream header in " + path.string());
    stream.payload.resize(stream.bytes_per_frame() * static_cast<size_t>(stream.frame_count));
    in.read(reinterpret_cast<char*>(stream.payload.data()),
            static_cast<std::streamsize>(stream.payload.size()));
    if (!in)
        throw IoError("truncated bit-plane payload in " + path.string());
    return stream;
}

void write_bit_plane_stream(const BitPlaneStream& stream, const fs::path& path) {
    stream.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot open " + path.string() + " for writing");
    out.write(kBitPlaneMagic, 4);
    write_u32_le(out, static_cast<uint32_t>(stream.width));
    write_u32_le(out, static_cast<uint32_t>(stream.height));
    write_u32_le(out, static_cast<uint32_t>(stream.frame_count));
    out.write(reinterpret_cast<const char*>(stream.payload.data()),
              static_cast<std::streamsize>(stream.payload.size()));
    if (!out)
        throw IoError("short write to " + path.string());
}

VideoClip sum_bit_planes(const BitPlaneStream& stream, int group_size, int target_bits,
                         bool allow_clamp, double input_frame_rate) {
    stream.validate();
    if (group_size < 1)
        throw InputDomainError("sum_bit_planes: group_size must be >= 1");
    if (target_bits < 1 || target_bits > 16)
        throw InputDomainError("sum_bit_planes: target_bits must be in [1, 16]");
    const int max_value = (1 << target_bits) - 1;
    if (group_size > max_value && !allow_clamp)
        throw InputDomainError("sum_bit_planes: group of " + std::to_string(group_size) +
                               " frames can reach " + std::to_string(group_size) +
                               " > 2^" + std::to_string(target_bits) +
                               " - 1; raise target_bits or enable clamping");
    const int groups = stream.frame_count / group_size;
    if (groups < 1)
        throw InputDomainError("sum_bit_planes: stream has " +
                               std::to_string(stream.frame_count) +
                               " frames, shorter than one group of " +
                               std::to_string(group_size));

    VideoClip clip;
    clip.frame_rate = input_frame_rate > 0.0 ? input_frame_rate / group_size : 0.0;
    clip.metadata["n_bits"] = std::to_string(target_bits);
    clip.metadata["group_size"] = std::to_string(group_size);
    clip.frames.reserve(groups);
    for (int g = 0; g < groups; ++g) {
        ImageD frame(stream.width, stream.height);
        for (int member = 0; member < group_size; ++member) {
            const int f = g * group_size + member;
            for (int y = 0; y < stream.height; ++y)
                for (int x = 0; x < stream.width; ++x)
                    if (stream.bit(f, x, y)) frame.at(x, y) += 1.0;
        }
        if (allow_clamp)
            for (double& v : frame.values) v = std::min(v, static_cast<double>(max_value));
        clip.frames.push_back(std::move(frame));
    }
    return clip;
}

QuantaBurst clip_to_burst(const VideoClip& clip, int n_bits) {
    if (clip.frames.empty())
        throw InputDomainError("clip_to_burst: empty clip");
    if (n_bits < 1 || n_bits > 16)
        throw InputDomainError("clip_to_burst: n_bits must be in [1, 16]");
    const int max_value = (1 << n_bits) - 1;
    QuantaBurst burst;
    burst.frames.reserve(clip.frames.size());
    for (const auto& img : clip.frames) {
        QuantaFrame frame(img.width, img.height, n_bits);
        for (size_t p = 0; p < img.size(); ++p) {
            const double v = img[p];
            const double rounded = std::round(v);
            if (!std::isfinite(v) || std::abs(v - rounded) > 1e-9 || rounded < 0.0 ||
                rounded > max_value)
                throw InputDomainError("clip_to_burst: value " + std::to_string(v) +
                                       " is not an integer in [0, " +
                                       std::to_string(max_value) + "]");
            frame.values[p] = static_cast<uint16_t>(rounded);
        }
        burst.frames.push_back(std::move(frame));
    }
    return burst;
}

} // namespace quanta
