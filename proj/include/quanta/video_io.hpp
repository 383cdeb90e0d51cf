#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "quanta/image.hpp"

namespace quanta {

/// Packed 1-bit frames as captured by a binary SPAD stream. Bits are
/// row-major within a frame, most-significant-bit-first within each byte;
/// each frame occupies ceil(width*height/8) bytes.
struct BitPlaneStream {
    int width = 0;
    int height = 0;
    int frame_count = 0;
    std::vector<uint8_t> payload;

    BitPlaneStream() = default;
    BitPlaneStream(int w, int h, int frames);

    size_t bytes_per_frame() const {
        return (static_cast<size_t>(width) * static_cast<size_t>(height) + 7) / 8;
    }
    bool bit(int frame, int x, int y) const;
    void set_bit(int frame, int x, int y, bool value);
    /// Checks dimensions and that payload length matches the header.
    void validate() const;
};

/// Reads an 8/16-bit grayscale PGM (P5) or PNG; values are mapped to [0, 1]
/// by dividing by the file's maximum sample value.
ImageD read_gray_image(const std::filesystem::path& path);

/// Writes [0, 1] values quantized to bit_depth (8 or 16; PGM or PNG chosen
/// by extension). Out-of-range values are clamped; returns how many were.
size_t write_gray_image(const ImageD& image, const std::filesystem::path& path, int bit_depth);

/// Raw integer counts stored as PGM with maxval = 2^n_bits - 1; n_bits is
/// recovered from the file's maxval on read.
QuantaFrame read_quanta_image(const std::filesystem::path& path);
void write_quanta_image(const QuantaFrame& frame, const std::filesystem::path& path);

/// Loads the files matching the pattern (exactly one '*', standing for the
/// zero-padded frame index), ordered by index. The index range must be
/// contiguous; a gap raises an error naming the missing file.
VideoClip read_image_sequence(const std::filesystem::path& directory, const std::string& pattern);

/// Writes clip frames as <prefix><0-padded index><suffix> under directory
/// (created if needed). Returns the number of clamped pixel values.
size_t write_image_sequence(const VideoClip& clip, const std::filesystem::path& directory,
                            int bit_depth, const std::string& pattern = "frame_*.pgm");

/// Sequence I/O for integer quanta frames (PGM only; maxval = 2^n_bits - 1).
QuantaBurst read_quanta_sequence(const std::filesystem::path& directory,
                                 const std::string& pattern);
void write_quanta_sequence(const QuantaBurst& burst, const std::filesystem::path& directory,
                           const std::string& pattern = "frame_*.pgm");

/// Bit-plane stream container: little-endian header {magic "QBPS",
/// u32 width, u32 height, u32 frame_count} followed by the packed payload.
BitPlaneStream read_bit_plane_stream(const std::filesystem::path& path);
void write_bit_plane_stream(const BitPlaneStream& stream, const std::filesystem::path& path);

/// Sums consecutive groups of group_size binary frames into integer frames
/// tagged with target_bits (metadata keys "n_bits", "group_size"); a
/// trailing partial group is dropped. Unless allow_clamp is set, group_size
/// must not exceed 2^target_bits - 1; with it, sums clamp into range. The
/// output frame rate is input_frame_rate / group_size (0 when unknown).
VideoClip sum_bit_planes(const BitPlaneStream& stream, int group_size, int target_bits,
                         bool allow_clamp = false, double input_frame_rate = 0.0);

/// Reinterprets a clip of integer counts as a quanta burst with the given
/// bit depth; rejects non-integer or out-of-range values.
QuantaBurst clip_to_burst(const VideoClip& clip, int n_bits);

} // namespace quanta
