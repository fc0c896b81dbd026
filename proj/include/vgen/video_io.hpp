#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vgen/tensor.hpp"

// Raw planar RGB8 clip container: 24-byte header (4-byte magic "RVC8" plus
// five little-endian uint32 fields T,H,W,C,fps) followed by T*C*H*W bytes of
// pixel data laid out frame-major, plane-per-channel.

namespace vgen {

struct RawVideo {
    uint32_t frames = 0;
    uint32_t height = 0;
    uint32_t width = 0;
    uint32_t channels = 0;
    uint32_t fps = 0;
    std::vector<uint8_t> data;  // [t][c][h][w]

    uint8_t at(int64_t t, int64_t c, int64_t y, int64_t x) const {
        return data[static_cast<size_t>(((t * channels + c) * height + y) * width + x)];
    }
    uint8_t& at(int64_t t, int64_t c, int64_t y, int64_t x) {
        return data[static_cast<size_t>(((t * channels + c) * height + y) * width + x)];
    }
    double duration_s() const { return fps ? double(frames) / double(fps) : 0.0; }
    size_t expected_bytes() const {
        return size_t(frames) * channels * height * width;
    }
};

RawVideo make_raw_video(uint32_t frames, uint32_t height, uint32_t width, uint32_t channels,
                        uint32_t fps);

void write_raw_video(const std::string& path, const RawVideo& v);

// Throws MissingInputError when absent, ConfigError on a bad header.
RawVideo read_raw_video(const std::string& path);

// u8 [0,255] -> float tensor (c,t,h,w) in [-1,1].
TensorF video_to_tensor(const RawVideo& v);

// clamped inverse of video_to_tensor
RawVideo tensor_to_video(const TensorF& t, uint32_t fps);

}  // namespace vgen
