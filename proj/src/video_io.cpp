#include "vgen/video_io.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "vgen/errors.hpp"

namespace vgen {

namespace {
constexpr char kMagic[4] = {'R', 'V', 'C', '8'};

void put_u32(std::ofstream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::ifstream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}
}  // namespace

RawVideo make_raw_video(uint32_t frames, uint32_t height, uint32_t width, uint32_t channels,
                        uint32_t fps) {
    RawVideo v;
    v.frames = frames;
    v.height = height;
    v.width = width;
    v.channels = channels;
    v.fps = fps;
    v.data.assign(v.expected_bytes(), 0);
    return v;
}

void write_raw_video(const std::string& path, const RawVideo& v) {
    if (v.data.size() != v.expected_bytes()) throw ConfigError("raw video: data size mismatch");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw MissingInputError("raw video: cannot open for write: " + path);
    os.write(kMagic, 4);
    put_u32(os, v.frames);
    put_u32(os, v.height);
    put_u32(os, v.width);
    put_u32(os, v.channels);
    put_u32(os, v.fps);
    os.write(reinterpret_cast<const char*>(v.data.data()), static_cast<std::streamsize>(v.data.size()));
    if (!os) throw ConfigError("raw video: write failed: " + path);
}

RawVideo read_raw_video(const std::string& path) {
    if (!std::filesystem::exists(path)) throw MissingInputError("raw video: missing file: " + path);
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingInputError("raw video: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw ConfigError("raw video: bad magic in " + path);
    RawVideo v;
    v.frames = get_u32(is);
    v.height = get_u32(is);
    v.width = get_u32(is);
    v.channels = get_u32(is);
    v.fps = get_u32(is);
    if (!is) throw ConfigError("raw video: truncated header in " + path);
    if (v.channels == 0 || v.channels > 4 || v.frames == 0 || v.height == 0 || v.width == 0)
        throw ConfigError("raw video: implausible header in " + path);
    v.data.resize(v.expected_bytes());
    is.read(reinterpret_cast<char*>(v.data.data()), static_cast<std::streamsize>(v.data.size()));
    if (!is) throw ConfigError("raw video: truncated pixel data in " + path);
    return v;
}

TensorF video_to_tensor(const RawVideo& v) {
    Shape shape{int64_t(v.channels), int64_t(v.frames), int64_t(v.height), int64_t(v.width)};
    std::vector<float> d(static_cast<size_t>(shape_numel(shape)));
    for (int64_t c = 0; c < v.channels; ++c)
        for (int64_t t = 0; t < v.frames; ++t)
            for (int64_t y = 0; y < v.height; ++y)
                for (int64_t x = 0; x < v.width; ++x)
                    d[static_cast<size_t>(((c * v.frames + t) * v.height + y) * v.width + x)] =
                        float(v.at(t, c, y, x)) / 127.5f - 1.0f;
    return TensorF::from(shape, std::move(d));
}

RawVideo tensor_to_video(const TensorF& t, uint32_t fps) {
    if (t.rank() != 4) throw ShapeError("tensor_to_video: expected (c,t,h,w)");
    RawVideo v = make_raw_video(uint32_t(t.dim(1)), uint32_t(t.dim(2)), uint32_t(t.dim(3)),
                                uint32_t(t.dim(0)), fps);
    for (int64_t c = 0; c < t.dim(0); ++c)
        for (int64_t f = 0; f < t.dim(1); ++f)
            for (int64_t y = 0; y < t.dim(2); ++y)
                for (int64_t x = 0; x < t.dim(3); ++x) {
                    float val =
                        t.values()[static_cast<size_t>(((c * t.dim(1) + f) * t.dim(2) + y) * t.dim(3) + x)];
                    float px = std::clamp((val + 1.0f) * 127.5f, 0.0f, 255.0f);
                    v.at(f, c, y, x) = static_cast<uint8_t>(std::lround(px));
                }
    return v;
}

}  // namespace vgen
