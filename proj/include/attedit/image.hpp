#pragma once

#include <png.h>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "attedit/common.hpp"
#include "attedit/tensor.hpp"

namespace attedit {

// 8-bit RGB frame, row-major, 3 bytes per pixel.
struct Frame {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> rgb;

    Frame() = default;
    Frame(int w, int h) : width(w), height(h), rgb(static_cast<size_t>(w) * h * 3, 0) {}

    uint8_t& at(int y, int x, int c) {
        return rgb[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
    uint8_t at(int y, int x, int c) const {
        return rgb[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
};

namespace detail {

struct PngFileCloser {
    std::FILE* f = nullptr;
    ~PngFileCloser() {
        if (f != nullptr) {
            std::fclose(f);
        }
    }
};

}  // namespace detail

inline Frame read_png(const std::string& path) {
    detail::PngFileCloser file;
    file.f = std::fopen(path.c_str(), "rb");
    if (file.f == nullptr) {
        throw IoError("cannot open image: " + path);
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
    if (png == nullptr || info == nullptr) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng initialization failed for: " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("failed decoding PNG: " + path);
    }
    png_init_io(png, file.f);
    png_read_info(png, info);

    // Normalize every supported layout to 8-bit RGB.
    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);
    if (depth == 16) {
        png_set_strip_16(png);
    }
    if (color == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    }
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    if (png_get_valid(png, info, PNG_INFO_tRNS)) {
        png_set_tRNS_to_alpha(png);
    }
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_gray_to_rgb(png);
    }
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    Frame frame(static_cast<int>(w), static_cast<int>(h));
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; y++) {
        rows[y] = frame.rgb.data() + static_cast<size_t>(y) * w * 3;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return frame;
}

inline void write_png(const std::string& path, const Frame& frame) {
    if (frame.width < 1 || frame.height < 1 ||
        frame.rgb.size() != static_cast<size_t>(frame.width) * frame.height * 3) {
        throw ValidationError("write_png: malformed frame");
    }
    detail::PngFileCloser file;
    file.f = std::fopen(path.c_str(), "wb");
    if (file.f == nullptr) {
        throw IoError("cannot open image for writing: " + path);
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
    if (png == nullptr || info == nullptr) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng initialization failed for: " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed encoding PNG: " + path);
    }
    png_init_io(png, file.f);
    png_set_IHDR(png, info, static_cast<png_uint_32>(frame.width),
                 static_cast<png_uint_32>(frame.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<size_t>(frame.height));
    for (int y = 0; y < frame.height; y++) {
        rows[static_cast<size_t>(y)] = const_cast<png_bytep>(
            frame.rgb.data() + static_cast<size_t>(y) * frame.width * 3);
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// Binary 8-bit PGM (P5). Used for mask and heatmap dumps; values are the
// grid scaled to [0, 255].
inline void write_pgm(const std::string& path, const Tensor& grid) {
    if (grid.rank() != 2) {
        throw ValidationError("write_pgm: expected a rank-2 grid");
    }
    int h = grid.dim(0), w = grid.dim(1);
    std::string buf = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    for (int y = 0; y < h; y++) {
        for (int x = 0; x < w; x++) {
            double v = std::min(1.0, std::max(0.0, static_cast<double>(grid.at(y, x))));
            buf.push_back(static_cast<char>(static_cast<int>(v * 255.0 + 0.5)));
        }
    }
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (f == nullptr) {
        throw IoError("cannot open for writing: " + path);
    }
    size_t n = std::fwrite(buf.data(), 1, buf.size(), f);
    std::fclose(f);
    if (n != buf.size()) {
        throw IoError("short write: " + path);
    }
}

inline std::string frame_filename(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%05d.png", index);
    return buf;
}

// Load frame_%05d.png files from a directory, consecutively numbered from
// the lowest present index. All frames must share one size.
inline std::vector<Frame> read_frame_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) {
        throw IoError("not a directory: " + dir);
    }
    std::vector<int> indices;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        int idx = 0;
        if (std::sscanf(name.c_str(), "frame_%5d.png", &idx) == 1 &&
            name == frame_filename(idx)) {
            indices.push_back(idx);
        }
    }
    if (indices.empty()) {
        throw IoError("no frame_NNNNN.png files in: " + dir);
    }
    std::sort(indices.begin(), indices.end());
    for (size_t i = 1; i < indices.size(); i++) {
        if (indices[i] != indices[0] + static_cast<int>(i)) {
            throw IoError("frame numbering has gaps in: " + dir);
        }
    }
    std::vector<Frame> frames;
    frames.reserve(indices.size());
    for (int idx : indices) {
        frames.push_back(read_png((fs::path(dir) / frame_filename(idx)).string()));
        if (frames.back().width != frames.front().width ||
            frames.back().height != frames.front().height) {
            throw ValidationError("frames disagree in size in: " + dir);
        }
    }
    return frames;
}

inline void write_frame_dir(const std::string& dir, const std::vector<Frame>& frames,
                            int first_index = 0) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!fs::is_directory(dir)) {
        throw IoError("cannot create directory: " + dir);
    }
    for (size_t i = 0; i < frames.size(); i++) {
        write_png((fs::path(dir) / frame_filename(first_index + static_cast<int>(i))).string(),
                  frames[i]);
    }
}

inline uint64_t frames_content_hash(const std::vector<Frame>& frames) {
    uint64_t h = 1469598103934665603ull;
    for (const Frame& f : frames) {
        h = fnv1a_u64(static_cast<uint64_t>(f.width), h);
        h = fnv1a_u64(static_cast<uint64_t>(f.height), h);
        h = fnv1a(f.rgb.data(), f.rgb.size(), h);
    }
    return h;
}

}  // namespace attedit
