// Shared fixtures for the test suites.
#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "attedit/common.hpp"
#include "attedit/image.hpp"
#include "attedit/tensor.hpp"

namespace testutil {

inline attedit::Tensor random_tensor(attedit::Rng& rng, std::vector<int> dims,
                                     double scale = 1.0) {
    attedit::Tensor t(std::move(dims));
    for (float& v : t.data) {
        v = static_cast<float>(rng.gaussian() * scale);
    }
    return t;
}

inline attedit::LatentVideo random_latent(attedit::Rng& rng, int frames, int channels,
                                          int height, int width, double scale = 1.0) {
    attedit::LatentVideo z;
    z.data = random_tensor(rng, {frames, channels, height, width}, scale);
    return z;
}

// Row-stochastic rank-3 map {heads, q, kdim} built like a softmax output.
inline attedit::Tensor random_prob_map(attedit::Rng& rng, int heads, int q, int kdim) {
    attedit::Tensor t({heads, q, kdim});
    for (int h = 0; h < heads; h++) {
        for (int i = 0; i < q; i++) {
            double denom = 0.0;
            std::vector<double> row(static_cast<size_t>(kdim));
            for (int j = 0; j < kdim; j++) {
                row[static_cast<size_t>(j)] = std::exp(rng.gaussian());
                denom += row[static_cast<size_t>(j)];
            }
            for (int j = 0; j < kdim; j++) {
                t.at(h, i, j) = static_cast<float>(row[static_cast<size_t>(j)] / denom);
            }
        }
    }
    return t;
}

inline std::vector<attedit::Frame> make_frames(int n, int side, uint64_t seed = 1) {
    attedit::Rng rng(seed);
    std::vector<attedit::Frame> frames;
    for (int k = 0; k < n; k++) {
        attedit::Frame f;
        f.width = side;
        f.height = side;
        f.rgb.resize(static_cast<size_t>(side) * side * 3);
        for (uint8_t& v : f.rgb) {
            v = static_cast<uint8_t>(rng.uniform() * 255.0);
        }
        frames.push_back(std::move(f));
    }
    return frames;
}

inline bool frames_equal(const std::vector<attedit::Frame>& a,
                         const std::vector<attedit::Frame>& b) {
    if (a.size() != b.size()) {
        return false;
    }
    for (size_t i = 0; i < a.size(); i++) {
        if (a[i].width != b[i].width || a[i].height != b[i].height ||
            a[i].rgb != b[i].rgb) {
            return false;
        }
    }
    return true;
}

inline bool bit_equal(const attedit::Tensor& a, const attedit::Tensor& b) {
    return a.dims == b.dims &&
           std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

// Fresh empty directory under the system temp root.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t") {
        path_ = std::filesystem::temp_directory_path() /
                ("attedit_test_" + tag + "_" + std::to_string(counter()++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string str() const { return path_.string(); }
    std::filesystem::path path() const { return path_; }
    std::string sub(const std::string& name) const { return (path_ / name).string(); }

private:
    static int& counter() {
        static int n = 0;
        return n;
    }
    std::filesystem::path path_;
};

// Minimal binary PGM reader for checking emitted masks.
struct Pgm {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels;
};

inline Pgm read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw attedit::IoError("cannot open pgm: " + path);
    }
    std::string magic;
    int maxval = 0;
    Pgm p;
    in >> magic >> p.width >> p.height >> maxval;
    in.get();
    if (magic != "P5" || p.width < 1 || p.height < 1 || maxval != 255) {
        throw attedit::IoError("unexpected pgm header in " + path);
    }
    p.pixels.resize(static_cast<size_t>(p.width) * p.height);
    in.read(reinterpret_cast<char*>(p.pixels.data()),
            static_cast<std::streamsize>(p.pixels.size()));
    if (!in) {
        throw attedit::IoError("truncated pgm: " + path);
    }
    return p;
}

}  // namespace testutil
