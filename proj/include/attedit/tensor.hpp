#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <vector>

#include "attedit/common.hpp"

namespace attedit {

// Dense row-major float32 grid, up to 4 dimensions. All attention maps,
// feature grids and latents flow through this type; storage is float32 so
// serialized payloads round-trip bit-exactly, while reductions and matmuls
// accumulate in double.
struct Tensor {
    std::vector<int> dims;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> d) : dims(std::move(d)), data(numel(dims), 0.0f) {}

    static size_t numel(const std::vector<int>& d) {
        size_t n = 1;
        for (int x : d) {
            if (x <= 0) {
                throw ValidationError("tensor dimension must be positive");
            }
            n *= static_cast<size_t>(x);
        }
        return n;
    }

    size_t size() const { return data.size(); }
    int rank() const { return static_cast<int>(dims.size()); }
    int dim(int i) const { return dims[static_cast<size_t>(i)]; }

    float& at(int i) { return data[static_cast<size_t>(i)]; }
    float at(int i) const { return data[static_cast<size_t>(i)]; }
    float& at(int i, int j) { return data[static_cast<size_t>(i) * dims[1] + j]; }
    float at(int i, int j) const { return data[static_cast<size_t>(i) * dims[1] + j]; }
    float& at(int i, int j, int k) {
        return data[(static_cast<size_t>(i) * dims[1] + j) * dims[2] + k];
    }
    float at(int i, int j, int k) const {
        return data[(static_cast<size_t>(i) * dims[1] + j) * dims[2] + k];
    }
    float& at(int i, int j, int k, int l) {
        return data[((static_cast<size_t>(i) * dims[1] + j) * dims[2] + k) * dims[3] + l];
    }
    float at(int i, int j, int k, int l) const {
        return data[((static_cast<size_t>(i) * dims[1] + j) * dims[2] + k) * dims[3] + l];
    }
};

inline bool same_shape(const Tensor& a, const Tensor& b) {
    return a.dims == b.dims;
}

inline bool all_finite(const Tensor& t) {
    for (float v : t.data) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!same_shape(a, b)) {
        throw ValidationError("max_abs_diff: shape mismatch");
    }
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); i++) {
        m = std::max(m, std::abs(static_cast<double>(a.data[i]) - b.data[i]));
    }
    return m;
}

inline double l2_norm(const Tensor& t) {
    double s = 0.0;
    for (float v : t.data) {
        s += static_cast<double>(v) * v;
    }
    return std::sqrt(s);
}

// C = A(m x k) * B(k x n), double accumulation.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ValidationError("matmul: incompatible shapes");
    }
    int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor c({m, n});
    for (int i = 0; i < m; i++) {
        for (int j = 0; j < n; j++) {
            double s = 0.0;
            for (int x = 0; x < k; x++) {
                s += static_cast<double>(a.at(i, x)) * b.at(x, j);
            }
            c.at(i, j) = static_cast<float>(s);
        }
    }
    return c;
}

// Bilinear resample of a {h, w} grid using pixel-center alignment:
// src = (dst + 0.5) * in/out - 0.5, clamped at the borders.
inline Tensor resample_bilinear(const Tensor& grid, int oh, int ow) {
    if (grid.rank() != 2) {
        throw ValidationError("resample_bilinear: expected rank-2 grid");
    }
    int ih = grid.dim(0), iw = grid.dim(1);
    if (oh == ih && ow == iw) {
        return grid;
    }
    Tensor out({oh, ow});
    for (int y = 0; y < oh; y++) {
        double sy = (y + 0.5) * static_cast<double>(ih) / oh - 0.5;
        sy = std::min(std::max(sy, 0.0), static_cast<double>(ih - 1));
        int y0 = static_cast<int>(sy);
        int y1 = std::min(y0 + 1, ih - 1);
        double fy = sy - y0;
        for (int x = 0; x < ow; x++) {
            double sx = (x + 0.5) * static_cast<double>(iw) / ow - 0.5;
            sx = std::min(std::max(sx, 0.0), static_cast<double>(iw - 1));
            int x0 = static_cast<int>(sx);
            int x1 = std::min(x0 + 1, iw - 1);
            double fx = sx - x0;
            double v = (1 - fy) * ((1 - fx) * grid.at(y0, x0) + fx * grid.at(y0, x1)) +
                       fy * ((1 - fx) * grid.at(y1, x0) + fx * grid.at(y1, x1));
            out.at(y, x) = static_cast<float>(v);
        }
    }
    return out;
}

// Block-mean pooling of a {c, h, w} grid down to {c, oh, ow}; oh/ow must divide h/w.
inline Tensor avg_pool_chw(const Tensor& t, int oh, int ow) {
    if (t.rank() != 3) {
        throw ValidationError("avg_pool_chw: expected rank-3 grid");
    }
    int c = t.dim(0), h = t.dim(1), w = t.dim(2);
    if (oh <= 0 || ow <= 0 || h % oh != 0 || w % ow != 0) {
        throw ValidationError("avg_pool_chw: output size must divide input size");
    }
    int by = h / oh, bx = w / ow;
    Tensor out({c, oh, ow});
    for (int ch = 0; ch < c; ch++) {
        for (int y = 0; y < oh; y++) {
            for (int x = 0; x < ow; x++) {
                double s = 0.0;
                for (int dy = 0; dy < by; dy++) {
                    for (int dx = 0; dx < bx; dx++) {
                        s += t.at(ch, y * by + dy, x * bx + dx);
                    }
                }
                out.at(ch, y, x) = static_cast<float>(s / (by * bx));
            }
        }
    }
    return out;
}

// Nearest-neighbour upsample of a {c, h, w} grid to {c, oh, ow}; h/w must divide oh/ow.
inline Tensor upsample_nearest_chw(const Tensor& t, int oh, int ow) {
    if (t.rank() != 3) {
        throw ValidationError("upsample_nearest_chw: expected rank-3 grid");
    }
    int c = t.dim(0), h = t.dim(1), w = t.dim(2);
    if (oh % h != 0 || ow % w != 0) {
        throw ValidationError("upsample_nearest_chw: input size must divide output size");
    }
    int by = oh / h, bx = ow / w;
    Tensor out({c, oh, ow});
    for (int ch = 0; ch < c; ch++) {
        for (int y = 0; y < oh; y++) {
            for (int x = 0; x < ow; x++) {
                out.at(ch, y, x) = t.at(ch, y / by, x / bx);
            }
        }
    }
    return out;
}

// K-frame stack of latent feature grids, {K, C, H, W}. frame_offset records
// where the window sits inside the source clip; it never feeds computation.
struct LatentVideo {
    Tensor data;
    int64_t frame_offset = 0;

    LatentVideo() = default;
    LatentVideo(int k, int c, int h, int w) : data({k, c, h, w}) {}

    int frames() const { return data.dim(0); }
    int channels() const { return data.dim(1); }
    int height() const { return data.dim(2); }
    int width() const { return data.dim(3); }

    void validate() const {
        if (data.rank() != 4) {
            throw ValidationError("LatentVideo: expected {K, C, H, W} data");
        }
        if (!all_finite(data)) {
            throw ValidationError("LatentVideo: non-finite entries");
        }
    }
};

}  // namespace attedit
