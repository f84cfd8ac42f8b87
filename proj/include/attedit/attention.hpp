#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "attedit/attention_store.hpp"
#include "attedit/common.hpp"
#include "attedit/tensor.hpp"

namespace attedit {

// Identifies where in the network an attention map was computed. Hooks use
// this to decide whether to capture or replace the map.
struct HookContext {
    int layer_id = 0;
    MapKind kind = MapKind::cross;
    int timestep = 0;
    int frame = 0;
};

// Receives the freshly computed map and returns the map the layer should
// apply. Returning the argument unchanged leaves the layer untouched.
using AttentionHook = std::function<Tensor(const HookContext&, const Tensor&)>;

// Per-layer projection weights. wq/wk/wv are {model_dim, heads * head_dim};
// wo maps the concatenated head outputs back to model_dim.
struct ProjectionSet {
    Tensor wq, wk, wv, wo;
    int heads = 1;
    int head_dim = 1;

    int model_dim() const { return wq.dim(0); }

    void validate() const {
        int inner = heads * head_dim;
        if (wq.rank() != 2 || wk.rank() != 2 || wv.rank() != 2 || wo.rank() != 2) {
            throw ValidationError("projection weights must be 2-D");
        }
        if (wq.dim(1) != inner || wk.dim(1) != inner || wv.dim(1) != inner) {
            throw ValidationError("projection output dim must equal heads * head_dim");
        }
        if (wk.dim(0) != wv.dim(0)) {
            throw ValidationError("key and value projections must share input dim");
        }
        if (wo.dim(0) != inner || wo.dim(1) != wq.dim(0)) {
            throw ValidationError("output projection must map heads * head_dim back to model dim");
        }
    }
};

namespace detail {

// Project {rows, in_dim} features through a {in_dim, out_dim} weight into a
// double buffer, keeping full precision between stages.
inline std::vector<double> project_double(const Tensor& features, const Tensor& weight) {
    int rows = features.dim(0), in_dim = features.dim(1), out_dim = weight.dim(1);
    if (weight.dim(0) != in_dim) {
        throw ValidationError("projection input dim does not match features");
    }
    std::vector<double> out(static_cast<size_t>(rows) * out_dim, 0.0);
    for (int i = 0; i < rows; i++) {
        for (int c = 0; c < in_dim; c++) {
            double f = features.at(i, c);
            for (int d = 0; d < out_dim; d++) {
                out[static_cast<size_t>(i) * out_dim + d] +=
                    f * static_cast<double>(weight.at(c, d));
            }
        }
    }
    return out;
}

}  // namespace detail

// Compute the per-head attention map for queries drawn from `features` and
// keys from `context`. features is {N, model_dim}, context {M, key_dim}.
// All intermediates stay in double; the map itself is quantized to float32,
// the precision every hook sees and every stored map carries.
inline Tensor compute_attention_map(const Tensor& features, const Tensor& context,
                                    const ProjectionSet& proj) {
    std::vector<double> q = detail::project_double(features, proj.wq);
    std::vector<double> k = detail::project_double(context, proj.wk);
    int heads = proj.heads, head_dim = proj.head_dim;
    int inner = heads * head_dim;
    int nq = features.dim(0), nk = context.dim(0);
    Tensor map({heads, nq, nk});
    double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    std::vector<double> row(static_cast<size_t>(nk));
    for (int h = 0; h < heads; h++) {
        int off = h * head_dim;
        for (int i = 0; i < nq; i++) {
            double mx = -1e300;
            for (int j = 0; j < nk; j++) {
                double dot = 0.0;
                for (int d = 0; d < head_dim; d++) {
                    dot += q[static_cast<size_t>(i) * inner + off + d] *
                           k[static_cast<size_t>(j) * inner + off + d];
                }
                row[static_cast<size_t>(j)] = dot * scale;
                mx = std::max(mx, row[static_cast<size_t>(j)]);
            }
            double denom = 0.0;
            for (int j = 0; j < nk; j++) {
                row[static_cast<size_t>(j)] = std::exp(row[static_cast<size_t>(j)] - mx);
                denom += row[static_cast<size_t>(j)];
            }
            for (int j = 0; j < nk; j++) {
                map.at(h, i, j) = static_cast<float>(row[static_cast<size_t>(j)] / denom);
            }
        }
    }
    return map;
}

// Multiply a (possibly substituted) float32 map against freshly projected
// values and reproject. Rows whose sum drifted beyond 1e-4 from 1 are
// renormalized first; smaller drift is applied as-is so an identity hook is
// bit-exact against the no-hook path.
inline Tensor apply_attention_map(const Tensor& map, const Tensor& context,
                                  const ProjectionSet& proj) {
    if (map.rank() != 3 || map.dim(0) != proj.heads) {
        throw ValidationError("attention map shape does not match projection heads");
    }
    int inner = proj.heads * proj.head_dim;
    std::vector<double> v = detail::project_double(context, proj.wv);
    int nq = map.dim(1), nk = map.dim(2);
    if (context.dim(0) != nk) {
        throw ValidationError("attention map key dim does not match context length");
    }
    std::vector<double> heads_out(static_cast<size_t>(nq) * inner, 0.0);
    for (int h = 0; h < proj.heads; h++) {
        int off = h * proj.head_dim;
        for (int i = 0; i < nq; i++) {
            double sum = 0.0;
            for (int j = 0; j < nk; j++) {
                sum += static_cast<double>(map.at(h, i, j));
            }
            double inv = std::abs(sum - 1.0) > 1e-4 ? 1.0 / sum : 1.0;
            for (int d = 0; d < proj.head_dim; d++) {
                double acc = 0.0;
                for (int j = 0; j < nk; j++) {
                    acc += static_cast<double>(map.at(h, i, j)) *
                           v[static_cast<size_t>(j) * inner + off + d];
                }
                heads_out[static_cast<size_t>(i) * inner + off + d] = acc * inv;
            }
        }
    }
    Tensor out({nq, proj.wo.dim(1)});
    for (int i = 0; i < nq; i++) {
        for (int c = 0; c < proj.wo.dim(1); c++) {
            double acc = 0.0;
            for (int d = 0; d < inner; d++) {
                acc += heads_out[static_cast<size_t>(i) * inner + d] *
                       static_cast<double>(proj.wo.at(d, c));
            }
            out.at(i, c) = static_cast<float>(acc);
        }
    }
    return out;
}

// One cross-attention layer: queries from frame features, keys and values
// from the prompt embedding. The hook sees the computed map and provides the
// map actually applied. Returns the layer output and the map it applied.
inline std::pair<Tensor, Tensor> cross_attention(const Tensor& features,
                                                 const Tensor& prompt_embedding,
                                                 const ProjectionSet& proj,
                                                 const HookContext& ctx,
                                                 const AttentionHook& hook = {}) {
    Tensor map = compute_attention_map(features, prompt_embedding, proj);
    if (hook) {
        map = hook(ctx, map);
        if (map.rank() != 3 || map.dim(0) != proj.heads || map.dim(1) != features.dim(0)) {
            throw ValidationError("hook returned a map with mismatched head/query shape");
        }
    }
    Tensor out = apply_attention_map(map, prompt_embedding, proj);
    return {std::move(out), std::move(map)};
}

// One sparse-causal spatial-temporal layer for frame k: queries from that
// frame's features, keys and values from the features of frame 1 and frame
// k-1 concatenated along positions. Frame 1 attends to two copies of itself
// so every frame sees the same key-space width.
inline std::pair<Tensor, Tensor> sparse_causal_attention(const Tensor& features,
                                                         const Tensor& first_frame,
                                                         const Tensor& prev_frame,
                                                         const ProjectionSet& proj,
                                                         const HookContext& ctx,
                                                         const AttentionHook& hook = {}) {
    if (first_frame.dim(0) != features.dim(0) || prev_frame.dim(0) != features.dim(0)) {
        throw ValidationError("spatial-temporal attention needs equal positions per frame");
    }
    int n = features.dim(0), d = features.dim(1);
    Tensor context({2 * n, d});
    for (int i = 0; i < n; i++) {
        for (int c = 0; c < d; c++) {
            context.at(i, c) = first_frame.at(i, c);
            context.at(n + i, c) = prev_frame.at(i, c);
        }
    }
    Tensor map = compute_attention_map(features, context, proj);
    if (hook) {
        map = hook(ctx, map);
        if (map.rank() != 3 || map.dim(0) != proj.heads || map.dim(1) != n ||
            map.dim(2) != 2 * n) {
            throw ValidationError("hook returned a map with mismatched shape");
        }
    }
    Tensor out = apply_attention_map(map, context, proj);
    return {std::move(out), std::move(map)};
}

}  // namespace attedit
