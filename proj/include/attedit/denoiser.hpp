#pragma once

#include <cmath>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "attedit/attention.hpp"
#include "attedit/common.hpp"
#include "attedit/prompt.hpp"
#include "attedit/tensor.hpp"

namespace attedit {

// One attention block of a denoiser. Each block hosts a spatial-temporal
// layer followed by a cross-attention layer operating on a resolution-by-
// resolution feature grid; layer_id identifies the block in hook contexts
// and store keys.
struct LayerInfo {
    int layer_id = 0;
    int resolution = 0;
};

// Noise-prediction network interface. forward() must be pure: same inputs
// (and hook behavior) give bit-identical outputs, with one hook invocation
// per (layer, kind, frame) in a fixed order.
class DenoiserBackend {
public:
    virtual ~DenoiserBackend() = default;

    virtual std::vector<LayerInfo> layers() const = 0;
    virtual int embed_dim() const = 0;

    // Per-token embedding matrix {num_tokens, embed_dim}.
    virtual Tensor embed_prompt(const TokenizedPrompt& prompt) const = 0;

    // Predict eps for every frame of z at conditioning timestep t.
    virtual LatentVideo forward(const LatentVideo& z, int timestep,
                                const Tensor& prompt_embedding,
                                const AttentionHook& hook = {}) const = 0;

    // Stable fingerprint of this backend's parameters, recorded beside
    // captured maps so stale caches are detected when the backend changes.
    virtual uint64_t identity_hash() const { return 0; }
};

// Predicts the same constant everywhere and hosts no attention layers.
// Inversion with it is exactly invertible, which pins down scheduler
// behavior independent of any network.
class ConstantDenoiser : public DenoiserBackend {
public:
    explicit ConstantDenoiser(float value = 0.0f) : value_(value) {}

    std::vector<LayerInfo> layers() const override { return {}; }
    int embed_dim() const override { return 4; }

    uint64_t identity_hash() const override {
        uint32_t bits;
        std::memcpy(&bits, &value_, 4);
        return fnv1a_u64(bits, fnv1a_str("constant"));
    }

    Tensor embed_prompt(const TokenizedPrompt& prompt) const override {
        if (prompt.token_ids.empty()) {
            throw ValidationError("cannot embed an empty prompt");
        }
        return Tensor({static_cast<int>(prompt.token_ids.size()), embed_dim()});
    }

    LatentVideo forward(const LatentVideo& z, int, const Tensor&,
                        const AttentionHook& = {}) const override {
        LatentVideo out = z;
        std::fill(out.data.data.begin(), out.data.data.end(), value_);
        return out;
    }

private:
    float value_;
};

// Small seeded attention network standing in for a pretrained video U-Net.
// Per block: pool the latent to r x r, lift to a model dim, add a timestep
// bias, then run one sparse-causal spatial-temporal layer and one
// cross-attention layer with residuals before projecting back to latent
// space. Output scale is kept small so the inversion approximation drifts
// well below test tolerances.
class ToyDenoiser : public DenoiserBackend {
public:
    static constexpr int kHeadDim = 4;
    static constexpr int kEmbedDim = 8;
    static constexpr double kTimeScale = 0.05;
    static constexpr double kOutScale = 0.1;

    ToyDenoiser(uint64_t seed, std::vector<int> resolutions, int heads, int channels = 3)
        : seed_(seed), heads_(heads), channels_(channels),
          model_dim_(heads * kHeadDim) {
        if (resolutions.size() < 2) {
            throw ValidationError("toy denoiser needs at least 2 resolutions");
        }
        if (heads < 1 || channels < 1) {
            throw ValidationError("toy denoiser needs heads >= 1 and channels >= 1");
        }
        for (size_t b = 0; b < resolutions.size(); b++) {
            int r = resolutions[b];
            if (r < 1) {
                throw ValidationError("toy denoiser resolutions must be >= 1");
            }
            blocks_.push_back(make_block(static_cast<int>(b), r));
        }
    }

    std::vector<LayerInfo> layers() const override {
        std::vector<LayerInfo> out;
        for (const Block& b : blocks_) {
            out.push_back({b.layer_id, b.resolution});
        }
        return out;
    }

    int embed_dim() const override { return kEmbedDim; }

    uint64_t identity_hash() const override {
        uint64_t h = fnv1a_u64(seed_, fnv1a_str("toy"));
        for (const Block& b : blocks_) {
            h = fnv1a_u64(static_cast<uint64_t>(b.resolution), h);
        }
        h = fnv1a_u64(static_cast<uint64_t>(heads_), h);
        return fnv1a_u64(static_cast<uint64_t>(channels_), h);
    }

    Tensor embed_prompt(const TokenizedPrompt& prompt) const override {
        int m = static_cast<int>(prompt.token_ids.size());
        if (m < 1) {
            throw ValidationError("cannot embed an empty prompt");
        }
        Tensor emb({m, kEmbedDim});
        for (int i = 0; i < m; i++) {
            Rng rng(fnv1a_u64(static_cast<uint64_t>(prompt.token_ids[static_cast<size_t>(i)]),
                              seed_ ^ 0x70726f6d7074ull));
            for (int d = 0; d < kEmbedDim; d++) {
                emb.at(i, d) = static_cast<float>(0.5 * rng.gaussian());
            }
        }
        return emb;
    }

    LatentVideo forward(const LatentVideo& z, int timestep, const Tensor& prompt_embedding,
                        const AttentionHook& hook = {}) const override {
        z.validate();
        if (prompt_embedding.rank() != 2 || prompt_embedding.dim(1) != kEmbedDim) {
            throw ValidationError("prompt embedding must be {tokens, " +
                                  std::to_string(kEmbedDim) + "}");
        }
        int frames = z.frames(), c = z.channels(), h = z.height(), w = z.width();
        if (c != channels_) {
            throw ValidationError("latent channel count does not match denoiser");
        }
        LatentVideo eps = z;
        std::fill(eps.data.data.begin(), eps.data.data.end(), 0.0f);
        double block_weight = kOutScale / static_cast<double>(blocks_.size());

        for (const Block& block : blocks_) {
            int r = block.resolution;
            if (h % r != 0 || w % r != 0) {
                throw ValidationError("resolution " + std::to_string(r) +
                                      " does not divide latent " + std::to_string(h) + "x" +
                                      std::to_string(w));
            }
            std::vector<Tensor> feats(static_cast<size_t>(frames));
            for (int k = 0; k < frames; k++) {
                feats[static_cast<size_t>(k)] = block_features(block, z, k, timestep);
            }
            for (int k = 0; k < frames; k++) {
                const Tensor& fk = feats[static_cast<size_t>(k)];
                const Tensor& first = feats[0];
                const Tensor& prev = feats[static_cast<size_t>(k > 0 ? k - 1 : 0)];
                HookContext st_ctx{block.layer_id, MapKind::spatial_temporal, timestep, k};
                Tensor st_out =
                    sparse_causal_attention(fk, first, prev, block.st, st_ctx, hook).first;
                Tensor y = fk;
                for (size_t i = 0; i < y.size(); i++) {
                    y.data[i] += st_out.data[i];
                }
                HookContext c_ctx{block.layer_id, MapKind::cross, timestep, k};
                Tensor c_out = cross_attention(y, prompt_embedding, block.cross, c_ctx, hook).first;
                for (size_t i = 0; i < y.size(); i++) {
                    y.data[i] += c_out.data[i];
                }
                Tensor grid = features_to_grid(matmul(y, block.w_out), c, r);
                Tensor up = upsample_nearest_chw(grid, h, w);
                for (int ch = 0; ch < c; ch++) {
                    for (int yy = 0; yy < h; yy++) {
                        for (int xx = 0; xx < w; xx++) {
                            eps.data.at(k, ch, yy, xx) += static_cast<float>(
                                block_weight * static_cast<double>(up.at(ch, yy, xx)));
                        }
                    }
                }
            }
        }
        return eps;
    }

private:
    struct Block {
        int layer_id = 0;
        int resolution = 0;
        ProjectionSet st, cross;
        Tensor w_in, w_out;
        std::vector<double> time_phase;
    };

    Tensor seeded_matrix(Rng& rng, int rows, int cols, double sigma) const {
        Tensor m({rows, cols});
        for (size_t i = 0; i < m.size(); i++) {
            m.data[i] = static_cast<float>(sigma * rng.gaussian());
        }
        return m;
    }

    ProjectionSet make_projection(Rng& rng, int context_dim) const {
        ProjectionSet p;
        p.heads = heads_;
        p.head_dim = kHeadDim;
        int inner = heads_ * kHeadDim;
        p.wq = seeded_matrix(rng, model_dim_, inner, 0.45 / std::sqrt(model_dim_));
        p.wk = seeded_matrix(rng, context_dim, inner, 0.45 / std::sqrt(context_dim));
        p.wv = seeded_matrix(rng, context_dim, inner, 0.45 / std::sqrt(context_dim));
        p.wo = seeded_matrix(rng, inner, model_dim_, 0.45 / std::sqrt(inner));
        p.validate();
        return p;
    }

    Block make_block(int layer_id, int resolution) const {
        Rng rng(fnv1a_u64(static_cast<uint64_t>(layer_id), seed_ ^ 0x626c6f636bull));
        Block b;
        b.layer_id = layer_id;
        b.resolution = resolution;
        b.w_in = seeded_matrix(rng, channels_, model_dim_, 0.6 / std::sqrt(channels_));
        b.st = make_projection(rng, model_dim_);
        b.cross = make_projection(rng, kEmbedDim);
        b.w_out = seeded_matrix(rng, model_dim_, channels_, 0.6 / std::sqrt(model_dim_));
        b.time_phase.resize(static_cast<size_t>(model_dim_));
        for (double& p : b.time_phase) {
            p = rng.uniform() * 6.283185307179586;
        }
        return b;
    }

    // Pool one frame to the block resolution and lift {positions, channels}
    // into model space with a timestep-dependent bias.
    Tensor block_features(const Block& block, const LatentVideo& z, int frame,
                          int timestep) const {
        int r = block.resolution, c = z.channels();
        Tensor frame_chw({c, z.height(), z.width()});
        for (int ch = 0; ch < c; ch++) {
            for (int y = 0; y < z.height(); y++) {
                for (int x = 0; x < z.width(); x++) {
                    frame_chw.at(ch, y, x) = z.data.at(frame, ch, y, x);
                }
            }
        }
        Tensor pooled = avg_pool_chw(frame_chw, r, r);
        Tensor positions({r * r, c});
        for (int ch = 0; ch < c; ch++) {
            for (int y = 0; y < r; y++) {
                for (int x = 0; x < r; x++) {
                    positions.at(y * r + x, ch) = pooled.at(ch, y, x);
                }
            }
        }
        Tensor feats = matmul(positions, block.w_in);
        for (int d = 0; d < model_dim_; d++) {
            double bias = kTimeScale *
                          std::sin(0.7 * timestep + block.time_phase[static_cast<size_t>(d)]);
            for (int i = 0; i < r * r; i++) {
                feats.at(i, d) = static_cast<float>(static_cast<double>(feats.at(i, d)) + bias);
            }
        }
        return feats;
    }

    static Tensor features_to_grid(const Tensor& feats, int channels, int r) {
        Tensor grid({channels, r, r});
        for (int ch = 0; ch < channels; ch++) {
            for (int y = 0; y < r; y++) {
                for (int x = 0; x < r; x++) {
                    grid.at(ch, y, x) = feats.at(y * r + x, ch);
                }
            }
        }
        return grid;
    }

    uint64_t seed_;
    int heads_;
    int channels_;
    int model_dim_;
    std::vector<Block> blocks_;
};

inline std::shared_ptr<DenoiserBackend> build_toy_denoiser(uint64_t seed,
                                                           std::vector<int> resolutions,
                                                           int heads, int channels = 3) {
    return std::make_shared<ToyDenoiser>(seed, std::move(resolutions), heads, channels);
}

}  // namespace attedit
