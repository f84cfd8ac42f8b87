#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "attedit/common.hpp"
#include "attedit/image.hpp"
#include "attedit/tensor.hpp"

namespace attedit {

// Embeds frames and prompt strings into one shared unit-norm vector space.
class EmbedderBackend {
public:
    virtual ~EmbedderBackend() = default;
    virtual Tensor embed_image(const Frame& frame) const = 0;
    virtual Tensor embed_text(const std::string& text) const = 0;
};

// Desk-scale embedder: images are bilinearly downsampled to 16x16 RGB with
// a constant component appended (so an all-black frame still has a nonzero
// vector), then L2-normalized. Text hashes to a seeded gaussian direction.
class ToyEmbedder : public EmbedderBackend {
public:
    static constexpr int kSide = 16;
    static constexpr int kDim = kSide * kSide * 3 + 1;

    explicit ToyEmbedder(uint64_t seed = 0) : seed_(seed) {}

    Tensor embed_image(const Frame& frame) const override {
        if (frame.width < 1 || frame.height < 1) {
            throw ValidationError("cannot embed an empty frame");
        }
        Tensor v({kDim});
        for (int c = 0; c < 3; c++) {
            Tensor channel({frame.height, frame.width});
            for (int y = 0; y < frame.height; y++) {
                for (int x = 0; x < frame.width; x++) {
                    channel.at(y, x) = static_cast<float>(frame.at(y, x, c) / 255.0);
                }
            }
            Tensor small = resample_bilinear(channel, kSide, kSide);
            for (int i = 0; i < kSide * kSide; i++) {
                v.at(c * kSide * kSide + i) = small.data[static_cast<size_t>(i)];
            }
        }
        v.at(kDim - 1) = 1.0f;
        return normalized(v);
    }

    Tensor embed_text(const std::string& text) const override {
        Rng rng(fnv1a_str(text, seed_ ^ 0x74657874ull));
        Tensor v({kDim});
        for (float& x : v.data) {
            x = static_cast<float>(rng.gaussian());
        }
        return normalized(v);
    }

private:
    static Tensor normalized(Tensor v) {
        double n = l2_norm(v);
        if (n <= 0.0) {
            throw ValidationError("embedding has zero norm");
        }
        for (float& x : v.data) {
            x = static_cast<float>(x / n);
        }
        return v;
    }

    uint64_t seed_;
};

inline double cosine_similarity(const Tensor& a, const Tensor& b) {
    if (!same_shape(a, b) || a.rank() != 1) {
        throw ValidationError("cosine: need two vectors of equal dimension");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); i++) {
        dot += static_cast<double>(a.data[i]) * b.data[i];
        na += static_cast<double>(a.data[i]) * a.data[i];
        nb += static_cast<double>(b.data[i]) * b.data[i];
    }
    if (na <= 0.0 || nb <= 0.0) {
        throw ValidationError("cosine: zero-norm vector");
    }
    return dot / std::sqrt(na * nb);
}

// Mean cosine over consecutive embedding pairs.
inline double tem_con_embeddings(const std::vector<Tensor>& embeddings) {
    if (embeddings.size() < 2) {
        throw ValidationError("temporal consistency needs at least 2 frames");
    }
    double sum = 0.0;
    for (size_t k = 0; k + 1 < embeddings.size(); k++) {
        sum += cosine_similarity(embeddings[k], embeddings[k + 1]);
    }
    return sum / static_cast<double>(embeddings.size() - 1);
}

// Fraction of frames strictly closer to the edit direction; ties lose.
inline double frame_acc_embeddings(const std::vector<Tensor>& embeddings, const Tensor& src,
                                   const Tensor& edit) {
    if (embeddings.empty()) {
        throw ValidationError("frame accuracy needs at least 1 frame");
    }
    int wins = 0;
    for (const Tensor& e : embeddings) {
        if (cosine_similarity(e, edit) > cosine_similarity(e, src)) {
            wins++;
        }
    }
    return static_cast<double>(wins) / static_cast<double>(embeddings.size());
}

inline std::vector<Tensor> embed_frames(const std::vector<Frame>& frames,
                                        const EmbedderBackend& embedder) {
    std::vector<Tensor> out;
    out.reserve(frames.size());
    for (const Frame& f : frames) {
        out.push_back(embedder.embed_image(f));
    }
    return out;
}

inline double tem_con(const std::vector<Frame>& frames, const EmbedderBackend& embedder) {
    return tem_con_embeddings(embed_frames(frames, embedder));
}

inline double frame_acc(const std::vector<Frame>& frames, const std::string& src_prompt,
                        const std::string& edit_prompt, const EmbedderBackend& embedder) {
    if (src_prompt == edit_prompt) {
        throw ValidationError("frame accuracy is undefined for identical prompts");
    }
    return frame_acc_embeddings(embed_frames(frames, embedder),
                                embedder.embed_text(src_prompt),
                                embedder.embed_text(edit_prompt));
}

struct FrameRow {
    int index = 0;
    double src_cos = 0.0;
    double edit_cos = 0.0;
    bool win = false;
};

struct EvalReport {
    bool has_tem_con = false;
    double tem_con = 0.0;
    double frame_acc = 0.0;
    std::vector<FrameRow> rows;
};

// Single-frame inputs still report frame accuracy; temporal consistency is
// marked unavailable instead of erroring the whole report.
inline EvalReport evaluate(const std::vector<Frame>& frames, const std::string& src_prompt,
                           const std::string& edit_prompt, const EmbedderBackend& embedder) {
    if (src_prompt == edit_prompt) {
        throw ValidationError("frame accuracy is undefined for identical prompts");
    }
    std::vector<Tensor> embs = embed_frames(frames, embedder);
    Tensor src = embedder.embed_text(src_prompt);
    Tensor edit = embedder.embed_text(edit_prompt);
    EvalReport rep;
    if (embs.size() >= 2) {
        rep.has_tem_con = true;
        rep.tem_con = tem_con_embeddings(embs);
    }
    rep.frame_acc = frame_acc_embeddings(embs, src, edit);
    for (size_t i = 0; i < embs.size(); i++) {
        FrameRow row;
        row.index = static_cast<int>(i);
        row.src_cos = cosine_similarity(embs[i], src);
        row.edit_cos = cosine_similarity(embs[i], edit);
        row.win = row.edit_cos > row.src_cos;
        rep.rows.push_back(row);
    }
    return rep;
}

namespace detail {

inline std::string format_4dp(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

}  // namespace detail

// Tab-separated table: header, then one row per named video.
inline std::string format_report_tsv(
    const std::vector<std::pair<std::string, EvalReport>>& reports) {
    std::string out = "name\ttem_con\tframe_acc\n";
    for (const auto& [name, rep] : reports) {
        out += name;
        out += '\t';
        out += rep.has_tem_con ? detail::format_4dp(rep.tem_con) : "NA";
        out += '\t';
        out += detail::format_4dp(rep.frame_acc);
        out += '\n';
    }
    return out;
}

}  // namespace attedit
