#pragma once

#include <map>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "attedit/attention.hpp"
#include "attedit/attention_store.hpp"
#include "attedit/common.hpp"
#include "attedit/prompt.hpp"
#include "attedit/tensor.hpp"

namespace attedit {

// The mask threshold of the edit path is a fixed property of the method,
// not a tuning knob; only the inspect tool sweeps other values.
inline constexpr double kBlendTau = 0.5;

// Cross maps on grids coarser than or equal to this feed the blending mask;
// finer grids carry too little semantic localization.
inline constexpr int kMaskMaxResolution = 32;

// Column routing from edit-token space: src_col[j] >= 0 copies that source
// column, -1 marks a column inside an edited span (takes the probe map).
struct BlendPlan {
    std::vector<int> src_col;
    int src_tokens = 0;
    int edit_tokens = 0;
};

inline BlendPlan build_blend_plan(const EditSpec& spec) {
    spec.validate();
    BlendPlan plan;
    plan.src_tokens = spec.src_tokens;
    plan.edit_tokens = spec.edit_tokens;
    plan.src_col.assign(static_cast<size_t>(spec.edit_tokens), -1);
    int i = 0, j = 0;
    size_t k = 0;
    while (i < spec.src_tokens || j < spec.edit_tokens) {
        if (k < spec.pairs.size() && i == spec.pairs[k].src.begin &&
            j == spec.pairs[k].edit.begin) {
            i = spec.pairs[k].src.end;
            j = spec.pairs[k].edit.end;
            k++;
            continue;
        }
        if (i >= spec.src_tokens || j >= spec.edit_tokens) {
            throw ValidationError("blend plan: token counts outside edited spans do not align");
        }
        plan.src_col[static_cast<size_t>(j)] = i;
        i++;
        j++;
    }
    if (k != spec.pairs.size()) {
        throw ValidationError("blend plan: edited spans do not line up with token counts");
    }
    return plan;
}

// Word-level swap in edit-token space: non-edited columns are exact copies
// of the aligned source column; edited-span columns are exact copies of the
// probe map. No arithmetic touches the copied values.
inline Tensor cross_blender(const Tensor& src_map, const Tensor& probe_map,
                            const BlendPlan& plan) {
    if (src_map.rank() != 3 || probe_map.rank() != 3) {
        throw ValidationError("cross_blender: maps must be {heads, queries, tokens}");
    }
    if (src_map.dim(0) != probe_map.dim(0) || src_map.dim(1) != probe_map.dim(1)) {
        throw ValidationError("cross_blender: head/query shape mismatch between maps");
    }
    if (src_map.dim(2) != plan.src_tokens || probe_map.dim(2) != plan.edit_tokens) {
        throw ValidationError("cross_blender: map token counts do not match the edit spec");
    }
    Tensor out = probe_map;
    int h = out.dim(0), q = out.dim(1);
    for (int j = 0; j < plan.edit_tokens; j++) {
        int sj = plan.src_col[static_cast<size_t>(j)];
        if (sj < 0) {
            continue;
        }
        for (int a = 0; a < h; a++) {
            for (int b = 0; b < q; b++) {
                out.at(a, b, j) = src_map.at(a, b, sj);
            }
        }
    }
    return out;
}

inline Tensor cross_blender(const Tensor& src_map, const Tensor& probe_map,
                            const EditSpec& spec) {
    return cross_blender(src_map, probe_map, build_blend_plan(spec));
}

namespace detail {

inline int exact_grid_side(int positions) {
    int r = 0;
    while ((r + 1) * (r + 1) <= positions) {
        r++;
    }
    return r * r == positions ? r : -1;
}

}  // namespace detail

struct BlendHeat {
    Tensor grid;  // {r, r}, min-max normalized to [0, 1]
    bool degenerate = false;
};

// Aggregate the source-prompt attention footprint of the edited words: mean
// over heads, span tokens, and every contributing layer's cross map (grids
// up to kMaskMaxResolution, each resampled to the largest contributing
// grid), then min-max normalized per frame. A constant aggregate carries no
// spatial signal and is flagged degenerate.
inline BlendHeat blending_heat(const std::vector<Tensor>& src_cross_maps,
                               const EditSpec& spec) {
    if (spec.num_edits() == 0) {
        throw ValidationError("blending mask undefined without edit words");
    }
    std::vector<Tensor> heats;
    int canonical = 0;
    for (const Tensor& map : src_cross_maps) {
        if (map.rank() != 3) {
            throw ValidationError("blending mask: cross maps must be {heads, queries, tokens}");
        }
        if (map.dim(2) != spec.src_tokens) {
            throw ValidationError("blending mask: map token count does not match the edit plan");
        }
        int r = detail::exact_grid_side(map.dim(1));
        if (r < 0) {
            throw ValidationError("blending mask: query positions are not a square grid");
        }
        if (r > kMaskMaxResolution) {
            continue;
        }
        Tensor heat({r, r});
        int heads = map.dim(0);
        int span_tokens = 0;
        for (const EditPair& pr : spec.pairs) {
            span_tokens += pr.src.length();
        }
        for (int y = 0; y < r; y++) {
            for (int x = 0; x < r; x++) {
                double s = 0.0;
                for (int h = 0; h < heads; h++) {
                    for (const EditPair& pr : spec.pairs) {
                        for (int c = pr.src.begin; c < pr.src.end; c++) {
                            s += map.at(h, y * r + x, c);
                        }
                    }
                }
                heat.at(y, x) = static_cast<float>(s / (heads * span_tokens));
            }
        }
        heats.push_back(std::move(heat));
        canonical = std::max(canonical, r);
    }
    if (heats.empty()) {
        throw ValidationError("blending mask: no cross maps at usable resolutions");
    }
    Tensor agg({canonical, canonical});
    for (const Tensor& heat : heats) {
        Tensor up = resample_bilinear(heat, canonical, canonical);
        for (size_t i = 0; i < agg.size(); i++) {
            agg.data[i] += up.data[i] / static_cast<float>(heats.size());
        }
    }
    float mn = agg.data[0], mx = agg.data[0];
    for (float v : agg.data) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    BlendHeat out;
    if (mx - mn < 1e-12f) {
        out.grid = Tensor({canonical, canonical});
        out.degenerate = true;
        return out;
    }
    out.grid = agg;
    for (float& v : out.grid.data) {
        v = (v - mn) / (mx - mn);
    }
    return out;
}

// Resample a normalized heat grid to the target grid and threshold it;
// values >= tau map to 1 (inclusive boundary, fixed for reproducibility).
inline Tensor threshold_mask(const Tensor& heat, int th, int tw, double tau) {
    Tensor mask = resample_bilinear(heat, th, tw);
    for (float& v : mask.data) {
        v = static_cast<double>(v) >= tau ? 1.0f : 0.0f;
    }
    return mask;
}

// Binary per-frame mask from the source cross maps of one frame at one
// timestep. Degenerate aggregates yield an all-zero mask (spatial blending
// falls back to pure preservation) with a warning.
inline Tensor blending_mask(const std::vector<Tensor>& src_cross_maps, const EditSpec& spec,
                            int th, int tw, double tau = kBlendTau) {
    BlendHeat heat = blending_heat(src_cross_maps, spec);
    if (heat.degenerate) {
        log_warn("blending mask degenerate (constant attention aggregate); using all-zero mask");
        return Tensor({th, tw});
    }
    return threshold_mask(heat.grid, th, tw, tau);
}

// Row partition of two spatial-temporal maps: query rows under mask 1 take
// the edit map's row, the rest keep the source row. Rows are exact copies.
inline Tensor blend_rows(const Tensor& s_src, const Tensor& s_edit, const Tensor& mask) {
    if (!same_shape(s_src, s_edit) || s_src.rank() != 3) {
        throw ValidationError("blend_rows: spatial-temporal maps must be shape-identical");
    }
    int q = s_src.dim(1);
    if (static_cast<int>(mask.size()) != q) {
        throw ValidationError("blend_rows: mask size does not match query positions");
    }
    for (float v : mask.data) {
        if (v != 0.0f && v != 1.0f) {
            throw ValidationError("blend_rows: mask must be binary");
        }
    }
    Tensor out = s_src;
    int h = s_src.dim(0), kd = s_src.dim(2);
    for (int b = 0; b < q; b++) {
        if (mask.data[static_cast<size_t>(b)] == 0.0f) {
            continue;
        }
        for (int a = 0; a < h; a++) {
            for (int c = 0; c < kd; c++) {
                out.at(a, b, c) = s_edit.at(a, b, c);
            }
        }
    }
    return out;
}

// Mask built from this frame's source cross maps at the layer's own query
// grid, then applied as a row partition.
inline Tensor spatial_blender(const std::vector<Tensor>& src_cross_maps, const Tensor& s_src,
                              const Tensor& s_edit, const EditSpec& spec) {
    if (!same_shape(s_src, s_edit) || s_src.rank() != 3) {
        throw ValidationError("spatial_blender: maps must be shape-identical rank-3");
    }
    int r = detail::exact_grid_side(s_src.dim(1));
    if (r < 0) {
        throw ValidationError("spatial_blender: query positions are not a square grid");
    }
    Tensor mask = blending_mask(src_cross_maps, spec, r, r);
    return blend_rows(s_src, s_edit, mask);
}

// Per-step controller diagnostics, one row per denoising step.
struct StepStats {
    int timestep = 0;
    int cross_substitutions = 0;
    int spatial_substitutions = 0;
    int masks_built = 0;
    int degenerate_masks = 0;
    double mask_coverage_sum = 0.0;  // sum over built masks of their mean value

    double mask_coverage() const {
        return masks_built > 0 ? mask_coverage_sum / masks_built : 0.0;
    }
};

// Routes attention maps during the denoising loop: the probe pass records
// the edit-prompt maps, the starred pass substitutes blended maps built
// from the stored source maps and the probe scratch. With both edit flags
// off every hook returns its input unchanged.
//
// Holds a pointer into the caller's AttentionStore; the store must outlive
// the controller. Steps are sequenced begin_step -> probe -> starred ->
// end_step by the pipeline.
class AttentionController {
public:
    AttentionController(const AttentionStore* store, EditSpec spec,
                        std::vector<int> layer_ids)
        : store_(store), spec_(std::move(spec)), plan_(build_blend_plan(spec_)),
          layer_ids_(std::move(layer_ids)) {}

    const EditSpec& spec() const { return spec_; }

    void begin_step(int t) {
        if (t < 1 || t > static_cast<int>(store_->meta.num_steps)) {
            throw ValidationError("controller step out of schedule range");
        }
        current_t_ = t;
        scratch_.clear();
        heat_cache_.clear();
        stats_.push_back({});
        stats_.back().timestep = t;
    }

    void end_step() { current_t_ = 0; }

    // Probe pass: record every computed map, change nothing.
    AttentionHook capture_hook() {
        return [this](const HookContext& ctx, const Tensor& map) -> Tensor {
            require_active();
            scratch_[{current_t_, ctx.layer_id, ctx.kind, ctx.frame}] = map;
            return map;
        };
    }

    // Starred pass: substitute blended maps built from the probe scratch.
    AttentionHook inject_hook() {
        return [this](const HookContext& ctx, const Tensor& map) -> Tensor {
            require_active();
            auto it = scratch_.find({current_t_, ctx.layer_id, ctx.kind, ctx.frame});
            if (it == scratch_.end()) {
                throw ValidationError("starred pass at step " + std::to_string(current_t_) +
                                      " ran before its probe pass");
            }
            return route(ctx, it->second, map);
        };
    }

    // Single-pass variant: the computed map doubles as the probe map, so
    // capture and substitution happen in one forward.
    AttentionHook fused_hook() {
        return [this](const HookContext& ctx, const Tensor& map) -> Tensor {
            require_active();
            return route(ctx, map, map);
        };
    }

    const std::vector<StepStats>& step_stats() const { return stats_; }

    // Distinct steps at which the starred pass visited each (layer, kind).
    int activations(int layer_id, MapKind kind) const {
        auto it = visited_.find({layer_id, kind});
        return it == visited_.end() ? 0 : static_cast<int>(it->second.size());
    }

    int total_cross_substitutions() const {
        int n = 0;
        for (const StepStats& s : stats_) {
            n += s.cross_substitutions;
        }
        return n;
    }

    int total_spatial_substitutions() const {
        int n = 0;
        for (const StepStats& s : stats_) {
            n += s.spatial_substitutions;
        }
        return n;
    }

private:
    void require_active() const {
        if (current_t_ == 0) {
            throw ValidationError("controller hook used outside begin_step/end_step");
        }
    }

    // Core substitution logic shared by inject and fused paths.
    Tensor route(const HookContext& ctx, const Tensor& probe_map, const Tensor& computed) {
        visited_[{ctx.layer_id, ctx.kind}].insert(current_t_);
        if (ctx.kind == MapKind::cross) {
            if (!spec_.enable_cross) {
                return computed;
            }
            const Tensor& src =
                store_->at({current_t_, ctx.layer_id, MapKind::cross, ctx.frame}).weights;
            stats_.back().cross_substitutions++;
            return cross_blender(src, probe_map, plan_);
        }
        if (!spec_.enable_spatial) {
            return computed;
        }
        const Tensor& src =
            store_->at({current_t_, ctx.layer_id, MapKind::spatial_temporal, ctx.frame}).weights;
        if (!same_shape(src, probe_map)) {
            throw ValidationError("stored and probe spatial-temporal maps disagree in shape");
        }
        int r = detail::exact_grid_side(probe_map.dim(1));
        if (r < 0) {
            throw ValidationError("spatial-temporal query positions are not a square grid");
        }
        Tensor mask = mask_for_frame(ctx.frame, r);
        stats_.back().spatial_substitutions++;
        return blend_rows(src, probe_map, mask);
    }

    // Heat aggregates are per (step, frame); thresholded masks additionally
    // depend on the layer's grid and are cheap to rebuild from the cache.
    Tensor mask_for_frame(int frame, int r) {
        auto it = heat_cache_.find(frame);
        if (it == heat_cache_.end()) {
            std::vector<Tensor> cross_maps;
            for (int layer : layer_ids_) {
                cross_maps.push_back(
                    store_->at({current_t_, layer, MapKind::cross, frame}).weights);
            }
            BlendHeat heat = blending_heat(cross_maps, spec_);
            if (heat.degenerate) {
                log_warn("blending mask degenerate at step " + std::to_string(current_t_) +
                         ", frame " + std::to_string(frame) + "; using all-zero mask");
            }
            it = heat_cache_.emplace(frame, std::move(heat)).first;
        }
        Tensor mask;
        if (it->second.degenerate) {
            mask = Tensor({r, r});
            stats_.back().degenerate_masks++;
        } else {
            mask = threshold_mask(it->second.grid, r, r, kBlendTau);
        }
        stats_.back().masks_built++;
        double cover = 0.0;
        for (float v : mask.data) {
            cover += v;
        }
        stats_.back().mask_coverage_sum += cover / static_cast<double>(mask.size());
        return mask;
    }

    const AttentionStore* store_;
    EditSpec spec_;
    BlendPlan plan_;
    std::vector<int> layer_ids_;
    int current_t_ = 0;
    std::map<StoreKey, Tensor> scratch_;
    std::map<int, BlendHeat> heat_cache_;
    std::vector<StepStats> stats_;
    std::map<std::pair<int, MapKind>, std::set<int>> visited_;
};

// Checks the store is complete for its declared steps/frames and that the
// edit spec's source token count matches the stored cross maps, then wires
// up a controller over them.
inline AttentionController make_controller(const AttentionStore& store, const EditSpec& spec) {
    spec.validate();
    std::set<int> layer_set;
    for (const auto& [key, map] : store.entries) {
        layer_set.insert(key.layer_id);
    }
    std::vector<int> layer_ids(layer_set.begin(), layer_set.end());
    store.validate_complete(layer_ids, static_cast<int>(store.meta.num_frames),
                            static_cast<int>(store.meta.num_steps));
    for (const auto& [key, map] : store.entries) {
        if (key.kind == MapKind::cross && map.weights.dim(2) != spec.src_tokens) {
            throw ValidationError("edit plan token count does not match the stored maps");
        }
    }
    return AttentionController(&store, spec, std::move(layer_ids));
}

}  // namespace attedit
