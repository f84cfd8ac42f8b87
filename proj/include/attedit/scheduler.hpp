#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "attedit/attention_store.hpp"
#include "attedit/common.hpp"
#include "attedit/control.hpp"
#include "attedit/denoiser.hpp"
#include "attedit/prompt.hpp"
#include "attedit/schedule.hpp"
#include "attedit/tensor.hpp"

namespace attedit {

namespace detail {

inline void check_step_args(const LatentVideo& z, const LatentVideo& eps, int t,
                            const NoiseSchedule& sched) {
    if (t < 1 || t > sched.num_steps) {
        throw ValidationError("timestep " + std::to_string(t) + " outside [1, " +
                              std::to_string(sched.num_steps) + "]");
    }
    if (!same_shape(z.data, eps.data)) {
        throw ValidationError("eps shape does not match latent shape");
    }
}

// Rethrow with the offending timestep attached, preserving the error class.
template <typename Fn>
auto with_step_context(int t, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ValidationError& e) {
        throw ValidationError("step " + std::to_string(t) + ": " + e.what());
    } catch (const IoError& e) {
        throw IoError("step " + std::to_string(t) + ": " + e.what());
    } catch (const std::exception& e) {
        throw BackendError("step " + std::to_string(t) + ": " + e.what());
    }
}

}  // namespace detail

// One deterministic denoising step t -> t-1:
//   z_{t-1} = sqrt(abar_{t-1}) * (z_t - sqrt(1-abar_t) * eps) / sqrt(abar_t)
//           + sqrt(1-abar_{t-1}) * eps
inline LatentVideo ddim_sample_step(const LatentVideo& z_t, const LatentVideo& eps, int t,
                                    const NoiseSchedule& sched) {
    detail::check_step_args(z_t, eps, t, sched);
    double ab_t = sched.alpha_bar(t), ab_prev = sched.alpha_bar(t - 1);
    double sa_t = std::sqrt(ab_t), sa_prev = std::sqrt(ab_prev);
    double s1_t = std::sqrt(1.0 - ab_t), s1_prev = std::sqrt(1.0 - ab_prev);
    LatentVideo out = z_t;
    for (size_t i = 0; i < out.data.size(); i++) {
        double z = z_t.data.data[i], e = eps.data.data[i];
        out.data.data[i] = static_cast<float>(sa_prev * (z - s1_t * e) / sa_t + s1_prev * e);
    }
    return out;
}

// Exact algebraic inverse of ddim_sample_step at fixed eps, stepping t-1 -> t:
//   z_t = sqrt(abar_t) * (z_{t-1} - sqrt(1-abar_{t-1}) * eps) / sqrt(abar_{t-1})
//       + sqrt(1-abar_t) * eps
inline LatentVideo ddim_invert_step(const LatentVideo& z_prev, const LatentVideo& eps, int t,
                                    const NoiseSchedule& sched) {
    detail::check_step_args(z_prev, eps, t, sched);
    double ab_t = sched.alpha_bar(t), ab_prev = sched.alpha_bar(t - 1);
    double sa_t = std::sqrt(ab_t), sa_prev = std::sqrt(ab_prev);
    double s1_t = std::sqrt(1.0 - ab_t), s1_prev = std::sqrt(1.0 - ab_prev);
    LatentVideo out = z_prev;
    for (size_t i = 0; i < out.data.size(); i++) {
        double z = z_prev.data.data[i], e = eps.data.data[i];
        out.data.data[i] = static_cast<float>(sa_t * (z - s1_prev * e) / sa_prev + s1_t * e);
    }
    return out;
}

// Full latent chain of one run. latents[0] is the clean end, latents[T] the
// noise end; the store holds every captured map keyed by step.
struct TrajectoryRecord {
    std::vector<LatentVideo> latents;
    AttentionStore store;
};

namespace detail {

inline LatentVideo checked_forward(const DenoiserBackend& denoiser, const LatentVideo& z,
                                   int conditioning_t, const Tensor& emb,
                                   const AttentionHook& hook, int step) {
    LatentVideo eps = with_step_context(
        step, [&] { return denoiser.forward(z, conditioning_t, emb, hook); });
    if (!same_shape(eps.data, z.data)) {
        throw BackendError("step " + std::to_string(step) +
                           ": denoiser returned mismatched eps shape");
    }
    if (!all_finite(eps.data)) {
        throw BackendError("step " + std::to_string(step) +
                           ": denoiser returned non-finite eps");
    }
    return eps;
}

}  // namespace detail

// Walk a clean latent up the noise chain t: 1 -> T, capturing every
// attention map under its step index. The eps for step t is evaluated at
// the current latent with step t-1's conditioning (the usual deterministic-
// inversion approximation).
inline TrajectoryRecord invert_record(const LatentVideo& z0, const TokenizedPrompt& prompt,
                                      const DenoiserBackend& denoiser,
                                      const NoiseSchedule& sched) {
    z0.validate();
    sched.validate();
    Tensor emb = denoiser.embed_prompt(prompt);
    TrajectoryRecord rec;
    rec.store.meta.schedule_hash = sched.hash();
    rec.store.meta.prompt_hash = prompt_hash(prompt);
    rec.store.meta.frame_hash = fnv1a(z0.data.data.data(), z0.data.data.size() * sizeof(float));
    rec.store.meta.backend_hash = denoiser.identity_hash();
    rec.store.meta.num_frames = static_cast<uint32_t>(z0.frames());
    rec.store.meta.num_steps = static_cast<uint32_t>(sched.num_steps);
    rec.latents.reserve(static_cast<size_t>(sched.num_steps) + 1);
    rec.latents.push_back(z0);
    LatentVideo z = z0;
    for (int t = 1; t <= sched.num_steps; t++) {
        AttentionHook capture = [&rec, t](const HookContext& ctx, const Tensor& map) {
            AttentionMap entry;
            entry.kind = ctx.kind;
            entry.weights = map;
            rec.store.insert({t, ctx.layer_id, ctx.kind, ctx.frame}, std::move(entry));
            return map;
        };
        LatentVideo eps = detail::checked_forward(denoiser, z, t - 1, emb, capture, t);
        z = ddim_invert_step(z, eps, t, sched);
        rec.latents.push_back(z);
    }
    return rec;
}

inline std::pair<LatentVideo, AttentionStore> invert(const LatentVideo& z0,
                                                     const TokenizedPrompt& prompt,
                                                     const DenoiserBackend& denoiser,
                                                     const NoiseSchedule& sched) {
    TrajectoryRecord rec = invert_record(z0, prompt, denoiser, sched);
    return {rec.latents.back(), std::move(rec.store)};
}

// Result of one denoising run. captured holds the maps each forward pass
// computed (before any controller substitution); latents[t] is the latent
// entering step t, latents[0] the clean output.
struct SampleResult {
    std::vector<LatentVideo> latents;
    AttentionStore captured;

    const LatentVideo& output() const { return latents.front(); }
};

// Per-step hook factory for callers that need custom map routing without a
// full controller (tests, replay probes). Returning an empty hook disables
// routing for that step.
using StepHookProvider = std::function<AttentionHook(int t)>;

// Walk a noisy latent down the chain t: T -> 1. When a controller is
// supplied, every computed map is routed through it (single-pass capture +
// substitution); a StepHookProvider gives raw per-step routing instead.
inline SampleResult sample(const LatentVideo& zT, const TokenizedPrompt& prompt,
                           const DenoiserBackend& denoiser, const NoiseSchedule& sched,
                           AttentionController* controller = nullptr,
                           const StepHookProvider& step_hook = {}) {
    if (controller != nullptr && step_hook) {
        throw ValidationError("sample takes a controller or a step hook, not both");
    }
    zT.validate();
    sched.validate();
    Tensor emb = denoiser.embed_prompt(prompt);
    SampleResult res;
    res.captured.meta.schedule_hash = sched.hash();
    res.captured.meta.prompt_hash = prompt_hash(prompt);
    res.captured.meta.frame_hash =
        fnv1a(zT.data.data.data(), zT.data.data.size() * sizeof(float));
    res.captured.meta.backend_hash = denoiser.identity_hash();
    res.captured.meta.num_frames = static_cast<uint32_t>(zT.frames());
    res.captured.meta.num_steps = static_cast<uint32_t>(sched.num_steps);
    res.latents.assign(static_cast<size_t>(sched.num_steps) + 1, LatentVideo{});
    res.latents[static_cast<size_t>(sched.num_steps)] = zT;
    LatentVideo z = zT;
    for (int t = sched.num_steps; t >= 1; t--) {
        AttentionHook routed;
        if (controller != nullptr) {
            controller->begin_step(t);
            routed = controller->fused_hook();
        } else if (step_hook) {
            routed = step_hook(t);
        }
        AttentionHook hook = [&res, t, &routed](const HookContext& ctx, const Tensor& map) {
            AttentionMap entry;
            entry.kind = ctx.kind;
            entry.weights = map;
            res.captured.insert({t, ctx.layer_id, ctx.kind, ctx.frame}, std::move(entry));
            return routed ? routed(ctx, map) : map;
        };
        LatentVideo eps = detail::checked_forward(denoiser, z, t, emb, hook, t);
        z = ddim_sample_step(z, eps, t, sched);
        res.latents[static_cast<size_t>(t) - 1] = z;
        if (controller != nullptr) {
            controller->end_step();
        }
    }
    return res;
}

}  // namespace attedit
