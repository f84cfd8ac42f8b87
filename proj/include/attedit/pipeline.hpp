#pragma once

#include <future>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "attedit/codec.hpp"
#include "attedit/common.hpp"
#include "attedit/control.hpp"
#include "attedit/denoiser.hpp"
#include "attedit/image.hpp"
#include "attedit/prompt.hpp"
#include "attedit/schedule.hpp"
#include "attedit/scheduler.hpp"
#include "attedit/tensor.hpp"

namespace attedit {

inline constexpr int kDefaultWindowSize = 8;
inline constexpr int kDefaultMaxFrames = 64;

// Everything one window edit needs. frame_offset marks where the window
// sits in the source clip, for naming only; outputs must not depend on it.
struct EditJob {
    std::vector<Frame> frames;
    TokenizedPrompt src_prompt;
    TokenizedPrompt edit_prompt;
    EditSpec spec;
    NoiseSchedule sched;
    std::shared_ptr<DenoiserBackend> denoiser;
    std::shared_ptr<CodecBackend> codec;
    bool probe_shared = false;  // true: probe maps come from the starred latent
    int64_t frame_offset = 0;

    void validate() const {
        if (frames.empty()) {
            throw ValidationError("edit job has no frames");
        }
        if (!denoiser || !codec) {
            throw ValidationError("edit job is missing a backend");
        }
        spec.validate();
        if (spec.src_tokens != src_prompt.num_tokens() ||
            spec.edit_tokens != edit_prompt.num_tokens()) {
            throw ValidationError("edit plan token counts do not match the prompts");
        }
        sched.validate();
    }
};

struct ActivationCount {
    int layer_id = 0;
    int cross_steps = 0;
    int spatial_steps = 0;
};

struct WindowDiagnostics {
    int64_t first_frame = 0;
    int num_frames = 0;
    std::vector<StepStats> steps;        // per denoising step, t = T down to 1
    std::vector<double> probe_norms;     // latent l2 after each probe step
    std::vector<double> starred_norms;   // latent l2 after each starred step
    std::vector<ActivationCount> activations;
    int cross_substitutions = 0;
    int spatial_substitutions = 0;
};

struct WindowResult {
    std::vector<Frame> frames;
    WindowDiagnostics diag;
    AttentionStore store;   // source maps captured during inversion
    LatentVideo noise;      // inverted z_T the denoising started from
};

// Lines 3-12 of the edit loop over one window: encode, invert under the
// source prompt, then per step run the probe pass (edit prompt, capture)
// and the starred pass (edit prompt, blended substitutions), and decode the
// starred result. A cached (store, noise) pair from a previous inversion
// can be supplied; it is checked against the job's hashes before use.
inline WindowResult edit_window(const EditJob& job, const AttentionStore* cached_store = nullptr,
                                const LatentVideo* cached_noise = nullptr) {
    job.validate();
    if ((cached_store == nullptr) != (cached_noise == nullptr)) {
        throw ValidationError("cached store and noise must be supplied together");
    }
    LatentVideo z0 = job.codec->encode(job.frames);
    z0.frame_offset = job.frame_offset;

    WindowResult res;
    if (cached_store != nullptr) {
        uint64_t frame_hash =
            fnv1a(z0.data.data.data(), z0.data.data.size() * sizeof(float));
        if (cached_store->meta.schedule_hash != job.sched.hash() ||
            cached_store->meta.prompt_hash != prompt_hash(job.src_prompt) ||
            cached_store->meta.frame_hash != frame_hash ||
            cached_store->meta.backend_hash != job.denoiser->identity_hash()) {
            throw ValidationError(
                "cached attention store is stale: schedule, prompt, frame, or "
                "backend hash mismatch");
        }
        res.store = *cached_store;
        res.noise = *cached_noise;
    } else {
        auto [noise, store] = invert(z0, job.src_prompt, *job.denoiser, job.sched);
        res.noise = std::move(noise);
        res.store = std::move(store);
    }
    res.noise.frame_offset = job.frame_offset;

    AttentionController controller = make_controller(res.store, job.spec);
    Tensor emb_edit = job.denoiser->embed_prompt(job.edit_prompt);
    int steps = job.sched.num_steps;

    LatentVideo probe = res.noise;
    LatentVideo starred = res.noise;
    for (int t = steps; t >= 1; t--) {
        controller.begin_step(t);
        if (job.probe_shared) {
            LatentVideo eps = detail::checked_forward(*job.denoiser, starred, t, emb_edit,
                                                      controller.fused_hook(), t);
            starred = ddim_sample_step(starred, eps, t, job.sched);
        } else {
            LatentVideo probe_eps = detail::checked_forward(*job.denoiser, probe, t, emb_edit,
                                                            controller.capture_hook(), t);
            LatentVideo starred_eps = detail::checked_forward(
                *job.denoiser, starred, t, emb_edit, controller.inject_hook(), t);
            probe = ddim_sample_step(probe, probe_eps, t, job.sched);
            starred = ddim_sample_step(starred, starred_eps, t, job.sched);
            res.diag.probe_norms.push_back(l2_norm(probe.data));
        }
        res.diag.starred_norms.push_back(l2_norm(starred.data));
        controller.end_step();
    }

    res.frames = job.codec->decode(starred);
    res.diag.first_frame = job.frame_offset;
    res.diag.num_frames = static_cast<int>(job.frames.size());
    res.diag.steps = controller.step_stats();
    res.diag.cross_substitutions = controller.total_cross_substitutions();
    res.diag.spatial_substitutions = controller.total_spatial_substitutions();
    for (const LayerInfo& layer : job.denoiser->layers()) {
        res.diag.activations.push_back(
            {layer.layer_id, controller.activations(layer.layer_id, MapKind::cross),
             controller.activations(layer.layer_id, MapKind::spatial_temporal)});
    }
    return res;
}

struct WindowConfig {
    int window_size = kDefaultWindowSize;
    int max_frames = kDefaultMaxFrames;
    int jobs = 1;
};

struct VideoResult {
    std::vector<Frame> frames;
    std::vector<WindowDiagnostics> windows;
};

// Partition the clip into consecutive non-overlapping windows and edit each
// independently: no state crosses a window boundary, so windows may run in
// parallel. Outputs are concatenated in order.
inline VideoResult edit_video(const EditJob& job, const WindowConfig& config = {}) {
    if (config.window_size < 1) {
        throw ValidationError("window size must be >= 1");
    }
    if (job.frames.empty()) {
        throw ValidationError("edit job has no frames");
    }
    if (static_cast<int>(job.frames.size()) > config.max_frames) {
        throw ValidationError("clip exceeds the configured frame limit of " +
                              std::to_string(config.max_frames));
    }
    std::vector<EditJob> window_jobs;
    for (size_t start = 0; start < job.frames.size();
         start += static_cast<size_t>(config.window_size)) {
        size_t end = std::min(job.frames.size(), start + static_cast<size_t>(config.window_size));
        EditJob wj = job;
        wj.frames.assign(job.frames.begin() + static_cast<long>(start),
                         job.frames.begin() + static_cast<long>(end));
        wj.frame_offset = job.frame_offset + static_cast<int64_t>(start);
        window_jobs.push_back(std::move(wj));
    }

    std::vector<WindowResult> results(window_jobs.size());
    if (config.jobs > 1 && window_jobs.size() > 1) {
        std::vector<std::future<WindowResult>> futures;
        futures.reserve(window_jobs.size());
        for (const EditJob& wj : window_jobs) {
            futures.push_back(
                std::async(std::launch::async, [&wj] { return edit_window(wj); }));
        }
        for (size_t i = 0; i < futures.size(); i++) {
            results[i] = futures[i].get();
        }
    } else {
        for (size_t i = 0; i < window_jobs.size(); i++) {
            results[i] = edit_window(window_jobs[i]);
        }
    }

    VideoResult out;
    for (WindowResult& r : results) {
        out.frames.insert(out.frames.end(), r.frames.begin(), r.frames.end());
        out.windows.push_back(std::move(r.diag));
    }
    return out;
}

struct ReconstructionResult {
    std::vector<Frame> frames;
    double latent_drift = 0.0;  // max-abs gap between z0 and its round trip
};

// Controller-free baseline: encode, invert under the source prompt, sample
// back down, decode. Exact for the constant denoiser; the toy backend's
// drift is reported for inspection.
inline ReconstructionResult reconstruct(const std::vector<Frame>& frames,
                                        const TokenizedPrompt& src_prompt,
                                        const DenoiserBackend& denoiser,
                                        const CodecBackend& codec,
                                        const NoiseSchedule& sched) {
    LatentVideo z0 = codec.encode(frames);
    auto [noise, store] = invert(z0, src_prompt, denoiser, sched);
    SampleResult sampled = sample(noise, src_prompt, denoiser, sched);
    ReconstructionResult res;
    res.latent_drift = max_abs_diff(z0.data, sampled.output().data);
    res.frames = codec.decode(sampled.output());
    return res;
}

}  // namespace attedit
