#include <catch2/catch_amalgamated.hpp>

#include "attedit/codec.hpp"
#include "attedit/pipeline.hpp"
#include "helpers.hpp"

using namespace attedit;

namespace {

EditJob toy_job(std::vector<Frame> frames, const std::string& src, const std::string& edit,
                const std::vector<std::pair<std::string, std::string>>& pairs,
                int steps = 4, bool cross = true, bool spatial = true,
                uint64_t seed = 33) {
    EditJob job;
    job.frames = std::move(frames);
    job.src_prompt = tokenize(src);
    job.edit_prompt = tokenize(edit);
    job.spec = align_edit_words(job.src_prompt, job.edit_prompt, pairs, cross, spatial);
    job.sched = build_schedule(steps, 1e-3, 1e-2);
    job.denoiser = build_toy_denoiser(seed, {8, 4}, 2);
    job.codec = std::make_shared<IdentityCodec>();
    return job;
}

}  // namespace

TEST_CASE("identity codec round-trips frames exactly") {
    IdentityCodec codec;
    std::vector<Frame> frames = testutil::make_frames(3, 12, 5);
    LatentVideo z = codec.encode(frames);
    REQUIRE(z.frames() == 3);
    REQUIRE(z.channels() == 3);
    REQUIRE(z.height() == 12);
    for (float v : z.data.data) {
        REQUIRE(v >= -1.0f);
        REQUIRE(v <= 1.0f);
    }
    std::vector<Frame> back = codec.decode(z);
    REQUIRE(testutil::frames_equal(frames, back));
}

TEST_CASE("flags-off editing with the constant backend reproduces the input") {
    std::vector<Frame> frames = testutil::make_frames(4, 8, 6);
    EditJob job = toy_job(frames, "a silver jeep", "a golden jeep",
                          {{"silver", "golden"}}, 5, false, false);
    job.denoiser = std::make_shared<ConstantDenoiser>(0.1f);
    WindowResult res = edit_window(job);
    REQUIRE(testutil::frames_equal(res.frames, frames));
}

TEST_CASE("editing nothing stays within tolerance of the plain reconstruction") {
    std::vector<Frame> frames = testutil::make_frames(3, 8, 7);
    EditJob job =
        toy_job(frames, "a silver jeep", "a silver jeep", {{"jeep", "jeep"}}, 6);
    WindowResult res = edit_window(job);

    ReconstructionResult rec =
        reconstruct(frames, job.src_prompt, *job.denoiser, *job.codec, job.sched);
    REQUIRE(res.frames.size() == rec.frames.size());
    for (size_t k = 0; k < res.frames.size(); k++) {
        for (size_t i = 0; i < res.frames[k].rgb.size(); i++) {
            int a = res.frames[k].rgb[i];
            int b = rec.frames[k].rgb[i];
            // latents agree within 1e-4, so pixels agree within one level
            REQUIRE(std::abs(a - b) <= 1);
        }
    }
}

TEST_CASE("window diagnostics count activations, substitutions and norms") {
    std::vector<Frame> frames = testutil::make_frames(3, 8, 8);
    EditJob job = toy_job(frames, "a silver jeep", "a golden jeep",
                          {{"silver", "golden"}}, 4);
    WindowResult res = edit_window(job);

    REQUIRE(res.diag.num_frames == 3);
    REQUIRE(res.diag.steps.size() == 4);
    REQUIRE(res.diag.starred_norms.size() == 4);
    REQUIRE(res.diag.probe_norms.size() == 4);
    for (double n : res.diag.starred_norms) {
        REQUIRE(n > 0.0);
    }
    REQUIRE(res.diag.activations.size() == 2);
    for (const ActivationCount& a : res.diag.activations) {
        REQUIRE(a.cross_steps == 4);
        REQUIRE(a.spatial_steps == 4);
    }
    REQUIRE(res.diag.cross_substitutions == 4 * 2 * 3);
    REQUIRE(res.diag.spatial_substitutions == 4 * 2 * 3);
    REQUIRE(res.store.entries.size() == 4u * 2u * 2u * 3u);
}

TEST_CASE("edit_window validates its job") {
    std::vector<Frame> frames = testutil::make_frames(2, 8, 9);
    EditJob job = toy_job(frames, "a silver jeep", "a golden jeep",
                          {{"silver", "golden"}}, 2);
    SECTION("no frames") {
        job.frames.clear();
        REQUIRE_THROWS_AS(edit_window(job), ValidationError);
    }
    SECTION("missing backend") {
        job.denoiser.reset();
        REQUIRE_THROWS_AS(edit_window(job), ValidationError);
    }
    SECTION("token counts disagree with prompts") {
        job.spec.src_tokens = 7;
        REQUIRE_THROWS_AS(edit_window(job), ValidationError);
    }
    SECTION("cached store and noise must come together") {
        AttentionStore store;
        REQUIRE_THROWS_AS(edit_window(job, &store, nullptr), ValidationError);
    }
}

TEST_CASE("cached inversion reproduces the fresh edit and rejects stale caches") {
    std::vector<Frame> frames = testutil::make_frames(2, 8, 10);
    EditJob job = toy_job(frames, "a silver jeep", "a golden jeep",
                          {{"silver", "golden"}}, 3);

    WindowResult fresh = edit_window(job);
    WindowResult cached = edit_window(job, &fresh.store, &fresh.noise);
    REQUIRE(testutil::frames_equal(fresh.frames, cached.frames));

    SECTION("schedule mismatch") {
        EditJob other = job;
        other.sched = build_schedule(4, 1e-3, 1e-2);
        REQUIRE_THROWS_AS(edit_window(other, &fresh.store, &fresh.noise), ValidationError);
    }
    SECTION("prompt mismatch") {
        EditJob other = job;
        other.src_prompt = tokenize("a shiny jeep");
        other.spec = align_edit_words(other.src_prompt, other.edit_prompt,
                                      {{"shiny", "golden"}});
        REQUIRE_THROWS_AS(edit_window(other, &fresh.store, &fresh.noise), ValidationError);
    }
    SECTION("frame mismatch") {
        EditJob other = job;
        other.frames = testutil::make_frames(2, 8, 11);
        REQUIRE_THROWS_AS(edit_window(other, &fresh.store, &fresh.noise), ValidationError);
    }
    SECTION("backend mismatch") {
        EditJob other = job;
        other.denoiser = build_toy_denoiser(99, {8, 4}, 2);
        REQUIRE_THROWS_AS(edit_window(other, &fresh.store, &fresh.noise), ValidationError);
    }
}

TEST_CASE("shared-probe mode runs deterministically") {
    std::vector<Frame> frames = testutil::make_frames(2, 8, 12);
    EditJob job = toy_job(frames, "a silver jeep", "a golden jeep",
                          {{"silver", "golden"}}, 3);
    job.probe_shared = true;
    WindowResult a = edit_window(job);
    WindowResult b = edit_window(job);
    REQUIRE(testutil::frames_equal(a.frames, b.frames));
    REQUIRE(a.diag.probe_norms.empty());
    REQUIRE(a.diag.cross_substitutions > 0);
}

TEST_CASE("edit_video partitions into independent windows") {
    std::vector<Frame> frames = testutil::make_frames(20, 8, 13);
    EditJob job = toy_job(frames, "a silver jeep", "a golden jeep",
                          {{"silver", "golden"}}, 2);

    WindowConfig cfg;
    cfg.window_size = 8;
    VideoResult res = edit_video(job, cfg);
    REQUIRE(res.frames.size() == 20);
    REQUIRE(res.windows.size() == 3);  // 8 + 8 + 4
    REQUIRE(res.windows[0].first_frame == 0);
    REQUIRE(res.windows[1].first_frame == 8);
    REQUIRE(res.windows[2].first_frame == 16);
    REQUIRE(res.windows[2].num_frames == 4);

    SECTION("single window equals edit_window") {
        EditJob small = job;
        small.frames.assign(frames.begin(), frames.begin() + 8);
        WindowResult one = edit_window(small);
        std::vector<Frame> head(res.frames.begin(), res.frames.begin() + 8);
        REQUIRE(testutil::frames_equal(one.frames, head));
    }
    SECTION("later frames do not change the first window") {
        EditJob shorter = job;
        shorter.frames.assign(frames.begin(), frames.begin() + 11);
        VideoResult res2 = edit_video(shorter, cfg);
        for (int i = 0; i < 8; i++) {
            REQUIRE(res.frames[static_cast<size_t>(i)].rgb ==
                    res2.frames[static_cast<size_t>(i)].rgb);
        }
    }
    SECTION("parallel windows keep deterministic order") {
        WindowConfig par = cfg;
        par.jobs = 3;
        VideoResult res_par = edit_video(job, par);
        REQUIRE(testutil::frames_equal(res.frames, res_par.frames));
    }
}

TEST_CASE("edit_video enforces the frame limit and nonempty input") {
    EditJob job = toy_job(testutil::make_frames(2, 8, 14), "a silver jeep",
                          "a golden jeep", {{"silver", "golden"}}, 2);
    WindowConfig cfg;
    cfg.max_frames = 4;
    job.frames = testutil::make_frames(5, 8, 14);
    REQUIRE_THROWS_AS(edit_video(job, cfg), ValidationError);
    job.frames.clear();
    REQUIRE_THROWS_AS(edit_video(job, cfg), ValidationError);
}

TEST_CASE("reconstruction is exact for the constant backend and deterministic for the toy") {
    std::vector<Frame> frames = testutil::make_frames(2, 8, 15);
    TokenizedPrompt prompt = tokenize("a silver jeep");
    IdentityCodec codec;

    SECTION("constant backend") {
        ConstantDenoiser d(0.3f);
        for (int steps : {1, 5}) {
            NoiseSchedule s = build_schedule(steps, 8.5e-4, 1.2e-2);
            ReconstructionResult rec = reconstruct(frames, prompt, d, codec, s);
            REQUIRE(rec.latent_drift < 1e-5);
            REQUIRE(testutil::frames_equal(rec.frames, frames));
        }
    }
    SECTION("toy backend deterministic") {
        auto d = build_toy_denoiser(55, {8, 4}, 2);
        NoiseSchedule s = build_schedule(4, 1e-3, 1e-2);
        ReconstructionResult a = reconstruct(frames, prompt, *d, codec, s);
        ReconstructionResult b = reconstruct(frames, prompt, *d, codec, s);
        REQUIRE(a.latent_drift == b.latent_drift);
        REQUIRE(testutil::frames_equal(a.frames, b.frames));
        REQUIRE(a.latent_drift < 0.05);
    }
}

TEST_CASE("full edits are bit-reproducible") {
    std::vector<Frame> frames = testutil::make_frames(6, 8, 16);
    EditJob job = toy_job(frames, "a silver jeep", "a golden jeep",
                          {{"silver", "golden"}}, 3);
    WindowConfig cfg;
    cfg.window_size = 4;
    VideoResult a = edit_video(job, cfg);
    VideoResult b = edit_video(job, cfg);
    REQUIRE(testutil::frames_equal(a.frames, b.frames));
    for (size_t w = 0; w < a.windows.size(); w++) {
        REQUIRE(a.windows[w].starred_norms == b.windows[w].starred_norms);
    }
}
