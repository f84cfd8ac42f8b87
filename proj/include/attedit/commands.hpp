#pragma once

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "attedit/codec.hpp"
#include "attedit/config.hpp"
#include "attedit/control.hpp"
#include "attedit/denoiser.hpp"
#include "attedit/image.hpp"
#include "attedit/metrics.hpp"
#include "attedit/pipeline.hpp"
#include "attedit/prompt.hpp"
#include "attedit/scheduler.hpp"

namespace attedit {

inline std::shared_ptr<DenoiserBackend> make_denoiser(const JobConfig& cfg) {
    if (cfg.denoiser == "constant") {
        return std::make_shared<ConstantDenoiser>(static_cast<float>(cfg.constant_value));
    }
    return build_toy_denoiser(cfg.seed, cfg.resolutions, cfg.heads, cfg.channels);
}

inline std::shared_ptr<CodecBackend> make_codec(const JobConfig&) {
    return std::make_shared<IdentityCodec>();
}

inline std::shared_ptr<EmbedderBackend> make_embedder(const JobConfig& cfg) {
    return std::make_shared<ToyEmbedder>(cfg.seed);
}

inline NoiseSchedule make_schedule(const JobConfig& cfg) {
    return build_schedule(cfg.steps, cfg.beta_start, cfg.beta_end);
}

// Assemble the full-clip edit job from a validated config. Prompts are
// tokenized here; word pairs are aligned into token spans.
inline EditJob make_edit_job(const JobConfig& cfg, std::vector<Frame> frames) {
    EditJob job;
    job.frames = std::move(frames);
    job.src_prompt = tokenize(cfg.source_prompt);
    job.edit_prompt = tokenize(cfg.edit_prompt);
    job.spec = align_edit_words(job.src_prompt, job.edit_prompt, cfg.edit_words,
                                cfg.enable_cross, cfg.enable_spatial);
    job.sched = make_schedule(cfg);
    job.denoiser = make_denoiser(cfg);
    job.codec = make_codec(cfg);
    job.probe_shared = cfg.probe_mode == "shared";
    return job;
}

namespace detail {

inline constexpr char kLatentMagic[9] = {'A', 'T', 'N', 'L', 'A', 'T', 'N', 'T', '1'};

inline std::string window_store_name(int w) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "store_w%03d.atn", w);
    return buf;
}

inline std::string window_noise_name(int w) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "noise_w%03d.lat", w);
    return buf;
}

inline void require_field(const std::string& value, const char* field) {
    if (value.empty()) {
        throw ValidationError(std::string("config: ") + field + " must be set");
    }
}

}  // namespace detail

// Noise-latent container: magic, the owning store's three hashes, the
// {K, C, H, W} shape, the window's frame offset, then the float payload.
inline void save_latent(const std::string& path, const LatentVideo& z,
                        const StoreMetadata& meta) {
    std::string buf;
    buf.append(detail::kLatentMagic, sizeof(detail::kLatentMagic));
    detail::put_le<uint64_t>(buf, meta.schedule_hash);
    detail::put_le<uint64_t>(buf, meta.prompt_hash);
    detail::put_le<uint64_t>(buf, meta.frame_hash);
    detail::put_le<uint64_t>(buf, meta.backend_hash);
    for (int d = 0; d < 4; d++) {
        detail::put_le<uint32_t>(buf, static_cast<uint32_t>(z.data.dim(d)));
    }
    detail::put_le<uint64_t>(buf, static_cast<uint64_t>(z.frame_offset));
    for (float f : z.data.data) {
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        detail::put_le<uint32_t>(buf, bits);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open latent file for writing: " + path);
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) {
        throw IoError("failed writing latent file: " + path);
    }
}

struct LoadedLatent {
    LatentVideo z;
    uint64_t schedule_hash = 0;
    uint64_t prompt_hash = 0;
    uint64_t frame_hash = 0;
    uint64_t backend_hash = 0;
};

inline LoadedLatent load_latent(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open latent file: " + path);
    }
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    size_t header = sizeof(detail::kLatentMagic) + 4 * 8 + 4 * 4 + 8;
    if (buf.size() < header ||
        std::memcmp(buf.data(), detail::kLatentMagic, sizeof(detail::kLatentMagic)) != 0) {
        throw IoError("bad latent file: " + path);
    }
    size_t pos = sizeof(detail::kLatentMagic);
    LoadedLatent out;
    out.schedule_hash = detail::get_le<uint64_t>(buf.data() + pos); pos += 8;
    out.prompt_hash = detail::get_le<uint64_t>(buf.data() + pos); pos += 8;
    out.frame_hash = detail::get_le<uint64_t>(buf.data() + pos); pos += 8;
    out.backend_hash = detail::get_le<uint64_t>(buf.data() + pos); pos += 8;
    int dims[4];
    for (int& d : dims) {
        d = static_cast<int>(detail::get_le<uint32_t>(buf.data() + pos));
        pos += 4;
    }
    out.z.frame_offset = static_cast<int64_t>(detail::get_le<uint64_t>(buf.data() + pos));
    pos += 8;
    out.z.data = Tensor({dims[0], dims[1], dims[2], dims[3]});
    if (buf.size() != pos + out.z.data.size() * 4) {
        throw IoError("latent file length mismatch: " + path);
    }
    for (size_t i = 0; i < out.z.data.size(); i++) {
        uint32_t bits = detail::get_le<uint32_t>(buf.data() + pos);
        pos += 4;
        std::memcpy(&out.z.data.data[i], &bits, 4);
    }
    return out;
}

// Invert every window of the input clip under the source prompt and write
// one store + noise-latent pair per window, keyed by content hashes so a
// later edit can never blend against stale maps.
inline int cmd_invert(const JobConfig& cfg) {
    cfg.validate();
    detail::require_field(cfg.input_dir, "io.input_dir");
    detail::require_field(cfg.store_dir, "io.store_dir");
    detail::require_field(cfg.source_prompt, "prompts.source");

    std::vector<Frame> frames = read_frame_dir(cfg.input_dir);
    if (static_cast<int>(frames.size()) > cfg.max_frames) {
        throw ValidationError("clip exceeds the configured frame limit of " +
                              std::to_string(cfg.max_frames));
    }
    std::filesystem::create_directories(cfg.store_dir);

    TokenizedPrompt prompt = tokenize(cfg.source_prompt);
    NoiseSchedule sched = make_schedule(cfg);
    auto denoiser = make_denoiser(cfg);
    auto codec = make_codec(cfg);

    int window = 0;
    for (size_t start = 0; start < frames.size();
         start += static_cast<size_t>(cfg.window_size), window++) {
        size_t end = std::min(frames.size(), start + static_cast<size_t>(cfg.window_size));
        std::vector<Frame> window_frames(frames.begin() + static_cast<long>(start),
                                         frames.begin() + static_cast<long>(end));
        LatentVideo z0 = codec->encode(window_frames);
        auto [noise, store] = invert(z0, prompt, *denoiser, sched);
        noise.frame_offset = static_cast<int64_t>(start);
        std::filesystem::path dir(cfg.store_dir);
        store.save((dir / detail::window_store_name(window)).string());
        save_latent((dir / detail::window_noise_name(window)).string(), noise, store.meta);
        std::printf("window %d: frames %zu..%zu, %zu maps\n", window, start, end - 1,
                    store.entries.size());
    }
    return 0;
}

namespace detail {

inline nlohmann::ordered_json diagnostics_json(const std::vector<WindowDiagnostics>& windows) {
    nlohmann::ordered_json doc;
    doc["windows"] = nlohmann::ordered_json::array();
    for (const WindowDiagnostics& w : windows) {
        nlohmann::ordered_json jw;
        jw["first_frame"] = w.first_frame;
        jw["num_frames"] = w.num_frames;
        jw["cross_substitutions"] = w.cross_substitutions;
        jw["spatial_substitutions"] = w.spatial_substitutions;
        jw["activations"] = nlohmann::ordered_json::array();
        for (const ActivationCount& a : w.activations) {
            jw["activations"].push_back({{"layer", a.layer_id},
                                         {"cross_steps", a.cross_steps},
                                         {"spatial_steps", a.spatial_steps}});
        }
        jw["steps"] = nlohmann::ordered_json::array();
        for (size_t i = 0; i < w.steps.size(); i++) {
            const StepStats& s = w.steps[i];
            nlohmann::ordered_json js;
            js["t"] = s.timestep;
            js["cross_substitutions"] = s.cross_substitutions;
            js["spatial_substitutions"] = s.spatial_substitutions;
            js["masks_built"] = s.masks_built;
            js["degenerate_masks"] = s.degenerate_masks;
            js["mask_coverage"] = s.mask_coverage();
            js["starred_norm"] = w.starred_norms[i];
            if (i < w.probe_norms.size()) {
                js["probe_norm"] = w.probe_norms[i];
            }
            jw["steps"].push_back(js);
        }
        doc["windows"].push_back(jw);
    }
    return doc;
}

}  // namespace detail

// Run the full windowed edit. Windows with matching cached (store, noise)
// files skip inversion; files present but hash-stale abort the run.
inline int cmd_edit(const JobConfig& cfg) {
    cfg.validate();
    detail::require_field(cfg.input_dir, "io.input_dir");
    detail::require_field(cfg.output_dir, "io.output_dir");
    detail::require_field(cfg.source_prompt, "prompts.source");
    detail::require_field(cfg.edit_prompt, "prompts.edit");

    std::vector<Frame> frames = read_frame_dir(cfg.input_dir);
    EditJob job = make_edit_job(cfg, std::move(frames));
    if (static_cast<int>(job.frames.size()) > cfg.max_frames) {
        throw ValidationError("clip exceeds the configured frame limit of " +
                              std::to_string(cfg.max_frames));
    }

    std::vector<EditJob> window_jobs;
    for (size_t start = 0; start < job.frames.size();
         start += static_cast<size_t>(cfg.window_size)) {
        size_t end = std::min(job.frames.size(), start + static_cast<size_t>(cfg.window_size));
        EditJob wj = job;
        wj.frames.assign(job.frames.begin() + static_cast<long>(start),
                         job.frames.begin() + static_cast<long>(end));
        wj.frame_offset = static_cast<int64_t>(start);
        window_jobs.push_back(std::move(wj));
    }

    auto run_window = [&cfg](const EditJob& wj, int w) -> WindowResult {
        if (!cfg.store_dir.empty()) {
            std::filesystem::path dir(cfg.store_dir);
            std::string store_path = (dir / detail::window_store_name(w)).string();
            std::string noise_path = (dir / detail::window_noise_name(w)).string();
            if (std::filesystem::exists(store_path) && std::filesystem::exists(noise_path)) {
                AttentionStore store = AttentionStore::load(store_path);
                LoadedLatent noise = load_latent(noise_path);
                if (noise.schedule_hash != store.meta.schedule_hash ||
                    noise.prompt_hash != store.meta.prompt_hash ||
                    noise.frame_hash != store.meta.frame_hash ||
                    noise.backend_hash != store.meta.backend_hash) {
                    throw ValidationError("cached store and noise files disagree: " +
                                          store_path);
                }
                return edit_window(wj, &store, &noise.z);
            }
        }
        return edit_window(wj);
    };

    std::vector<WindowResult> results(window_jobs.size());
    if (cfg.jobs > 1 && window_jobs.size() > 1) {
        std::vector<std::future<WindowResult>> futures;
        for (size_t w = 0; w < window_jobs.size(); w++) {
            futures.push_back(std::async(std::launch::async, run_window,
                                         std::cref(window_jobs[w]), static_cast<int>(w)));
        }
        for (size_t w = 0; w < futures.size(); w++) {
            results[w] = futures[w].get();
        }
    } else {
        for (size_t w = 0; w < window_jobs.size(); w++) {
            results[w] = run_window(window_jobs[w], static_cast<int>(w));
        }
    }

    std::vector<Frame> out_frames;
    std::vector<WindowDiagnostics> diags;
    for (WindowResult& r : results) {
        out_frames.insert(out_frames.end(), r.frames.begin(), r.frames.end());
        diags.push_back(std::move(r.diag));
    }
    write_frame_dir(cfg.output_dir, out_frames);

    std::filesystem::path diag_path =
        std::filesystem::path(cfg.output_dir) / "diagnostics.json";
    std::ofstream diag_out(diag_path);
    if (!diag_out) {
        throw IoError("cannot write diagnostics: " + diag_path.string());
    }
    diag_out << detail::diagnostics_json(diags).dump(2) << "\n";
    std::printf("edited %zu frames in %zu windows -> %s\n", out_frames.size(), results.size(),
                cfg.output_dir.c_str());
    return 0;
}

// Evaluate one or more frame directories against the configured prompts.
// Returns the TSV report; single-frame directories report NA consistency.
inline std::string cmd_eval(const JobConfig& cfg, const std::vector<std::string>& dirs) {
    cfg.validate();
    detail::require_field(cfg.source_prompt, "prompts.source");
    detail::require_field(cfg.edit_prompt, "prompts.edit");
    if (dirs.empty()) {
        throw ValidationError("eval needs at least one frame directory");
    }
    auto embedder = make_embedder(cfg);
    std::vector<std::pair<std::string, EvalReport>> reports;
    for (const std::string& dir : dirs) {
        std::vector<Frame> frames = read_frame_dir(dir);
        EvalReport rep = evaluate(frames, cfg.source_prompt, cfg.edit_prompt, *embedder);
        if (!rep.has_tem_con) {
            log_warn("directory '" + dir + "' has a single frame; consistency reported as NA");
        }
        std::string name = std::filesystem::path(dir).filename().string();
        if (name.empty()) {
            name = dir;
        }
        reports.emplace_back(name, rep);
    }
    return format_report_tsv(reports);
}

struct InspectOptions {
    std::string store_path;
    std::string word;
    std::vector<double> taus = {0.3, 0.5, 0.7};
    std::string out_dir;
};

// Dump the blending-mask internals of a stored inversion: per-(step, frame)
// normalized heat grids, and per-tau binary masks at every layer's grid.
// The fixed-threshold edit path uses tau 0.5; the sweep exists to make the
// threshold's monotone effect visible.
inline int cmd_inspect(const JobConfig& cfg, const InspectOptions& opt) {
    cfg.validate();
    detail::require_field(cfg.source_prompt, "prompts.source");
    if (opt.store_path.empty() || opt.word.empty() || opt.out_dir.empty()) {
        throw ValidationError("inspect needs a store file, a word, and an output directory");
    }
    AttentionStore store = AttentionStore::load(opt.store_path);
    TokenizedPrompt prompt = tokenize(cfg.source_prompt);
    if (prompt_hash(prompt) != store.meta.prompt_hash) {
        throw ValidationError("store was built from a different source prompt");
    }

    // The mask machinery runs on an edit spec; inspecting one word of the
    // source prompt is the degenerate self-edit of that word.
    EditSpec spec = align_edit_words(prompt, prompt, {{opt.word, opt.word}});

    std::set<int> layer_set;
    for (const auto& [key, map] : store.entries) {
        layer_set.insert(key.layer_id);
    }
    std::vector<int> layers(layer_set.begin(), layer_set.end());
    store.validate_complete(layers, static_cast<int>(store.meta.num_frames),
                            static_cast<int>(store.meta.num_steps));

    std::filesystem::path out_root(opt.out_dir);
    std::filesystem::create_directories(out_root);
    int degenerate = 0;
    for (int t = 1; t <= static_cast<int>(store.meta.num_steps); t++) {
        for (int k = 0; k < static_cast<int>(store.meta.num_frames); k++) {
            std::vector<Tensor> cross_maps;
            for (int layer : layers) {
                cross_maps.push_back(store.at({t, layer, MapKind::cross, k}).weights);
            }
            BlendHeat heat = blending_heat(cross_maps, spec);
            if (heat.degenerate) {
                degenerate++;
            }
            char name[64];
            std::snprintf(name, sizeof(name), "heat_t%d_f%d.pgm", t, k);
            write_pgm((out_root / name).string(), heat.grid);
            for (double tau : opt.taus) {
                char sub[32];
                std::snprintf(sub, sizeof(sub), "tau_%.2f", tau);
                std::filesystem::path tau_dir = out_root / sub;
                std::filesystem::create_directories(tau_dir);
                for (int layer : layers) {
                    const Tensor& st =
                        store.at({t, layer, MapKind::spatial_temporal, k}).weights;
                    int r = detail::exact_grid_side(st.dim(1));
                    Tensor mask = heat.degenerate ? Tensor({r, r})
                                                  : threshold_mask(heat.grid, r, r, tau);
                    std::snprintf(name, sizeof(name), "mask_t%d_l%d_f%d.pgm", t, layer, k);
                    write_pgm((tau_dir / name).string(), mask);
                }
            }
        }
    }
    if (degenerate > 0) {
        log_warn(std::to_string(degenerate) + " heat grids were degenerate (constant)");
    }
    std::printf("wrote heat grids and %zu tau sweeps -> %s\n", opt.taus.size(),
                opt.out_dir.c_str());
    return 0;
}

}  // namespace attedit
