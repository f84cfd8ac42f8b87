// attedit: zero-shot attention-controlled video editing on swappable
// desk-scale backends. Subcommands: invert, edit, eval, inspect.

#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

#include "attedit/attedit.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    bool has_seed = false;
    uint64_t seed = 0;
    bool has_jobs = false;
    int jobs = 1;
    std::string input_dir;
    std::string output_dir;
    std::string store_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "job config file (INI)")->required();
    cmd->add_option("--seed", args.seed, "override backend.seed")
        ->each([&args](const std::string&) { args.has_seed = true; });
    cmd->add_option("--jobs", args.jobs, "override edit.jobs (parallel windows)")
        ->each([&args](const std::string&) { args.has_jobs = true; });
    cmd->add_option("--input-dir", args.input_dir, "override io.input_dir");
    cmd->add_option("--output-dir", args.output_dir, "override io.output_dir");
    cmd->add_option("--store-dir", args.store_dir, "override io.store_dir");
}

attedit::JobConfig resolve(const CommonArgs& args) {
    attedit::JobConfig cfg = attedit::load_config(args.config_path);
    if (args.has_seed) {
        cfg.seed = args.seed;
    }
    if (args.has_jobs) {
        cfg.jobs = args.jobs;
    }
    if (!args.input_dir.empty()) {
        cfg.input_dir = args.input_dir;
    }
    if (!args.output_dir.empty()) {
        cfg.output_dir = args.output_dir;
    }
    if (!args.store_dir.empty()) {
        cfg.store_dir = args.store_dir;
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"attention-controlled video editing"};
    app.require_subcommand(1);

    CommonArgs invert_args;
    CLI::App* invert_cmd =
        app.add_subcommand("invert", "invert a clip and cache its attention stores");
    add_common(invert_cmd, invert_args);

    CommonArgs edit_args;
    CLI::App* edit_cmd = app.add_subcommand("edit", "run the prompt edit over a clip");
    add_common(edit_cmd, edit_args);

    CommonArgs eval_args;
    std::vector<std::string> eval_dirs;
    CLI::App* eval_cmd = app.add_subcommand("eval", "score edited frame directories");
    add_common(eval_cmd, eval_args);
    eval_cmd->add_option("dirs", eval_dirs, "frame directories to score")->required();

    CommonArgs inspect_args;
    attedit::InspectOptions inspect_opt;
    CLI::App* inspect_cmd =
        app.add_subcommand("inspect", "dump mask heat grids and tau sweeps for a store");
    add_common(inspect_cmd, inspect_args);
    inspect_cmd->add_option("--store", inspect_opt.store_path, "attention store file")
        ->required();
    inspect_cmd->add_option("--word", inspect_opt.word, "source-prompt word to trace")
        ->required();
    inspect_cmd->add_option("--tau", inspect_opt.taus, "thresholds to sweep");

    CLI11_PARSE(app, argc, argv);

    try {
        if (invert_cmd->parsed()) {
            return attedit::cmd_invert(resolve(invert_args));
        }
        if (edit_cmd->parsed()) {
            return attedit::cmd_edit(resolve(edit_args));
        }
        if (eval_cmd->parsed()) {
            std::string tsv = attedit::cmd_eval(resolve(eval_args), eval_dirs);
            std::fputs(tsv.c_str(), stdout);
            return 0;
        }
        if (inspect_cmd->parsed()) {
            attedit::JobConfig cfg = resolve(inspect_args);
            if (inspect_opt.out_dir.empty()) {
                inspect_opt.out_dir = cfg.output_dir;
            }
            return attedit::cmd_inspect(cfg, inspect_opt);
        }
    } catch (const attedit::ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const attedit::BackendError& e) {
        std::fprintf(stderr, "backend error: %s\n", e.what());
        return 3;
    } catch (const attedit::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 4;
    }
    return 0;
}
