#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "attedit/common.hpp"
#include "attedit/pipeline.hpp"
#include "attedit/schedule.hpp"

namespace attedit {

// Flat sectioned key=value job description. Defaults mirror the method's
// standard configuration: 30 steps, 8-frame windows, both controls on, and
// a fixed mask threshold that is deliberately not a key here.
struct JobConfig {
    // [prompts]
    std::string source_prompt;
    std::string edit_prompt;
    std::vector<std::pair<std::string, std::string>> edit_words;

    // [schedule]
    int steps = kDefaultSteps;
    double beta_start = kDefaultBetaStart;
    double beta_end = kDefaultBetaEnd;

    // [edit]
    int window_size = kDefaultWindowSize;
    int max_frames = kDefaultMaxFrames;
    bool enable_cross = true;
    bool enable_spatial = true;
    std::string probe_mode = "separate";
    int jobs = 1;

    // [backend]
    std::string denoiser = "toy";
    double constant_value = 0.0;
    std::string codec = "identity";
    std::string embedder = "toy";
    uint64_t seed = 0;
    std::vector<int> resolutions = {8, 4};
    int heads = 2;
    int channels = 3;

    // [io]
    std::string input_dir;
    std::string output_dir;
    std::string store_dir;

    bool operator==(const JobConfig&) const = default;

    void validate() const {
        if (steps < 1) {
            throw ValidationError("config: schedule.steps must be >= 1");
        }
        if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
            throw ValidationError("config: schedule.beta_start/beta_end out of range");
        }
        if (window_size < 1) {
            throw ValidationError("config: edit.window_size must be >= 1");
        }
        if (max_frames < 1) {
            throw ValidationError("config: edit.max_frames must be >= 1");
        }
        if (jobs < 1) {
            throw ValidationError("config: edit.jobs must be >= 1");
        }
        if (probe_mode != "separate" && probe_mode != "shared") {
            throw ValidationError("config: edit.probe_mode must be 'separate' or 'shared'");
        }
        if (denoiser != "toy" && denoiser != "constant") {
            throw ValidationError("config: backend.denoiser must be 'toy' or 'constant'");
        }
        if (codec != "identity") {
            throw ValidationError("config: backend.codec must be 'identity'");
        }
        if (embedder != "toy") {
            throw ValidationError("config: backend.embedder must be 'toy'");
        }
        if (heads < 1) {
            throw ValidationError("config: backend.heads must be >= 1");
        }
        if (channels < 1) {
            throw ValidationError("config: backend.channels must be >= 1");
        }
        if (resolutions.empty()) {
            throw ValidationError("config: backend.resolutions must be non-empty");
        }
        for (int r : resolutions) {
            if (r < 1) {
                throw ValidationError("config: backend.resolutions entries must be >= 1");
            }
        }
        if (enable_spatial && !enable_cross) {
            throw ValidationError("config: edit.enable_spatial requires edit.enable_cross");
        }
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) {
        return "";
    }
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true") {
        return true;
    }
    if (v == "false") {
        return false;
    }
    throw ValidationError("config: " + key + " must be 'true' or 'false'");
}

inline int parse_int(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        int x = std::stoi(v, &pos);
        if (pos != v.size()) {
            throw std::invalid_argument("");
        }
        return x;
    } catch (...) {
        throw ValidationError("config: " + key + " must be an integer, got '" + v + "'");
    }
}

inline uint64_t parse_u64(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        unsigned long long x = std::stoull(v, &pos);
        if (pos != v.size()) {
            throw std::invalid_argument("");
        }
        return static_cast<uint64_t>(x);
    } catch (...) {
        throw ValidationError("config: " + key + " must be a non-negative integer");
    }
}

inline double parse_double(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) {
            throw std::invalid_argument("");
        }
        return x;
    } catch (...) {
        throw ValidationError("config: " + key + " must be a number, got '" + v + "'");
    }
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::vector<std::pair<std::string, std::string>> parse_edit_words(
    const std::string& v) {
    std::vector<std::pair<std::string, std::string>> out;
    if (trim(v).empty()) {
        return out;
    }
    for (const std::string& item : split(v, ',')) {
        size_t arrow = item.find("->");
        if (arrow == std::string::npos) {
            throw ValidationError("config: prompts.edit_words entries must look like "
                                  "'source->edit', got '" +
                                  trim(item) + "'");
        }
        std::string src = trim(item.substr(0, arrow));
        std::string dst = trim(item.substr(arrow + 2));
        if (src.empty() || dst.empty()) {
            throw ValidationError("config: prompts.edit_words has an empty word in '" +
                                  trim(item) + "'");
        }
        out.emplace_back(src, dst);
    }
    return out;
}

inline std::vector<int> parse_int_list(const std::string& v, const std::string& key) {
    std::vector<int> out;
    for (const std::string& item : split(v, ',')) {
        out.push_back(parse_int(trim(item), key));
    }
    return out;
}

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline JobConfig parse_config(const std::string& text) {
    JobConfig cfg;
    std::string section;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        line_no++;
        std::string line = detail::trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') {
            continue;
        }
        if (line.front() == '[' && line.back() == ']') {
            section = detail::trim(line.substr(1, line.size() - 2));
            if (section != "prompts" && section != "schedule" && section != "edit" &&
                section != "backend" && section != "io") {
                throw ValidationError("config: unknown section [" + section + "] at line " +
                                      std::to_string(line_no));
            }
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ValidationError("config: expected key=value at line " +
                                  std::to_string(line_no));
        }
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        std::string full = section + "." + key;

        if (full == "prompts.source") {
            cfg.source_prompt = value;
        } else if (full == "prompts.edit") {
            cfg.edit_prompt = value;
        } else if (full == "prompts.edit_words") {
            cfg.edit_words = detail::parse_edit_words(value);
        } else if (full == "schedule.steps") {
            cfg.steps = detail::parse_int(value, full);
        } else if (full == "schedule.beta_start") {
            cfg.beta_start = detail::parse_double(value, full);
        } else if (full == "schedule.beta_end") {
            cfg.beta_end = detail::parse_double(value, full);
        } else if (full == "edit.window_size") {
            cfg.window_size = detail::parse_int(value, full);
        } else if (full == "edit.max_frames") {
            cfg.max_frames = detail::parse_int(value, full);
        } else if (full == "edit.enable_cross") {
            cfg.enable_cross = detail::parse_bool(value, full);
        } else if (full == "edit.enable_spatial") {
            cfg.enable_spatial = detail::parse_bool(value, full);
        } else if (full == "edit.probe_mode") {
            cfg.probe_mode = value;
        } else if (full == "edit.jobs") {
            cfg.jobs = detail::parse_int(value, full);
        } else if (full == "backend.denoiser") {
            cfg.denoiser = value;
        } else if (full == "backend.constant_value") {
            cfg.constant_value = detail::parse_double(value, full);
        } else if (full == "backend.codec") {
            cfg.codec = value;
        } else if (full == "backend.embedder") {
            cfg.embedder = value;
        } else if (full == "backend.seed") {
            cfg.seed = detail::parse_u64(value, full);
        } else if (full == "backend.resolutions") {
            cfg.resolutions = detail::parse_int_list(value, full);
        } else if (full == "backend.heads") {
            cfg.heads = detail::parse_int(value, full);
        } else if (full == "backend.channels") {
            cfg.channels = detail::parse_int(value, full);
        } else if (full == "io.input_dir") {
            cfg.input_dir = value;
        } else if (full == "io.output_dir") {
            cfg.output_dir = value;
        } else if (full == "io.store_dir") {
            cfg.store_dir = value;
        } else {
            throw ValidationError("config: unknown key '" + full + "' at line " +
                                  std::to_string(line_no));
        }
    }
    return cfg;
}

inline std::string serialize_config(const JobConfig& cfg) {
    std::string out;
    out += "[prompts]\n";
    out += "source = " + cfg.source_prompt + "\n";
    out += "edit = " + cfg.edit_prompt + "\n";
    std::string words;
    for (size_t i = 0; i < cfg.edit_words.size(); i++) {
        if (i > 0) {
            words += ",";
        }
        words += cfg.edit_words[i].first + "->" + cfg.edit_words[i].second;
    }
    out += "edit_words = " + words + "\n\n";
    out += "[schedule]\n";
    out += "steps = " + std::to_string(cfg.steps) + "\n";
    out += "beta_start = " + detail::format_double(cfg.beta_start) + "\n";
    out += "beta_end = " + detail::format_double(cfg.beta_end) + "\n\n";
    out += "[edit]\n";
    out += "window_size = " + std::to_string(cfg.window_size) + "\n";
    out += "max_frames = " + std::to_string(cfg.max_frames) + "\n";
    out += std::string("enable_cross = ") + (cfg.enable_cross ? "true" : "false") + "\n";
    out += std::string("enable_spatial = ") + (cfg.enable_spatial ? "true" : "false") + "\n";
    out += "probe_mode = " + cfg.probe_mode + "\n";
    out += "jobs = " + std::to_string(cfg.jobs) + "\n\n";
    out += "[backend]\n";
    out += "denoiser = " + cfg.denoiser + "\n";
    out += "constant_value = " + detail::format_double(cfg.constant_value) + "\n";
    out += "codec = " + cfg.codec + "\n";
    out += "embedder = " + cfg.embedder + "\n";
    out += "seed = " + std::to_string(cfg.seed) + "\n";
    std::string res;
    for (size_t i = 0; i < cfg.resolutions.size(); i++) {
        if (i > 0) {
            res += ",";
        }
        res += std::to_string(cfg.resolutions[i]);
    }
    out += "resolutions = " + res + "\n";
    out += "heads = " + std::to_string(cfg.heads) + "\n";
    out += "channels = " + std::to_string(cfg.channels) + "\n\n";
    out += "[io]\n";
    out += "input_dir = " + cfg.input_dir + "\n";
    out += "output_dir = " + cfg.output_dir + "\n";
    out += "store_dir = " + cfg.store_dir + "\n";
    return out;
}

inline JobConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config file: " + path);
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config(text);
}

}  // namespace attedit
