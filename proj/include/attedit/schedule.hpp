#pragma once

#include <cstdint>
#include <vector>

#include "attedit/common.hpp"

namespace attedit {

// Defaults follow the usual latent-diffusion configuration: 30 denoising
// steps over a linear beta ramp. Overridable via config.
inline constexpr int kDefaultSteps = 30;
inline constexpr double kDefaultBetaStart = 8.5e-4;
inline constexpr double kDefaultBetaEnd = 1.2e-2;

// Cumulative noise-retention sequence driving the deterministic sampler.
// alphas_cumprod is indexed t in [0, T]; index 0 is the clean end.
struct NoiseSchedule {
    std::vector<double> alphas_cumprod;
    int num_steps = 0;

    double alpha_bar(int t) const {
        if (t < 0 || t > num_steps) {
            throw ValidationError("alpha_bar: timestep " + std::to_string(t) +
                                  " outside [0, " + std::to_string(num_steps) + "]");
        }
        return alphas_cumprod[static_cast<size_t>(t)];
    }

    void validate() const {
        if (num_steps < 1 || alphas_cumprod.size() != static_cast<size_t>(num_steps) + 1) {
            throw ValidationError("NoiseSchedule: need num_steps >= 1 and T+1 values");
        }
        if (alphas_cumprod[0] != 1.0) {
            throw ValidationError("NoiseSchedule: alphas_cumprod[0] must be exactly 1.0");
        }
        for (int t = 1; t <= num_steps; t++) {
            double v = alphas_cumprod[static_cast<size_t>(t)];
            if (!(v > 0.0 && v <= 1.0)) {
                throw ValidationError("NoiseSchedule: values must lie in (0, 1]");
            }
            if (!(v < alphas_cumprod[static_cast<size_t>(t) - 1])) {
                throw ValidationError("NoiseSchedule: must be strictly decreasing");
            }
        }
    }

    uint64_t hash() const {
        uint64_t h = fnv1a_u64(static_cast<uint64_t>(num_steps));
        h = fnv1a(alphas_cumprod.data(), alphas_cumprod.size() * sizeof(double), h);
        return h;
    }
};

// Linear beta ramp from beta_start to beta_end over T steps, accumulated
// into alpha-bar products. T=1 uses beta_start alone.
inline NoiseSchedule build_schedule(int num_steps = kDefaultSteps,
                                    double beta_start = kDefaultBetaStart,
                                    double beta_end = kDefaultBetaEnd) {
    if (num_steps < 1) {
        throw ValidationError("build_schedule: num_steps must be >= 1");
    }
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
        throw ValidationError("build_schedule: require 0 < beta_start <= beta_end < 1");
    }
    NoiseSchedule s;
    s.num_steps = num_steps;
    s.alphas_cumprod.resize(static_cast<size_t>(num_steps) + 1);
    s.alphas_cumprod[0] = 1.0;
    double cum = 1.0;
    for (int t = 1; t <= num_steps; t++) {
        double beta = beta_start;
        if (num_steps > 1) {
            beta += (beta_end - beta_start) * (t - 1) / (num_steps - 1);
        }
        cum *= 1.0 - beta;
        s.alphas_cumprod[static_cast<size_t>(t)] = cum;
    }
    s.validate();
    return s;
}

}  // namespace attedit
