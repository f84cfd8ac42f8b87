#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>

namespace attedit {

// Error taxonomy shared by the library and the CLI. The CLI maps these to
// process exit codes: ValidationError -> 2, BackendError -> 3, IoError -> 4.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct BackendError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void log_warn(const std::string& msg) {
    std::fprintf(stderr, "[attedit] warning: %s\n", msg.c_str());
}

// FNV-1a, 64-bit. Used for prompt/schedule/frame content hashes.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 1469598103934665603ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; i++) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t fnv1a_str(const std::string& s, uint64_t h = 1469598103934665603ull) {
    return fnv1a(s.data(), s.size(), h);
}

inline uint64_t fnv1a_u64(uint64_t v, uint64_t h = 1469598103934665603ull) {
    unsigned char b[8];
    for (int i = 0; i < 8; i++) {
        b[i] = static_cast<unsigned char>(v >> (8 * i));
    }
    return fnv1a(b, 8, h);
}

// Deterministic RNG: mt19937_64 plus a hand-rolled Box-Muller transform, so
// generated weights do not depend on the standard library's distribution
// internals. Same seed => same stream, bit for bit.
struct Rng {
    std::mt19937_64 gen;

    explicit Rng(uint64_t seed) : gen(seed) {}

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(gen() >> 11) * 0x1.0p-53;
    }

    double gaussian() {
        double u1 = uniform();
        if (u1 <= 0.0) {
            u1 = 0x1.0p-53;
        }
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }
};

}  // namespace attedit
