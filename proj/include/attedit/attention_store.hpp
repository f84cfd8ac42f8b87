#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "attedit/common.hpp"
#include "attedit/tensor.hpp"

namespace attedit {

enum class MapKind : uint8_t {
    cross = 0,
    spatial_temporal = 1,
};

inline const char* map_kind_name(MapKind k) {
    return k == MapKind::cross ? "cross" : "spatial_temporal";
}

// One captured attention map. weights is {heads, query_positions, key_dim};
// key_dim is the token count M for cross maps and 2 * query_positions for
// spatial-temporal maps (keys of frame 1 concatenated with frame k-1).
struct AttentionMap {
    MapKind kind = MapKind::cross;
    Tensor weights;
    int layer_id = 0;
    int timestep = 0;
    int frame = 0;
};

// Row sums of a softmax map must stay within tol of 1.
inline void validate_map(const AttentionMap& m, double tol = 1e-5) {
    if (m.weights.rank() != 3) {
        throw ValidationError("attention map must be {heads, queries, keys}");
    }
    int h = m.weights.dim(0), q = m.weights.dim(1), kd = m.weights.dim(2);
    if (m.kind == MapKind::spatial_temporal && kd != 2 * q) {
        throw ValidationError("spatial-temporal map needs key dim = 2 * query positions");
    }
    for (int a = 0; a < h; a++) {
        for (int b = 0; b < q; b++) {
            double s = 0.0;
            for (int c = 0; c < kd; c++) {
                float w = m.weights.at(a, b, c);
                if (m.kind == MapKind::cross && (w < -1e-6f || w > 1.0f + 1e-6f)) {
                    throw ValidationError("cross map weights must lie in [0, 1]");
                }
                s += w;
            }
            if (std::abs(s - 1.0) > tol) {
                throw ValidationError("attention map row does not sum to 1");
            }
        }
    }
}

struct StoreKey {
    int timestep = 0;
    int layer_id = 0;
    MapKind kind = MapKind::cross;
    int frame = 0;

    bool operator<(const StoreKey& o) const {
        return std::tie(timestep, layer_id, kind, frame) <
               std::tie(o.timestep, o.layer_id, o.kind, o.frame);
    }
    bool operator==(const StoreKey& o) const {
        return timestep == o.timestep && layer_id == o.layer_id && kind == o.kind &&
               frame == o.frame;
    }
};

struct StoreMetadata {
    uint64_t schedule_hash = 0;
    uint64_t prompt_hash = 0;
    uint64_t frame_hash = 0;    // content hash of the source frames (cache key)
    uint64_t backend_hash = 0;  // identity of the denoiser that produced the maps
    uint32_t num_frames = 0;
    uint32_t num_steps = 0;
};

// Per-(timestep, layer, kind, frame) archive of maps captured during
// inversion. Append-only while the single inversion pass writes; read-only
// afterwards.
struct AttentionStore {
    std::map<StoreKey, AttentionMap> entries;
    StoreMetadata meta;

    bool contains(const StoreKey& k) const { return entries.count(k) != 0; }

    const AttentionMap& at(const StoreKey& k) const {
        auto it = entries.find(k);
        if (it == entries.end()) {
            throw ValidationError("attention store: missing entry (t=" +
                                  std::to_string(k.timestep) + ", layer=" +
                                  std::to_string(k.layer_id) + ", kind=" +
                                  map_kind_name(k.kind) + ", frame=" +
                                  std::to_string(k.frame) + ")");
        }
        return it->second;
    }

    void insert(const StoreKey& k, AttentionMap map) {
        validate_map(map);
        if (contains(k)) {
            throw ValidationError("attention store: duplicate entry");
        }
        map.timestep = k.timestep;
        map.layer_id = k.layer_id;
        map.kind = k.kind;
        map.frame = k.frame;
        entries.emplace(k, std::move(map));
    }

    // Exactly one entry per (t, layer, kind, frame) for t in [1, T].
    void validate_complete(const std::vector<int>& layer_ids, int num_frames,
                           int num_steps) const {
        size_t expected = static_cast<size_t>(num_steps) * layer_ids.size() * 2 *
                          static_cast<size_t>(num_frames);
        if (entries.size() != expected) {
            throw ValidationError("attention store: expected " + std::to_string(expected) +
                                  " entries, found " + std::to_string(entries.size()));
        }
        for (int t = 1; t <= num_steps; t++) {
            for (int layer : layer_ids) {
                for (MapKind kind : {MapKind::cross, MapKind::spatial_temporal}) {
                    for (int k = 0; k < num_frames; k++) {
                        if (!contains({t, layer, kind, k})) {
                            throw ValidationError("attention store: incomplete at t=" +
                                                  std::to_string(t));
                        }
                    }
                }
            }
        }
    }

    void save(const std::string& path) const;
    static AttentionStore load(const std::string& path);
};

namespace detail {

inline constexpr char kStoreMagic[9] = {'A', 'T', 'N', 'S', 'T', 'O', 'R', 'E', '1'};

template <typename T>
void put_le(std::string& out, T v) {
    for (size_t i = 0; i < sizeof(T); i++) {
        out.push_back(static_cast<char>((static_cast<uint64_t>(v) >> (8 * i)) & 0xff));
    }
}

template <typename T>
T get_le(const char* p) {
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); i++) {
        v |= static_cast<uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    }
    return static_cast<T>(v);
}

}  // namespace detail

// Container layout (all integers little-endian):
//   magic "ATNSTORE1"
//   u64 schedule_hash, u64 prompt_hash, u32 K, u32 T
//   u64 frame_hash            (source-frame content hash, cache key)
//   u64 backend_hash          (denoiser identity, cache key)
//   u64 entry_count
//   entries, each length-prefixed:
//     u64 byte_length of the remainder
//     u32 t, u32 layer_id, u8 kind, u32 frame
//     u8 ndim, u32 dims[ndim]
//     float32 payload, row-major
inline void AttentionStore::save(const std::string& path) const {
    std::string buf;
    buf.append(detail::kStoreMagic, sizeof(detail::kStoreMagic));
    detail::put_le<uint64_t>(buf, meta.schedule_hash);
    detail::put_le<uint64_t>(buf, meta.prompt_hash);
    detail::put_le<uint32_t>(buf, meta.num_frames);
    detail::put_le<uint32_t>(buf, meta.num_steps);
    detail::put_le<uint64_t>(buf, meta.frame_hash);
    detail::put_le<uint64_t>(buf, meta.backend_hash);
    detail::put_le<uint64_t>(buf, entries.size());
    for (const auto& [key, map] : entries) {
        std::string entry;
        detail::put_le<uint32_t>(entry, static_cast<uint32_t>(key.timestep));
        detail::put_le<uint32_t>(entry, static_cast<uint32_t>(key.layer_id));
        entry.push_back(static_cast<char>(key.kind));
        detail::put_le<uint32_t>(entry, static_cast<uint32_t>(key.frame));
        entry.push_back(static_cast<char>(map.weights.dims.size()));
        for (int d : map.weights.dims) {
            detail::put_le<uint32_t>(entry, static_cast<uint32_t>(d));
        }
        for (float f : map.weights.data) {
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            detail::put_le<uint32_t>(entry, bits);
        }
        detail::put_le<uint64_t>(buf, entry.size());
        buf += entry;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open store file for writing: " + path);
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) {
        throw IoError("failed writing store file: " + path);
    }
}

inline AttentionStore AttentionStore::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open store file: " + path);
    }
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    size_t pos = 0;
    auto need = [&](size_t n) {
        if (pos + n > buf.size()) {
            throw IoError("truncated store file: " + path);
        }
    };
    need(sizeof(detail::kStoreMagic));
    if (std::memcmp(buf.data(), detail::kStoreMagic, sizeof(detail::kStoreMagic)) != 0) {
        throw IoError("bad magic in store file: " + path);
    }
    pos += sizeof(detail::kStoreMagic);
    AttentionStore store;
    need(8 + 8 + 4 + 4 + 8 + 8 + 8);
    store.meta.schedule_hash = detail::get_le<uint64_t>(buf.data() + pos); pos += 8;
    store.meta.prompt_hash = detail::get_le<uint64_t>(buf.data() + pos); pos += 8;
    store.meta.num_frames = detail::get_le<uint32_t>(buf.data() + pos); pos += 4;
    store.meta.num_steps = detail::get_le<uint32_t>(buf.data() + pos); pos += 4;
    store.meta.frame_hash = detail::get_le<uint64_t>(buf.data() + pos); pos += 8;
    store.meta.backend_hash = detail::get_le<uint64_t>(buf.data() + pos); pos += 8;
    uint64_t count = detail::get_le<uint64_t>(buf.data() + pos); pos += 8;
    for (uint64_t e = 0; e < count; e++) {
        need(8);
        uint64_t len = detail::get_le<uint64_t>(buf.data() + pos); pos += 8;
        need(len);
        size_t end = pos + len;
        StoreKey key;
        AttentionMap map;
        key.timestep = static_cast<int>(detail::get_le<uint32_t>(buf.data() + pos)); pos += 4;
        key.layer_id = static_cast<int>(detail::get_le<uint32_t>(buf.data() + pos)); pos += 4;
        key.kind = static_cast<MapKind>(static_cast<unsigned char>(buf[pos])); pos += 1;
        key.frame = static_cast<int>(detail::get_le<uint32_t>(buf.data() + pos)); pos += 4;
        int ndim = static_cast<unsigned char>(buf[pos]); pos += 1;
        std::vector<int> dims(static_cast<size_t>(ndim));
        for (int d = 0; d < ndim; d++) {
            dims[static_cast<size_t>(d)] =
                static_cast<int>(detail::get_le<uint32_t>(buf.data() + pos));
            pos += 4;
        }
        map.weights = Tensor(dims);
        if (pos + map.weights.size() * 4 != end) {
            throw IoError("store entry length mismatch: " + path);
        }
        for (size_t i = 0; i < map.weights.size(); i++) {
            uint32_t bits = detail::get_le<uint32_t>(buf.data() + pos);
            pos += 4;
            std::memcpy(&map.weights.data[i], &bits, 4);
        }
        map.kind = key.kind;
        store.insert(key, std::move(map));
    }
    if (pos != buf.size()) {
        throw IoError("trailing bytes in store file: " + path);
    }
    return store;
}

}  // namespace attedit
