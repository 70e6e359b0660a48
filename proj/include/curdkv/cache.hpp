#pragma once

#include <cstdint>
#include <vector>

#include "curdkv/linalg.hpp"

namespace curdkv {

// Grouped key/value cache: g groups, each holding n x d key and value
// matrices for the same n tokens. Immutable by convention; updates return a
// new cache.
struct KVCache {
    std::vector<Matrix> keys;
    std::vector<Matrix> values;

    KVCache() = default;
    KVCache(std::vector<Matrix> k, std::vector<Matrix> v);

    std::size_t groups() const { return keys.size(); }
    std::size_t tokens() const { return keys.empty() ? 0 : keys.front().rows(); }
    std::size_t dim() const { return keys.empty() ? 0 : keys.front().cols(); }
};

// Row subsets of a cache after compression. Adaptive policies grant
// different token counts per group, so unlike KVCache the groups may be
// ragged; only the head dimension is shared.
struct CompressedCache {
    std::vector<Matrix> keys;
    std::vector<Matrix> values;

    CompressedCache() = default;
    CompressedCache(std::vector<Matrix> k, std::vector<Matrix> v);

    std::size_t groups() const { return keys.size(); }
    std::size_t tokens(std::size_t group) const { return keys[group].rows(); }
    std::size_t dim() const { return keys.empty() ? 0 : keys.front().cols(); }
    std::uint64_t total_tokens() const;

    // All groups hold the same token count (always true for non-adaptive
    // selections).
    bool uniform() const;

    // Converts to the strict cache type; requires uniform().
    KVCache to_kv_cache() const;
};

// Per-group projection weights, each d_model x d_head.
struct GroupWeights {
    Matrix wq;
    Matrix wk;
    Matrix wv;
};

using AttentionWeights = std::vector<GroupWeights>;

// Projects hidden states into a fresh cache: group i keys = x * wk_i,
// values = x * wv_i.
KVCache prefill(const Matrix &x, const AttentionWeights &weights);

// Appends the projection of a single hidden-state row to every group.
// Existing rows are copied bit-exactly.
KVCache append_step(const KVCache &cache, const Matrix &x, const AttentionWeights &weights);

// softmax(q k^T) v. The 1/sqrt(d) temperature is off by default; pass
// scaled=true to enable it.
Matrix attention_output(const Matrix &q, const Matrix &keys, const Matrix &values,
                        bool scaled = false);

enum class SyntheticKind {
    iid_gaussian,
    planted_heavy,
    sink_pattern,
};

const char *to_string(SyntheticKind kind);
SyntheticKind synthetic_kind_from_string(const std::string &name);

struct SyntheticParams {
    double heavy_fraction = 0.1; // planted_heavy: fraction of token rows scaled
    double heavy_scale = 10.0;   // planted_heavy: row scale factor
    std::size_t sink_count = 4;  // sink_pattern: number of boosted leading keys
    double sink_scale = 10.0;    // sink_pattern: key scale factor
};

struct SyntheticCache {
    KVCache cache;
    // planted_heavy only: token indices whose key and value rows were
    // scaled, sorted ascending. Empty for the other kinds.
    std::vector<std::size_t> planted_rows;
};

// Deterministic synthetic caches for a fixed seed. planted_heavy scales the
// value rows of ceil(heavy_fraction * n) tokens by heavy_scale, giving known
// high-value-leverage ground truth; sink_pattern boosts the first sink_count
// key rows.
SyntheticCache generate_synthetic(SyntheticKind kind, std::size_t g, std::size_t n,
                                  std::size_t d, std::uint64_t seed,
                                  const SyntheticParams &params = {});

} // namespace curdkv
