#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "curdkv/cache.hpp"
#include "curdkv/scoring.hpp"

namespace curdkv {

enum class Policy {
    curdkv,
    adacurdkv,
    window_sinks,
    chunked,
};

const char *to_string(Policy p);
Policy policy_from_string(const std::string &name);

// Exactly one of budget_k / compression_ratio is set. With a ratio, the
// per-group budget derives as k = max(sinks, round((1 - ratio) * n)),
// clamped to [1, n].
struct CompressionConfig {
    std::optional<std::size_t> budget_k;
    std::optional<double> compression_ratio;
    std::size_t sketch_dim = 20;
    std::size_t sinks = 4;
    Method method = Method::sketch_kv;
    bool adaptive = false;
    double safeguard_alpha = 0.20;
    std::uint64_t seed = 0;
    std::size_t obs_window = 8;
    bool knorm_keep_low = true;
    // Compare raw instead of normalized scores when pooling across groups.
    bool adaptive_raw_scores = false;
};

// Validates the config against a cache of n tokens and returns the
// per-group budget. Throws ValidationError when both or neither budget
// fields are set, the ratio is outside [0, 1), or an explicit budget
// exceeds n.
std::size_t derive_budget(const CompressionConfig &cfg, std::size_t n);

struct GroupSelection {
    std::vector<std::size_t> retained; // sorted ascending, unique
    std::vector<std::size_t> sinks;    // prefix {0..s-1} of retained
    ScoreVector scores;                // the scores selection ranked on
    std::size_t granted = 0;           // == retained.size()
};

struct SelectionResult {
    std::string policy;
    std::vector<GroupSelection> groups;
    std::size_t requested_k = 0;
};

// Core top-k kernel: always keeps the sink prefix {0..s-1}, fills the
// remaining k - s slots with the highest scores over indices >= s, ties
// broken by lower index. k <= s degenerates to the first k tokens. An
// all-zero score vector falls back to recency (most recent tokens kept).
std::vector<std::size_t> select_top_with_sinks(const std::vector<double> &scores, std::size_t k,
                                               std::size_t s);

// Adaptive pool allocation over per-group score vectors: every group is
// granted its sinks plus a floor of max(s, ceil(alpha * k)) top local
// tokens, and the rest of the g*k pool goes to the globally best-scoring
// tokens (ties: lower group, then lower index). Grants never exceed n.
std::vector<std::vector<std::size_t>> allocate_adaptive(
    const std::vector<std::vector<double>> &group_scores, std::size_t k, std::size_t s,
    double alpha);

// CurDKV: per-group scores via cfg.method, sinks preserved, top-(k-s) fill.
// obs_queries (per group) feed attention_sum scoring when provided.
SelectionResult select_curdkv(const KVCache &cache, const CompressionConfig &cfg,
                              const std::vector<Matrix> *obs_queries = nullptr);

// Adaptive variant: one pooled budget of g*k tokens allocated across the
// layer's groups by globally ranked scores, with the per-group safeguard
// floor. Requires cfg.adaptive.
SelectionResult select_adacurdkv(const KVCache &cache, const CompressionConfig &cfg,
                                 const std::vector<Matrix> *obs_queries = nullptr);

// Streaming baseline: sinks plus the most recent k - s tokens. Ignores
// cache values entirely.
SelectionResult select_window_sinks(const KVCache &cache, const CompressionConfig &cfg);

// Chunked baseline: contiguous chunks of chunk_len tokens, per-chunk budgets
// proportional to chunk size (largest-remainder rounding), top scores within
// each chunk, sinks forced in.
SelectionResult select_chunked(const KVCache &cache, const CompressionConfig &cfg,
                               std::size_t chunk_len,
                               const std::vector<Matrix> *obs_queries = nullptr);

// Dispatch by policy enum; chunk_len only applies to Policy::chunked.
SelectionResult select_with_policy(Policy policy, const KVCache &cache,
                                   const CompressionConfig &cfg, std::size_t chunk_len = 32,
                                   const std::vector<Matrix> *obs_queries = nullptr);

// Gathers the retained rows (order preserving) from the original cache.
// Adaptive selections may yield ragged group sizes.
CompressedCache apply_selection(const KVCache &cache, const SelectionResult &sel);

} // namespace curdkv
