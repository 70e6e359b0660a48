#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "curdkv/linalg.hpp"

namespace curdkv {

enum class Method {
    exact_leverage_key,
    exact_leverage_value,
    exact_leverage_kv,
    sketch_key,
    sketch_value,
    sketch_kv,
    key_norm,
    attention_sum,
    position_recency,
};

const char *to_string(Method m);
Method method_from_string(const std::string &name);
std::vector<Method> all_methods();

// Per-token importance scores for one group. Entries are non-negative and
// finite; when normalized they sum to 1 (an all-zero vector skips
// normalization and stays zero).
struct ScoreVector {
    std::vector<double> scores;
    Method method = Method::exact_leverage_kv;
    bool normalized = false;

    std::size_t size() const { return scores.size(); }
    bool all_zero() const;
};

// Normalizes in place to unit sum; all-zero input is left untouched with
// normalized = false.
void normalize_scores(ScoreVector &sv);

// Squared row norms of the left singular-vector matrix: each token's
// contribution to the dominant subspace. Unnormalized; sums to rank(a).
ScoreVector exact_row_leverage(const Matrix &a);

// Column analogue: squared column norms of vt, i.e. row leverage of the
// transpose.
ScoreVector exact_col_leverage(const Matrix &a);

// Squared row norms after a Gaussian projection a * G with G ~ N(0, 1/r).
// An unbiased estimate of the squared row norms of a; deterministic per seed.
ScoreVector sketch_row_scores(const Matrix &a, std::size_t r, std::uint64_t seed);

// Element-wise product of key and value scores, then normalized to unit sum.
ScoreVector combine_kv_scores(const ScoreVector &key_scores, const ScoreVector &value_scores);

// Key-norm ranking. With keep_low_norm (the default convention) scores
// decrease monotonically in the key row norm, so top-k retains the
// lowest-norm keys; the flipped convention scores by squared norm directly.
ScoreVector key_norm_scores(const Matrix &keys, bool keep_low_norm = true);

// Mean softmax attention weight that the observation rows q place on each
// key. Scores sum to 1 by construction.
ScoreVector attention_sum_scores(const Matrix &q, const Matrix &keys);

// Recency ranking: later tokens score higher. Value-independent.
ScoreVector position_recency_scores(std::size_t n);

struct ScoringOptions {
    std::size_t sketch_dim = 20;
    std::uint64_t seed = 0; // per-group seed, already derived by the caller
    bool knorm_keep_low = true;
    std::size_t obs_window = 8;
};

// Scores one group's tokens with the requested method, normalized. For
// attention_sum, obs_queries supplies the observation rows; when absent the
// final obs_window key rows stand in.
ScoreVector score_group(const Matrix &keys, const Matrix &values, Method method,
                        const ScoringOptions &opts,
                        const std::optional<Matrix> &obs_queries = std::nullopt);

// Same ranking, but without the unit-sum normalization step (used when
// pooling raw magnitudes across groups).
ScoreVector raw_group_scores(const Matrix &keys, const Matrix &values, Method method,
                             const ScoringOptions &opts,
                             const std::optional<Matrix> &obs_queries = std::nullopt);

} // namespace curdkv
