#include "curdkv/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace curdkv {

const char *to_string(Method m) {
    switch (m) {
    case Method::exact_leverage_key: return "exact_leverage_key";
    case Method::exact_leverage_value: return "exact_leverage_value";
    case Method::exact_leverage_kv: return "exact_leverage_kv";
    case Method::sketch_key: return "sketch_key";
    case Method::sketch_value: return "sketch_value";
    case Method::sketch_kv: return "sketch_kv";
    case Method::key_norm: return "key_norm";
    case Method::attention_sum: return "attention_sum";
    case Method::position_recency: return "position_recency";
    }
    return "?";
}

std::vector<Method> all_methods() {
    return {Method::exact_leverage_key, Method::exact_leverage_value, Method::exact_leverage_kv,
            Method::sketch_key,         Method::sketch_value,         Method::sketch_kv,
            Method::key_norm,           Method::attention_sum,        Method::position_recency};
}

Method method_from_string(const std::string &name) {
    for (Method m : all_methods()) {
        if (name == to_string(m)) {
            return m;
        }
    }
    throw ValidationError("unknown scoring method: \"" + name + "\"");
}

bool ScoreVector::all_zero() const {
    return std::all_of(scores.begin(), scores.end(), [](double v) { return v == 0.0; });
}

void normalize_scores(ScoreVector &sv) {
    const double sum = std::accumulate(sv.scores.begin(), sv.scores.end(), 0.0);
    if (sum == 0.0) {
        sv.normalized = false;
        return;
    }
    for (double &v : sv.scores) {
        v /= sum;
    }
    sv.normalized = true;
}

namespace {

std::vector<double> squared_row_norms(const Matrix &a) {
    std::vector<double> out(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (double v : a.row(i)) {
            s += v * v;
        }
        out[i] = s;
    }
    return out;
}

} // namespace

ScoreVector exact_row_leverage(const Matrix &a) {
    const SvdResult svd = svd_thin(a);
    ScoreVector sv;
    sv.method = Method::exact_leverage_kv;
    sv.scores = squared_row_norms(svd.u);
    return sv;
}

ScoreVector exact_col_leverage(const Matrix &a) {
    const SvdResult svd = svd_thin(a);
    ScoreVector sv;
    sv.method = Method::exact_leverage_kv;
    sv.scores.assign(a.cols(), 0.0);
    for (std::size_t i = 0; i < svd.vt.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            sv.scores[j] += svd.vt(i, j) * svd.vt(i, j);
        }
    }
    return sv;
}

ScoreVector sketch_row_scores(const Matrix &a, std::size_t r, std::uint64_t seed) {
    if (r == 0) {
        throw ValidationError("sketch_row_scores: sketch dimension must be positive");
    }
    const Matrix g = gaussian_sketch(a.cols(), r, seed);
    ScoreVector sv;
    sv.method = Method::sketch_kv;
    sv.scores = squared_row_norms(matmul(a, g));
    return sv;
}

ScoreVector combine_kv_scores(const ScoreVector &key_scores, const ScoreVector &value_scores) {
    if (key_scores.size() != value_scores.size()) {
        throw ShapeError("combine_kv_scores: length mismatch, " +
                         std::to_string(key_scores.size()) + " vs " +
                         std::to_string(value_scores.size()));
    }
    ScoreVector sv;
    sv.method = key_scores.method;
    sv.scores.resize(key_scores.size());
    for (std::size_t i = 0; i < sv.scores.size(); ++i) {
        sv.scores[i] = key_scores.scores[i] * value_scores.scores[i];
    }
    normalize_scores(sv);
    return sv;
}

ScoreVector key_norm_scores(const Matrix &keys, bool keep_low_norm) {
    ScoreVector sv;
    sv.method = Method::key_norm;
    sv.scores = squared_row_norms(keys);
    if (keep_low_norm) {
        // 1/(1 + |k|^2): strictly decreasing in the norm and never all-zero,
        // so equal-norm caches keep a well-defined earliest-index tie-break
        // instead of falling into the zero-score recency path.
        for (double &v : sv.scores) {
            v = 1.0 / (1.0 + v);
        }
    }
    return sv;
}

ScoreVector attention_sum_scores(const Matrix &q, const Matrix &keys) {
    if (q.rows() == 0) {
        throw ShapeError("attention_sum_scores: need at least one observation row");
    }
    const Matrix weights = softmax_rows(matmul(q, keys.transposed()));
    ScoreVector sv;
    sv.method = Method::attention_sum;
    sv.scores.assign(keys.rows(), 0.0);
    for (std::size_t i = 0; i < weights.rows(); ++i) {
        for (std::size_t j = 0; j < keys.rows(); ++j) {
            sv.scores[j] += weights(i, j);
        }
    }
    for (double &v : sv.scores) {
        v /= static_cast<double>(weights.rows());
    }
    return sv;
}

ScoreVector position_recency_scores(std::size_t n) {
    ScoreVector sv;
    sv.method = Method::position_recency;
    sv.scores.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        sv.scores[j] = static_cast<double>(j + 1) / static_cast<double>(n);
    }
    return sv;
}

namespace {

Matrix last_rows(const Matrix &m, std::size_t count) {
    count = std::min(count, m.rows());
    std::vector<std::size_t> idx(count);
    for (std::size_t i = 0; i < count; ++i) {
        idx[i] = m.rows() - count + i;
    }
    return m.take_rows(idx);
}

} // namespace

namespace {

ScoreVector elementwise_product(const ScoreVector &a, const ScoreVector &b) {
    if (a.size() != b.size()) {
        throw ShapeError("combine_kv_scores: length mismatch, " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
    }
    ScoreVector sv;
    sv.method = a.method;
    sv.scores.resize(a.size());
    for (std::size_t i = 0; i < sv.scores.size(); ++i) {
        sv.scores[i] = a.scores[i] * b.scores[i];
    }
    return sv;
}

ScoreVector compute_group_scores(const Matrix &keys, const Matrix &values, Method method,
                                 const ScoringOptions &opts,
                                 const std::optional<Matrix> &obs_queries) {
    switch (method) {
    case Method::exact_leverage_key:
        return exact_row_leverage(keys);
    case Method::exact_leverage_value:
        return exact_row_leverage(values);
    case Method::exact_leverage_kv:
        return elementwise_product(exact_row_leverage(keys), exact_row_leverage(values));
    case Method::sketch_key:
        return sketch_row_scores(keys, opts.sketch_dim, opts.seed);
    case Method::sketch_value:
        return sketch_row_scores(values, opts.sketch_dim, opts.seed);
    case Method::sketch_kv:
        // one fresh G per group, shared by that group's key and value
        // projections
        return elementwise_product(sketch_row_scores(keys, opts.sketch_dim, opts.seed),
                                   sketch_row_scores(values, opts.sketch_dim, opts.seed));
    case Method::key_norm:
        return key_norm_scores(keys, opts.knorm_keep_low);
    case Method::attention_sum:
        return attention_sum_scores(
            obs_queries ? *obs_queries
                        : last_rows(keys, std::max<std::size_t>(1, opts.obs_window)),
            keys);
    case Method::position_recency:
        return position_recency_scores(keys.rows());
    }
    throw ValidationError("score_group: unhandled method");
}

} // namespace

ScoreVector score_group(const Matrix &keys, const Matrix &values, Method method,
                        const ScoringOptions &opts, const std::optional<Matrix> &obs_queries) {
    ScoreVector sv = compute_group_scores(keys, values, method, opts, obs_queries);
    sv.method = method;
    normalize_scores(sv);
    return sv;
}

ScoreVector raw_group_scores(const Matrix &keys, const Matrix &values, Method method,
                             const ScoringOptions &opts,
                             const std::optional<Matrix> &obs_queries) {
    ScoreVector sv = compute_group_scores(keys, values, method, opts, obs_queries);
    sv.method = method;
    sv.normalized = false;
    return sv;
}

} // namespace curdkv
