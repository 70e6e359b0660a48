#include "curdkv/cache.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "curdkv/rng.hpp"

namespace curdkv {

KVCache::KVCache(std::vector<Matrix> k, std::vector<Matrix> v)
    : keys(std::move(k)), values(std::move(v)) {
    if (keys.empty() || keys.size() != values.size()) {
        throw ShapeError("KVCache: need equal, non-zero key/value group counts, got " +
                         std::to_string(keys.size()) + " and " + std::to_string(values.size()));
    }
    const std::size_t n = keys.front().rows();
    const std::size_t d = keys.front().cols();
    if (n == 0 || d == 0) {
        throw ShapeError("KVCache: empty token or head dimension");
    }
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (keys[i].rows() != n || keys[i].cols() != d || values[i].rows() != n ||
            values[i].cols() != d) {
            throw ShapeError("KVCache: group " + std::to_string(i) + " shape " +
                             detail::shape_str(keys[i]) + "/" + detail::shape_str(values[i]) +
                             " does not match group 0 (" + std::to_string(n) + "x" +
                             std::to_string(d) + ")");
        }
    }
}

CompressedCache::CompressedCache(std::vector<Matrix> k, std::vector<Matrix> v)
    : keys(std::move(k)), values(std::move(v)) {
    if (keys.empty() || keys.size() != values.size()) {
        throw ShapeError("CompressedCache: need equal, non-zero key/value group counts, got " +
                         std::to_string(keys.size()) + " and " + std::to_string(values.size()));
    }
    const std::size_t d = keys.front().cols();
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (keys[i].cols() != d || values[i].cols() != d ||
            keys[i].rows() != values[i].rows()) {
            throw ShapeError("CompressedCache: group " + std::to_string(i) + " shape " +
                             detail::shape_str(keys[i]) + "/" + detail::shape_str(values[i]) +
                             " inconsistent with head dim " + std::to_string(d));
        }
    }
}

std::uint64_t CompressedCache::total_tokens() const {
    std::uint64_t total = 0;
    for (const Matrix &k : keys) {
        total += k.rows();
    }
    return total;
}

bool CompressedCache::uniform() const {
    for (const Matrix &k : keys) {
        if (k.rows() != keys.front().rows()) {
            return false;
        }
    }
    return true;
}

KVCache CompressedCache::to_kv_cache() const {
    if (!uniform()) {
        throw ShapeError("CompressedCache: groups are ragged, cannot form a uniform cache");
    }
    return KVCache(keys, values);
}

KVCache prefill(const Matrix &x, const AttentionWeights &weights) {
    if (weights.empty()) {
        throw ShapeError("prefill: no group weights");
    }
    std::vector<Matrix> keys, values;
    keys.reserve(weights.size());
    values.reserve(weights.size());
    for (const auto &w : weights) {
        if (x.cols() != w.wk.rows() || x.cols() != w.wv.rows()) {
            throw ShapeError("prefill: hidden states " + detail::shape_str(x) +
                             " incompatible with weights " + detail::shape_str(w.wk));
        }
        keys.push_back(matmul(x, w.wk));
        values.push_back(matmul(x, w.wv));
    }
    return KVCache(std::move(keys), std::move(values));
}

KVCache append_step(const KVCache &cache, const Matrix &x, const AttentionWeights &weights) {
    if (x.rows() != 1) {
        throw ShapeError("append_step: expected a single hidden-state row, got " +
                         detail::shape_str(x));
    }
    if (weights.size() != cache.groups()) {
        throw ShapeError("append_step: " + std::to_string(weights.size()) + " weight groups vs " +
                         std::to_string(cache.groups()) + " cache groups");
    }
    const std::size_t n = cache.tokens();
    const std::size_t d = cache.dim();
    std::vector<Matrix> keys, values;
    keys.reserve(cache.groups());
    values.reserve(cache.groups());
    for (std::size_t i = 0; i < cache.groups(); ++i) {
        const Matrix k_new = matmul(x, weights[i].wk);
        const Matrix v_new = matmul(x, weights[i].wv);
        if (k_new.cols() != d) {
            throw ShapeError("append_step: projected width " + std::to_string(k_new.cols()) +
                             " does not match cache dim " + std::to_string(d));
        }
        Matrix k(n + 1, d), v(n + 1, d);
        std::copy(cache.keys[i].data().begin(), cache.keys[i].data().end(), k.data().begin());
        std::copy(cache.values[i].data().begin(), cache.values[i].data().end(), v.data().begin());
        std::copy(k_new.data().begin(), k_new.data().end(), k.data().begin() + n * d);
        std::copy(v_new.data().begin(), v_new.data().end(), v.data().begin() + n * d);
        keys.push_back(std::move(k));
        values.push_back(std::move(v));
    }
    return KVCache(std::move(keys), std::move(values));
}

Matrix attention_output(const Matrix &q, const Matrix &keys, const Matrix &values, bool scaled) {
    if (q.cols() != keys.cols()) {
        throw ShapeError("attention_output: query width " + detail::shape_str(q) +
                         " vs key width " + detail::shape_str(keys));
    }
    if (keys.rows() != values.rows()) {
        throw ShapeError("attention_output: " + std::to_string(keys.rows()) + " keys vs " +
                         std::to_string(values.rows()) + " values");
    }
    Matrix logits = matmul(q, keys.transposed());
    if (scaled) {
        const double inv = 1.0 / std::sqrt(static_cast<double>(keys.cols()));
        for (double &v : logits.data()) {
            v *= inv;
        }
    }
    return matmul(softmax_rows(logits), values);
}

const char *to_string(SyntheticKind kind) {
    switch (kind) {
    case SyntheticKind::iid_gaussian: return "iid_gaussian";
    case SyntheticKind::planted_heavy: return "planted_heavy";
    case SyntheticKind::sink_pattern: return "sink_pattern";
    }
    return "?";
}

SyntheticKind synthetic_kind_from_string(const std::string &name) {
    if (name == "iid_gaussian") return SyntheticKind::iid_gaussian;
    if (name == "planted_heavy") return SyntheticKind::planted_heavy;
    if (name == "sink_pattern") return SyntheticKind::sink_pattern;
    throw ValidationError("unknown synthetic cache kind: \"" + name + "\"");
}

namespace {

// RNG sub-stream tags; keep stable, they define the generated bytes.
enum StreamTag : std::uint64_t { kKeys = 0, kValues = 1, kPlanted = 2 };

Matrix gaussian_matrix(std::size_t n, std::size_t d, std::uint64_t seed) {
    Matrix m(n, d);
    GaussianStream stream(seed);
    for (double &v : m.data()) {
        v = stream.next();
    }
    return m;
}

std::vector<std::size_t> sample_without_replacement(std::size_t count, std::size_t n,
                                                    std::uint64_t seed) {
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) {
        pool[i] = i;
    }
    SplitMix64 rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.next_u64() % (n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    std::sort(pool.begin(), pool.end());
    return pool;
}

void scale_rows(Matrix &m, const std::vector<std::size_t> &rows, double factor) {
    for (std::size_t r : rows) {
        for (double &v : m.row(r)) {
            v *= factor;
        }
    }
}

} // namespace

SyntheticCache generate_synthetic(SyntheticKind kind, std::size_t g, std::size_t n,
                                  std::size_t d, std::uint64_t seed,
                                  const SyntheticParams &params) {
    if (g == 0 || n == 0 || d == 0) {
        throw ValidationError("generate_synthetic: dimensions must be positive, got g=" +
                              std::to_string(g) + " n=" + std::to_string(n) + " d=" +
                              std::to_string(d));
    }
    if (kind == SyntheticKind::planted_heavy) {
        if (params.heavy_fraction < 0.0 || params.heavy_fraction > 1.0) {
            throw ValidationError("generate_synthetic: heavy_fraction must lie in [0, 1], got " +
                                  std::to_string(params.heavy_fraction));
        }
        if (params.heavy_scale <= 0.0) {
            throw ValidationError("generate_synthetic: heavy_scale must be positive, got " +
                                  std::to_string(params.heavy_scale));
        }
    }
    if (kind == SyntheticKind::sink_pattern && params.sink_scale <= 0.0) {
        throw ValidationError("generate_synthetic: sink_scale must be positive, got " +
                              std::to_string(params.sink_scale));
    }

    SyntheticCache out;
    if (kind == SyntheticKind::planted_heavy) {
        const auto count =
            static_cast<std::size_t>(std::ceil(params.heavy_fraction * static_cast<double>(n)));
        out.planted_rows = sample_without_replacement(std::min(count, n), n,
                                                      derive_seed(seed, kPlanted));
    }

    std::vector<Matrix> keys, values;
    keys.reserve(g);
    values.reserve(g);
    for (std::size_t i = 0; i < g; ++i) {
        Matrix k = gaussian_matrix(n, d, derive_seed(seed, kKeys + 16 * i));
        Matrix v = gaussian_matrix(n, d, derive_seed(seed, kValues + 16 * i));
        switch (kind) {
        case SyntheticKind::iid_gaussian:
            break;
        case SyntheticKind::planted_heavy:
            // value rows only: planted tokens carry outsized output mass
            // without attracting extra attention through their keys
            scale_rows(v, out.planted_rows, params.heavy_scale);
            break;
        case SyntheticKind::sink_pattern: {
            std::vector<std::size_t> sinks;
            for (std::size_t s = 0; s < std::min(params.sink_count, n); ++s) {
                sinks.push_back(s);
            }
            scale_rows(k, sinks, params.sink_scale);
            break;
        }
        }
        keys.push_back(std::move(k));
        values.push_back(std::move(v));
    }
    out.cache = KVCache(std::move(keys), std::move(values));
    return out;
}

} // namespace curdkv
