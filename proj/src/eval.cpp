#include "curdkv/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "curdkv/rng.hpp"

namespace curdkv {

namespace {

Matrix difference(const Matrix &a, const Matrix &b) {
    Matrix d(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) {
        d.data()[i] = a.data()[i] - b.data()[i];
    }
    return d;
}

} // namespace

double eviction_loss(const Matrix &q, const KVCache &cache_full,
                     const CompressedCache &cache_comp, std::size_t group) {
    if (group >= cache_full.groups() || group >= cache_comp.groups()) {
        throw ShapeError("eviction_loss: group " + std::to_string(group) + " out of range");
    }
    if (cache_comp.dim() != cache_full.dim() ||
        cache_comp.tokens(group) > cache_full.tokens()) {
        throw ShapeError("eviction_loss: compressed cache shape " +
                         detail::shape_str(cache_comp.keys[group]) + " incompatible with full " +
                         detail::shape_str(cache_full.keys[group]));
    }
    const Matrix full = attention_output(q, cache_full.keys[group], cache_full.values[group]);
    const Matrix comp = attention_output(q, cache_comp.keys[group], cache_comp.values[group]);
    return frobenius_norm(difference(full, comp));
}

double qk_loss(const Matrix &q, const KVCache &cache_full, const SelectionResult &sel,
               std::size_t group) {
    if (group >= cache_full.groups() || group >= sel.groups.size()) {
        throw ShapeError("qk_loss: group " + std::to_string(group) + " out of range");
    }
    const Matrix &keys = cache_full.keys[group];
    Matrix zero_padded = keys;
    const auto &retained = sel.groups[group].retained;
    for (std::size_t row = 0; row < keys.rows(); ++row) {
        if (!std::binary_search(retained.begin(), retained.end(), row)) {
            for (double &v : zero_padded.row(row)) {
                v = 0.0;
            }
        }
    }
    const Matrix full = matmul(q, keys.transposed());
    const Matrix comp = matmul(q, zero_padded.transposed());
    return frobenius_norm(difference(full, comp));
}

BoundRecord lemma1_check(const Matrix &q, const Matrix &k, const Matrix &v,
                         std::span<const std::size_t> evicted) {
    if (k.rows() != v.rows()) {
        throw ShapeError("lemma1_check: " + std::to_string(k.rows()) + " keys vs " +
                         std::to_string(v.rows()) + " values");
    }
    const std::size_t n = k.rows();
    Matrix k_prime = k;
    Matrix v_prime = v;
    for (std::size_t row : evicted) {
        if (row >= n) {
            throw ShapeError("lemma1_check: evicted index " + std::to_string(row) +
                             " out of range for " + std::to_string(n) + " tokens");
        }
        for (double &x : k_prime.row(row)) {
            x = 0.0;
        }
        for (double &x : v_prime.row(row)) {
            x = 0.0;
        }
    }
    const Matrix full = attention_output(q, k, v);
    const Matrix padded = attention_output(q, k_prime, v_prime);

    const double sqrt_n = std::sqrt(static_cast<double>(n));
    BoundRecord rec;
    rec.lhs = frobenius_norm(difference(full, padded));
    rec.rhs = sqrt_n * frobenius_norm(difference(v, v_prime)) +
              2.0 * sqrt_n * frobenius_norm(v_prime);
    rec.holds = rec.lhs <= rec.rhs + 1e-9;
    return rec;
}

std::uint64_t cache_bytes(const KVCache &cache, std::size_t bytes_per_element) {
    return 2ull * cache.groups() * cache.tokens() * cache.dim() * bytes_per_element;
}

std::uint64_t cache_bytes(const CompressedCache &cache, std::size_t bytes_per_element) {
    return 2ull * cache.total_tokens() * cache.dim() * bytes_per_element;
}

bool SweepResult::all_bounds_hold(double tolerance) const {
    for (const EvalReport &r : reports) {
        for (std::size_t g = 0; g < r.bound_lhs.size(); ++g) {
            if (r.bound_lhs[g] > r.bound_rhs[g] + tolerance) {
                return false;
            }
        }
    }
    return true;
}

QueryProvider gaussian_query_provider(std::size_t rows) {
    return [rows](const KVCache &cache, std::uint64_t seed) {
        std::vector<Matrix> out;
        out.reserve(cache.groups());
        // N(0, 1/d) rows: the attention temperature folded into the query
        // scale, since the loss semantics run the softmax unscaled. Keeps
        // logits at unit size so the softmax spreads over many tokens.
        const double scale = 1.0 / std::sqrt(static_cast<double>(cache.dim()));
        for (std::size_t g = 0; g < cache.groups(); ++g) {
            Matrix q(rows, cache.dim());
            GaussianStream stream(derive_seed(seed, 0xE7A1u + g));
            for (double &v : q.data()) {
                v = stream.next() * scale;
            }
            out.push_back(std::move(q));
        }
        return out;
    };
}

namespace {

std::vector<std::size_t> evicted_indices(const std::vector<std::size_t> &retained,
                                         std::size_t n) {
    std::vector<std::size_t> evicted;
    evicted.reserve(n - retained.size());
    auto it = retained.begin();
    for (std::size_t i = 0; i < n; ++i) {
        if (it != retained.end() && *it == i) {
            ++it;
        } else {
            evicted.push_back(i);
        }
    }
    return evicted;
}

void validate_grid(const SweepOptions &opts) {
    if (opts.policies.empty() || opts.methods.empty() || opts.ratios.empty() ||
        opts.seeds.empty()) {
        throw ValidationError("run_sweep: empty grid (policies, methods, ratios and seeds must "
                              "all be non-empty)");
    }
    for (double r : opts.ratios) {
        if (r < 0.0 || r >= 1.0) {
            throw ValidationError("run_sweep: ratio must lie in [0, 1), got " +
                                  std::to_string(r));
        }
    }
}

} // namespace

SweepResult run_sweep(const CacheProvider &cache_provider, const QueryProvider &query_provider,
                      const SweepOptions &opts) {
    validate_grid(opts);

    // caches and queries depend only on the seed; scores additionally on the
    // method. Memoize both so ratio sweeps do not recompute SVDs.
    std::map<std::uint64_t, KVCache> cache_memo;
    std::map<std::uint64_t, std::vector<Matrix>> query_memo;

    auto cache_for = [&](std::uint64_t seed) -> const KVCache & {
        auto it = cache_memo.find(seed);
        if (it == cache_memo.end()) {
            it = cache_memo.emplace(seed, cache_provider(seed)).first;
        }
        return it->second;
    };
    auto queries_for = [&](std::uint64_t seed, const KVCache &cache)
        -> const std::vector<Matrix> & {
        auto it = query_memo.find(seed);
        if (it == query_memo.end()) {
            it = query_memo.emplace(seed, query_provider(cache, seed)).first;
        }
        return it->second;
    };

    SweepResult result;
    for (Policy policy : opts.policies) {
        for (Method method : opts.methods) {
            for (double ratio : opts.ratios) {
                for (std::uint64_t seed : opts.seeds) {
                    CompressionConfig cfg;
                    cfg.compression_ratio = ratio;
                    cfg.sketch_dim = opts.sketch_dim;
                    cfg.sinks = opts.sinks;
                    cfg.method = method;
                    cfg.safeguard_alpha = opts.alpha;
                    cfg.seed = seed;
                    cfg.obs_window = opts.obs_window;
                    cfg.knorm_keep_low = opts.knorm_keep_low;
                    cfg.adaptive_raw_scores = opts.adaptive_raw_scores;
                    try {
                        const KVCache &cache = cache_for(seed);
                        const auto &queries = queries_for(seed, cache);

                        const SelectionResult sel =
                            select_with_policy(policy, cache, cfg, opts.chunk_len);
                        const CompressedCache comp = apply_selection(cache, sel);

                        EvalReport rep;
                        rep.policy = to_string(policy);
                        rep.method = to_string(method);
                        rep.ratio = ratio;
                        rep.seed = seed;
                        rep.cache_bytes_full = cache_bytes(cache, opts.bytes_per_element);
                        rep.cache_bytes_compressed = cache_bytes(comp, opts.bytes_per_element);

                        for (std::size_t g = 0; g < cache.groups(); ++g) {
                            const Matrix &q = queries[g];
                            const double ev = eviction_loss(q, cache, comp, g);
                            const double qk = qk_loss(q, cache, sel, g);
                            const auto evicted =
                                evicted_indices(sel.groups[g].retained, cache.tokens());
                            const BoundRecord bound = lemma1_check(
                                q, cache.keys[g], cache.values[g], evicted);

                            const double full_out_norm = frobenius_norm(
                                attention_output(q, cache.keys[g], cache.values[g]));
                            const double full_qk_norm = frobenius_norm(
                                matmul(q, cache.keys[g].transposed()));

                            rep.eviction_loss.push_back(ev);
                            rep.qk_loss.push_back(qk);
                            rep.bound_lhs.push_back(bound.lhs);
                            rep.bound_rhs.push_back(bound.rhs);
                            rep.eviction_loss_rel.push_back(
                                full_out_norm > 0.0 ? ev / full_out_norm : 0.0);
                            rep.qk_loss_rel.push_back(
                                full_qk_norm > 0.0 ? qk / full_qk_norm : 0.0);
                            rep.eviction_loss_mean += ev;
                            rep.qk_loss_mean += qk;
                        }
                        rep.eviction_loss_mean /= static_cast<double>(cache.groups());
                        rep.qk_loss_mean /= static_cast<double>(cache.groups());
                        result.reports.push_back(std::move(rep));
                    } catch (const std::exception &e) {
                        result.errors.push_back(
                            {to_string(policy), to_string(method), ratio, seed, e.what()});
                    }
                }
            }
        }
    }
    return result;
}

} // namespace curdkv
