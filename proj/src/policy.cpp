#include "curdkv/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "curdkv/rng.hpp"

namespace curdkv {

const char *to_string(Policy p) {
    switch (p) {
    case Policy::curdkv: return "curdkv";
    case Policy::adacurdkv: return "adacurdkv";
    case Policy::window_sinks: return "window_sinks";
    case Policy::chunked: return "chunked";
    }
    return "?";
}

Policy policy_from_string(const std::string &name) {
    for (Policy p : {Policy::curdkv, Policy::adacurdkv, Policy::window_sinks, Policy::chunked}) {
        if (name == to_string(p)) {
            return p;
        }
    }
    throw ValidationError("unknown policy: \"" + name + "\"");
}

std::size_t derive_budget(const CompressionConfig &cfg, std::size_t n) {
    if (cfg.budget_k.has_value() == cfg.compression_ratio.has_value()) {
        throw ValidationError(
            "CompressionConfig: exactly one of budget_k / compression_ratio must be set");
    }
    if (cfg.safeguard_alpha < 0.0 || cfg.safeguard_alpha > 1.0) {
        throw ValidationError("CompressionConfig: safeguard_alpha must lie in [0, 1], got " +
                              std::to_string(cfg.safeguard_alpha));
    }
    if (n == 0) {
        throw ValidationError("derive_budget: cache has no tokens");
    }
    if (cfg.budget_k) {
        const std::size_t k = *cfg.budget_k;
        if (k == 0) {
            throw ValidationError("CompressionConfig: budget_k must be at least 1");
        }
        if (k > n) {
            throw ValidationError("CompressionConfig: budget_k " + std::to_string(k) +
                                  " exceeds token count " + std::to_string(n));
        }
        return k;
    }
    const double ratio = *cfg.compression_ratio;
    if (ratio < 0.0 || ratio >= 1.0) {
        throw ValidationError("CompressionConfig: compression_ratio must lie in [0, 1), got " +
                              std::to_string(ratio));
    }
    const auto rounded =
        static_cast<std::size_t>(std::llround((1.0 - ratio) * static_cast<double>(n)));
    std::size_t k = std::max(cfg.sinks, rounded);
    k = std::clamp<std::size_t>(k, 1, n);
    return k;
}

namespace {

// Indices [s, n) ordered by score descending, index ascending.
std::vector<std::size_t> rank_tail(const std::vector<double> &scores, std::size_t s) {
    std::vector<std::size_t> order;
    order.reserve(scores.size() - s);
    for (std::size_t i = s; i < scores.size(); ++i) {
        order.push_back(i);
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) {
            return scores[a] > scores[b];
        }
        return a < b;
    });
    return order;
}

bool scores_all_zero(const std::vector<double> &scores) {
    return std::all_of(scores.begin(), scores.end(), [](double v) { return v == 0.0; });
}

} // namespace

std::vector<std::size_t> select_top_with_sinks(const std::vector<double> &scores, std::size_t k,
                                               std::size_t s) {
    const std::size_t n = scores.size();
    if (k > n) {
        throw ValidationError("select_top_with_sinks: budget " + std::to_string(k) +
                              " exceeds token count " + std::to_string(n));
    }
    std::vector<std::size_t> retained;
    retained.reserve(k);
    if (k <= s) {
        // degenerate budget: only the leading tokens survive
        for (std::size_t i = 0; i < k; ++i) {
            retained.push_back(i);
        }
        return retained;
    }
    for (std::size_t i = 0; i < s; ++i) {
        retained.push_back(i);
    }
    if (scores_all_zero(scores)) {
        // zero scores carry no ranking signal; keep the most recent tokens
        for (std::size_t i = n - (k - s); i < n; ++i) {
            retained.push_back(i);
        }
    } else {
        const auto order = rank_tail(scores, s);
        retained.insert(retained.end(), order.begin(), order.begin() + (k - s));
    }
    std::sort(retained.begin(), retained.end());
    return retained;
}

namespace {

std::vector<Matrix> default_obs_queries(const KVCache &cache, std::size_t w) {
    w = std::max<std::size_t>(1, std::min(w, cache.tokens()));
    std::vector<std::size_t> idx(w);
    for (std::size_t i = 0; i < w; ++i) {
        idx[i] = cache.tokens() - w + i;
    }
    std::vector<Matrix> out;
    out.reserve(cache.groups());
    for (const Matrix &k : cache.keys) {
        out.push_back(k.take_rows(idx));
    }
    return out;
}

std::vector<ScoreVector> score_all_groups(const KVCache &cache, const CompressionConfig &cfg,
                                          const std::vector<Matrix> *obs_queries) {
    std::vector<Matrix> derived;
    if (cfg.method == Method::attention_sum && obs_queries == nullptr) {
        derived = default_obs_queries(cache, cfg.obs_window);
        obs_queries = &derived;
    }
    if (obs_queries != nullptr && obs_queries->size() != cache.groups()) {
        throw ShapeError("scoring: " + std::to_string(obs_queries->size()) +
                         " observation query matrices for " + std::to_string(cache.groups()) +
                         " groups");
    }
    std::vector<ScoreVector> scores;
    scores.reserve(cache.groups());
    for (std::size_t g = 0; g < cache.groups(); ++g) {
        ScoringOptions opts;
        opts.sketch_dim = cfg.sketch_dim;
        opts.seed = derive_seed(cfg.seed, g);
        opts.knorm_keep_low = cfg.knorm_keep_low;
        opts.obs_window = cfg.obs_window;
        std::optional<Matrix> q;
        if (obs_queries != nullptr) {
            q = (*obs_queries)[g];
        }
        scores.push_back(score_group(cache.keys[g], cache.values[g], cfg.method, opts, q));
    }
    return scores;
}

GroupSelection make_group_selection(std::vector<std::size_t> retained, std::size_t s,
                                    ScoreVector scores) {
    GroupSelection gs;
    gs.retained = std::move(retained);
    gs.granted = gs.retained.size();
    for (std::size_t i : gs.retained) {
        if (i < s) {
            gs.sinks.push_back(i);
        }
    }
    gs.scores = std::move(scores);
    return gs;
}

} // namespace

SelectionResult select_curdkv(const KVCache &cache, const CompressionConfig &cfg,
                              const std::vector<Matrix> *obs_queries) {
    const std::size_t k = derive_budget(cfg, cache.tokens());
    auto scores = score_all_groups(cache, cfg, obs_queries);
    SelectionResult sel;
    sel.policy = to_string(Policy::curdkv);
    sel.requested_k = k;
    for (std::size_t g = 0; g < cache.groups(); ++g) {
        auto retained = select_top_with_sinks(scores[g].scores, k, cfg.sinks);
        sel.groups.push_back(make_group_selection(std::move(retained), cfg.sinks,
                                                  std::move(scores[g])));
    }
    return sel;
}

std::vector<std::vector<std::size_t>> allocate_adaptive(
    const std::vector<std::vector<double>> &group_scores, std::size_t k, std::size_t s,
    double alpha) {
    const std::size_t g = group_scores.size();
    if (g == 0) {
        throw ValidationError("allocate_adaptive: no groups");
    }
    const std::size_t n = group_scores.front().size();
    for (const auto &sc : group_scores) {
        if (sc.size() != n) {
            throw ShapeError("allocate_adaptive: ragged score vectors");
        }
    }
    const std::size_t budget = g * k;
    if (budget > g * n) {
        throw ValidationError("allocate_adaptive: pooled budget " + std::to_string(budget) +
                              " exceeds capacity " + std::to_string(g * n));
    }
    if (k <= s) {
        // degenerate: every group keeps its first k tokens
        std::vector<std::vector<std::size_t>> out(g);
        for (auto &r : out) {
            for (std::size_t i = 0; i < k; ++i) {
                r.push_back(i);
            }
        }
        return out;
    }

    const auto floor_count =
        std::max(s, static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(k))));
    std::vector<std::vector<std::size_t>> retained(g);
    std::vector<std::vector<bool>> taken(g, std::vector<bool>(n, false));
    for (std::size_t gi = 0; gi < g; ++gi) {
        retained[gi] = select_top_with_sinks(group_scores[gi], floor_count, s);
        for (std::size_t idx : retained[gi]) {
            taken[gi][idx] = true;
        }
    }

    // global fill: best remaining scores across all groups
    struct Candidate {
        double score;
        std::size_t group;
        std::size_t index;
    };
    std::vector<Candidate> pool;
    pool.reserve(g * (n - floor_count));
    for (std::size_t gi = 0; gi < g; ++gi) {
        for (std::size_t idx = s; idx < n; ++idx) {
            if (!taken[gi][idx]) {
                pool.push_back({group_scores[gi][idx], gi, idx});
            }
        }
    }
    std::sort(pool.begin(), pool.end(), [](const Candidate &a, const Candidate &b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        if (a.group != b.group) {
            return a.group < b.group;
        }
        return a.index < b.index;
    });

    std::size_t remaining = budget - g * floor_count;
    for (const Candidate &c : pool) {
        if (remaining == 0) {
            break;
        }
        retained[c.group].push_back(c.index);
        --remaining;
    }
    for (auto &r : retained) {
        std::sort(r.begin(), r.end());
    }
    return retained;
}

SelectionResult select_adacurdkv(const KVCache &cache, const CompressionConfig &cfg,
                                 const std::vector<Matrix> *obs_queries) {
    if (!cfg.adaptive) {
        throw ValidationError("select_adacurdkv: cfg.adaptive must be true");
    }
    const std::size_t k = derive_budget(cfg, cache.tokens());
    auto scores = score_all_groups(cache, cfg, obs_queries);

    // per-group normalization is a positive rescale, so local selection is
    // unchanged either way; only the cross-group ranking differs
    std::vector<std::vector<double>> pooled(cache.groups());
    for (std::size_t g = 0; g < cache.groups(); ++g) {
        if (cfg.adaptive_raw_scores) {
            ScoringOptions opts;
            opts.sketch_dim = cfg.sketch_dim;
            opts.seed = derive_seed(cfg.seed, g);
            opts.knorm_keep_low = cfg.knorm_keep_low;
            opts.obs_window = cfg.obs_window;
            pooled[g] = raw_group_scores(cache.keys[g], cache.values[g], cfg.method, opts,
                                         obs_queries ? std::optional<Matrix>((*obs_queries)[g])
                                                     : std::nullopt)
                            .scores;
        } else {
            pooled[g] = scores[g].scores;
        }
    }

    auto retained = allocate_adaptive(pooled, k, cfg.sinks, cfg.safeguard_alpha);
    SelectionResult sel;
    sel.policy = to_string(Policy::adacurdkv);
    sel.requested_k = k;
    for (std::size_t g = 0; g < cache.groups(); ++g) {
        sel.groups.push_back(
            make_group_selection(std::move(retained[g]), cfg.sinks, std::move(scores[g])));
    }
    return sel;
}

SelectionResult select_window_sinks(const KVCache &cache, const CompressionConfig &cfg) {
    const std::size_t n = cache.tokens();
    const std::size_t k = derive_budget(cfg, n);
    SelectionResult sel;
    sel.policy = to_string(Policy::window_sinks);
    sel.requested_k = k;
    for (std::size_t g = 0; g < cache.groups(); ++g) {
        std::vector<std::size_t> retained;
        if (k <= cfg.sinks) {
            for (std::size_t i = 0; i < k; ++i) {
                retained.push_back(i);
            }
        } else {
            for (std::size_t i = 0; i < cfg.sinks; ++i) {
                retained.push_back(i);
            }
            for (std::size_t i = n - (k - cfg.sinks); i < n; ++i) {
                retained.push_back(i);
            }
            std::sort(retained.begin(), retained.end());
            retained.erase(std::unique(retained.begin(), retained.end()), retained.end());
            // overlap between sinks and window can only happen when the
            // window covers the whole sequence; pad from the front
            for (std::size_t i = 0; retained.size() < k; ++i) {
                if (!std::binary_search(retained.begin(), retained.end(), i)) {
                    retained.insert(std::lower_bound(retained.begin(), retained.end(), i), i);
                }
            }
        }
        sel.groups.push_back(
            make_group_selection(std::move(retained), cfg.sinks,
                                 position_recency_scores(n)));
    }
    return sel;
}

namespace {

// Largest-remainder apportionment of `budget` over chunk capacities.
std::vector<std::size_t> apportion(const std::vector<std::size_t> &capacity, std::size_t budget) {
    const std::size_t total = std::accumulate(capacity.begin(), capacity.end(), std::size_t{0});
    std::vector<std::size_t> quota(capacity.size(), 0);
    if (total == 0 || budget == 0) {
        return quota;
    }
    std::vector<double> frac(capacity.size());
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < capacity.size(); ++c) {
        const double share = static_cast<double>(budget) * static_cast<double>(capacity[c]) /
                             static_cast<double>(total);
        quota[c] = static_cast<std::size_t>(std::floor(share));
        frac[c] = share - std::floor(share);
        assigned += quota[c];
    }
    std::vector<std::size_t> order(capacity.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (frac[a] != frac[b]) {
            return frac[a] > frac[b];
        }
        return a < b;
    });
    for (std::size_t i = 0; assigned < budget; i = (i + 1) % order.size()) {
        const std::size_t c = order[i];
        if (quota[c] < capacity[c]) {
            ++quota[c];
            ++assigned;
        }
    }
    return quota;
}

} // namespace

SelectionResult select_chunked(const KVCache &cache, const CompressionConfig &cfg,
                               std::size_t chunk_len, const std::vector<Matrix> *obs_queries) {
    if (chunk_len == 0) {
        throw ValidationError("select_chunked: chunk_len must be at least 1");
    }
    const std::size_t n = cache.tokens();
    const std::size_t k = derive_budget(cfg, n);
    auto scores = score_all_groups(cache, cfg, obs_queries);

    SelectionResult sel;
    sel.policy = to_string(Policy::chunked);
    sel.requested_k = k;

    const std::size_t s = std::min(cfg.sinks, k);
    const std::size_t num_chunks = (n + chunk_len - 1) / chunk_len;
    // capacity = non-sink tokens per chunk
    std::vector<std::size_t> capacity(num_chunks, 0);
    for (std::size_t c = 0; c < num_chunks; ++c) {
        const std::size_t lo = std::max(c * chunk_len, s);
        const std::size_t hi = std::min((c + 1) * chunk_len, n);
        capacity[c] = hi > lo ? hi - lo : 0;
    }
    const auto quota = apportion(capacity, k - s);

    for (std::size_t g = 0; g < cache.groups(); ++g) {
        std::vector<std::size_t> retained;
        for (std::size_t i = 0; i < s; ++i) {
            retained.push_back(i);
        }
        const auto &sc = scores[g].scores;
        for (std::size_t c = 0; c < num_chunks; ++c) {
            const std::size_t lo = std::max(c * chunk_len, s);
            const std::size_t hi = std::min((c + 1) * chunk_len, n);
            if (hi <= lo || quota[c] == 0) {
                continue;
            }
            std::vector<std::size_t> order;
            for (std::size_t i = lo; i < hi; ++i) {
                order.push_back(i);
            }
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                if (sc[a] != sc[b]) {
                    return sc[a] > sc[b];
                }
                return a < b;
            });
            retained.insert(retained.end(), order.begin(), order.begin() + quota[c]);
        }
        std::sort(retained.begin(), retained.end());
        sel.groups.push_back(
            make_group_selection(std::move(retained), cfg.sinks, std::move(scores[g])));
    }
    return sel;
}

SelectionResult select_with_policy(Policy policy, const KVCache &cache,
                                   const CompressionConfig &cfg, std::size_t chunk_len,
                                   const std::vector<Matrix> *obs_queries) {
    switch (policy) {
    case Policy::curdkv: return select_curdkv(cache, cfg, obs_queries);
    case Policy::adacurdkv: {
        CompressionConfig adaptive_cfg = cfg;
        adaptive_cfg.adaptive = true;
        return select_adacurdkv(cache, adaptive_cfg, obs_queries);
    }
    case Policy::window_sinks: return select_window_sinks(cache, cfg);
    case Policy::chunked: return select_chunked(cache, cfg, chunk_len, obs_queries);
    }
    throw ValidationError("select_with_policy: unhandled policy");
}

CompressedCache apply_selection(const KVCache &cache, const SelectionResult &sel) {
    if (sel.groups.size() != cache.groups()) {
        throw ShapeError("apply_selection: " + std::to_string(sel.groups.size()) +
                         " selection groups vs " + std::to_string(cache.groups()) +
                         " cache groups");
    }
    std::vector<Matrix> keys, values;
    keys.reserve(cache.groups());
    values.reserve(cache.groups());
    for (std::size_t g = 0; g < cache.groups(); ++g) {
        const auto &idx = sel.groups[g].retained;
        keys.push_back(cache.keys[g].take_rows(idx));
        values.push_back(cache.values[g].take_rows(idx));
    }
    return CompressedCache(std::move(keys), std::move(values));
}

} // namespace curdkv
