#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "curdkv/cache.hpp"
#include "curdkv/policy.hpp"
#include "curdkv/rng.hpp"

using namespace curdkv;

namespace {

KVCache random_cache(std::size_t g, std::size_t n, std::size_t d, std::uint64_t seed) {
    return generate_synthetic(SyntheticKind::iid_gaussian, g, n, d, seed).cache;
}

CompressionConfig ratio_cfg(double ratio, std::size_t sinks = 4) {
    CompressionConfig cfg;
    cfg.compression_ratio = ratio;
    cfg.sinks = sinks;
    return cfg;
}

CompressionConfig budget_cfg(std::size_t k, std::size_t sinks = 4) {
    CompressionConfig cfg;
    cfg.budget_k = k;
    cfg.sinks = sinks;
    return cfg;
}

// Brute-force reference: sinks + best k-s of the tail by (score desc, index
// asc), via a full stable sort each time.
std::vector<std::size_t> naive_top_with_sinks(const std::vector<double> &scores, std::size_t k,
                                              std::size_t s) {
    std::vector<std::size_t> retained;
    for (std::size_t i = 0; i < std::min(k, s); ++i) {
        retained.push_back(i);
    }
    if (k <= s) {
        return retained;
    }
    const bool all_zero =
        std::all_of(scores.begin(), scores.end(), [](double v) { return v == 0.0; });
    if (all_zero) {
        for (std::size_t i = scores.size() - (k - s); i < scores.size(); ++i) {
            retained.push_back(i);
        }
        return retained;
    }
    std::vector<std::size_t> tail(scores.size() - s);
    std::iota(tail.begin(), tail.end(), s);
    std::stable_sort(tail.begin(), tail.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    retained.insert(retained.end(), tail.begin(), tail.begin() + (k - s));
    std::sort(retained.begin(), retained.end());
    return retained;
}

} // namespace

TEST_CASE("budget derivation from ratio and explicit k") {
    CHECK(derive_budget(ratio_cfg(0.0), 100) == 100);
    CHECK(derive_budget(ratio_cfg(0.9), 100) == 10);
    CHECK(derive_budget(ratio_cfg(0.99), 100) == 4); // clamped up to the sinks
    CHECK(derive_budget(ratio_cfg(0.5), 101) == 51);
    CHECK(derive_budget(budget_cfg(7), 100) == 7);

    CHECK_THROWS_AS(derive_budget(budget_cfg(101), 100), ValidationError);
    CHECK_THROWS_AS(derive_budget(ratio_cfg(1.0), 100), ValidationError);
    CHECK_THROWS_AS(derive_budget(ratio_cfg(-0.1), 100), ValidationError);
    CHECK_THROWS_AS(derive_budget(CompressionConfig{}, 100), ValidationError);
    CompressionConfig both;
    both.budget_k = 5;
    both.compression_ratio = 0.5;
    CHECK_THROWS_AS(derive_budget(both, 100), ValidationError);
}

TEST_CASE("select_top_with_sinks hand instance") {
    // n=6, s=2, k=4: post-sink scores rank 2 > 5 > 4 > 3
    const std::vector<double> scores{0.0, 0.0, 0.9, 0.1, 0.5, 0.7};
    const auto retained = select_top_with_sinks(scores, 4, 2);
    CHECK(retained == std::vector<std::size_t>{0, 1, 2, 5});
}

TEST_CASE("select_top_with_sinks matches the exhaustive argsort oracle") {
    SplitMix64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.next_u64() % 12;
        const std::size_t s = rng.next_u64() % 5;
        const std::size_t k = 1 + rng.next_u64() % n;
        std::vector<double> scores(n);
        for (double &v : scores) {
            v = static_cast<double>(rng.next_u64() % 8); // ties are common
        }
        CHECK(select_top_with_sinks(scores, k, s) == naive_top_with_sinks(scores, k, s));
    }
}

TEST_CASE("select_top_with_sinks degenerate and zero-score paths") {
    const std::vector<double> scores{0.5, 0.1, 0.9, 0.2};
    CHECK(select_top_with_sinks(scores, 2, 3) == std::vector<std::size_t>{0, 1});
    CHECK_THROWS_AS(select_top_with_sinks(scores, 5, 0), ValidationError);

    // all-zero scores: recency fallback keeps the most recent tail
    const std::vector<double> zeros(6, 0.0);
    CHECK(select_top_with_sinks(zeros, 4, 2) == std::vector<std::size_t>{0, 1, 4, 5});
}

TEST_CASE("monotone budget: top-k retained sets nest") {
    SplitMix64 rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 5 + rng.next_u64() % 10;
        std::vector<double> scores(n);
        for (double &v : scores) {
            v = static_cast<double>(1 + rng.next_u64() % 6);
        }
        for (std::size_t k = 1; k < n; ++k) {
            const auto small = select_top_with_sinks(scores, k, 2);
            const auto big = select_top_with_sinks(scores, k + 1, 2);
            CHECK(std::includes(big.begin(), big.end(), small.begin(), small.end()));
        }
    }
}

TEST_CASE("select_curdkv retains everything at full budget") {
    const KVCache cache = random_cache(2, 10, 4, 3);
    for (Method m : {Method::sketch_kv, Method::exact_leverage_kv, Method::key_norm}) {
        CompressionConfig cfg = budget_cfg(10);
        cfg.method = m;
        const SelectionResult sel = select_curdkv(cache, cfg);
        for (const auto &g : sel.groups) {
            CHECK(g.retained.size() == 10);
            CHECK(g.retained.front() == 0);
            CHECK(g.retained.back() == 9);
        }
    }
}

TEST_CASE("select_curdkv budget exactness and sink preservation") {
    const KVCache cache = random_cache(3, 40, 8, 5);
    CompressionConfig cfg = ratio_cfg(0.7);
    cfg.seed = 11;
    const SelectionResult sel = select_curdkv(cache, cfg);
    CHECK(sel.requested_k == 12);
    for (const auto &g : sel.groups) {
        CHECK(g.granted == 12);
        CHECK(g.retained.size() == 12);
        CHECK(std::is_sorted(g.retained.begin(), g.retained.end()));
        CHECK(std::adjacent_find(g.retained.begin(), g.retained.end()) == g.retained.end());
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(std::binary_search(g.retained.begin(), g.retained.end(), i));
        }
    }
}

TEST_CASE("select_curdkv recovers planted heavy rows") {
    SyntheticParams params;
    params.heavy_fraction = 0.1;
    params.heavy_scale = 10.0;
    std::size_t good_trials = 0;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto sc =
            generate_synthetic(SyntheticKind::planted_heavy, 1, 100, 64, 7000 + seed, params);
        CompressionConfig cfg = budget_cfg(14);
        cfg.method = Method::sketch_kv;
        cfg.sketch_dim = 20;
        cfg.seed = seed;
        const SelectionResult sel = select_curdkv(sc.cache, cfg);
        std::size_t recovered = 0;
        for (std::size_t row : sc.planted_rows) {
            if (std::binary_search(sel.groups[0].retained.begin(),
                                   sel.groups[0].retained.end(), row)) {
                ++recovered;
            }
        }
        if (recovered >= 9) {
            ++good_trials;
        }
    }
    CHECK(good_trials >= 29);
}

TEST_CASE("selection is deterministic") {
    const KVCache cache = random_cache(2, 30, 8, 17);
    CompressionConfig cfg = ratio_cfg(0.5);
    cfg.seed = 23;
    const SelectionResult a = select_curdkv(cache, cfg);
    const SelectionResult b = select_curdkv(cache, cfg);
    for (std::size_t g = 0; g < 2; ++g) {
        CHECK(a.groups[g].retained == b.groups[g].retained);
    }
}

TEST_CASE("select_adacurdkv reduces to curdkv for one group") {
    const KVCache cache = random_cache(1, 24, 6, 29);
    CompressionConfig cfg = ratio_cfg(0.5);
    cfg.seed = 31;
    cfg.adaptive = true;
    const SelectionResult ada = select_adacurdkv(cache, cfg);
    cfg.adaptive = false;
    const SelectionResult fixed = select_curdkv(cache, cfg);
    CHECK(ada.groups[0].retained == fixed.groups[0].retained);
}

TEST_CASE("select_adacurdkv requires the adaptive flag") {
    const KVCache cache = random_cache(1, 8, 4, 30);
    CHECK_THROWS_AS(select_adacurdkv(cache, ratio_cfg(0.5)), ValidationError);
}

TEST_CASE("select_adacurdkv with alpha=1 grants exactly k per group") {
    const KVCache cache = random_cache(4, 20, 6, 37);
    CompressionConfig cfg = ratio_cfg(0.6);
    cfg.adaptive = true;
    cfg.safeguard_alpha = 1.0;
    cfg.seed = 41;
    const SelectionResult sel = select_adacurdkv(cache, cfg);
    for (const auto &g : sel.groups) {
        CHECK(g.granted == sel.requested_k);
    }
}

TEST_CASE("allocate_adaptive sends the non-floor budget to the dominant group") {
    // group 0 scores uniformly 10x group 1; alpha = 0, no sinks
    const std::vector<std::vector<double>> scores{
        {10, 10, 10, 10, 10, 10, 10, 10},
        {1, 1, 1, 1, 1, 1, 1, 1},
    };
    const auto retained = allocate_adaptive(scores, 4, 0, 0.0);
    CHECK(retained[0].size() == 8); // the whole pooled budget fits in group 0
    CHECK(retained[1].empty());
}

TEST_CASE("allocate_adaptive respects floor and pooled total") {
    const std::vector<std::vector<double>> scores{
        {9, 9, 9, 9, 9, 9, 1, 1, 1, 1},
        {2, 2, 1, 1, 1, 1, 1, 1, 1, 1},
    };
    const std::size_t k = 5, s = 2;
    const double alpha = 0.4; // floor = max(2, ceil(2)) = 2
    const auto retained = allocate_adaptive(scores, k, s, alpha);
    CHECK(retained[0].size() + retained[1].size() == 2 * k);
    for (const auto &r : retained) {
        CHECK(r.size() >= 2);
        CHECK(std::binary_search(r.begin(), r.end(), std::size_t{0}));
        CHECK(std::binary_search(r.begin(), r.end(), std::size_t{1}));
    }
    CHECK(retained[0].size() > retained[1].size());
}

TEST_CASE("allocate_adaptive rejects overfull budgets") {
    const std::vector<std::vector<double>> scores{{1, 1}, {1, 1}};
    CHECK_THROWS_AS(allocate_adaptive(scores, 3, 0, 0.2), ValidationError);
}

TEST_CASE("adaptive grants never exceed the token count") {
    const std::vector<std::vector<double>> scores{
        {100, 100, 100, 100},
        {1, 1, 1, 1},
        {1, 1, 1, 1},
    };
    const auto retained = allocate_adaptive(scores, 4, 1, 0.25);
    std::size_t total = 0;
    for (const auto &r : retained) {
        CHECK(r.size() <= 4);
        total += r.size();
    }
    CHECK(total == 12);
}

TEST_CASE("select_window_sinks keeps sinks plus the recency window") {
    const KVCache cache = random_cache(1, 10, 4, 43);
    const SelectionResult sel = select_window_sinks(cache, budget_cfg(5, 2));
    CHECK(sel.groups[0].retained == std::vector<std::size_t>{0, 1, 7, 8, 9});

    const SelectionResult full = select_window_sinks(cache, budget_cfg(10, 2));
    CHECK(full.groups[0].retained.size() == 10);
}

TEST_CASE("select_window_sinks ignores cache contents") {
    const CompressionConfig cfg = budget_cfg(6, 3);
    const SelectionResult a = select_window_sinks(random_cache(1, 12, 4, 47), cfg);
    const SelectionResult b = select_window_sinks(random_cache(1, 12, 4, 48), cfg);
    CHECK(a.groups[0].retained == b.groups[0].retained);
}

TEST_CASE("select_chunked single chunk equals curdkv") {
    const KVCache cache = random_cache(2, 16, 6, 53);
    CompressionConfig cfg = ratio_cfg(0.5);
    cfg.seed = 59;
    const SelectionResult chunked = select_chunked(cache, cfg, 16);
    const SelectionResult plain = select_curdkv(cache, cfg);
    for (std::size_t g = 0; g < 2; ++g) {
        CHECK(chunked.groups[g].retained == plain.groups[g].retained);
    }
}

TEST_CASE("select_chunked splits the budget across chunks") {
    const KVCache cache = random_cache(1, 8, 4, 61);
    CompressionConfig cfg = budget_cfg(4, 0);
    cfg.seed = 67;
    const SelectionResult sel = select_chunked(cache, cfg, 4);
    REQUIRE(sel.groups[0].retained.size() == 4);
    std::size_t first = 0, second = 0;
    for (std::size_t idx : sel.groups[0].retained) {
        (idx < 4 ? first : second) += 1;
    }
    CHECK(first == 2);
    CHECK(second == 2);
}

TEST_CASE("select_chunked uniform scores keep the earliest index per chunk") {
    // zero key rows all map to the same positive keep-low score, so the
    // in-chunk tie-break lands on the lowest index
    const KVCache zero_cache(std::vector<Matrix>{Matrix(8, 3)},
                             std::vector<Matrix>{Matrix(8, 3)});
    CompressionConfig cfg = budget_cfg(4, 0);
    cfg.method = Method::key_norm;
    const SelectionResult sel = select_chunked(zero_cache, cfg, 2);
    CHECK(sel.groups[0].retained == std::vector<std::size_t>{0, 2, 4, 6});
}

TEST_CASE("select_chunked validates chunk_len") {
    const KVCache cache = random_cache(1, 8, 4, 71);
    CHECK_THROWS_AS(select_chunked(cache, budget_cfg(4), 0), ValidationError);
}

TEST_CASE("apply_selection gathers bit-exact rows") {
    const KVCache cache = random_cache(2, 12, 5, 73);
    CompressionConfig cfg = ratio_cfg(0.5);
    cfg.seed = 79;
    const SelectionResult sel = select_curdkv(cache, cfg);
    const CompressedCache comp = apply_selection(cache, sel);
    CHECK(comp.uniform());
    CHECK(comp.tokens(0) == sel.requested_k);
    for (std::size_t g = 0; g < 2; ++g) {
        for (std::size_t i = 0; i < sel.groups[g].retained.size(); ++i) {
            const std::size_t src = sel.groups[g].retained[i];
            for (std::size_t j = 0; j < 5; ++j) {
                CHECK(comp.keys[g](i, j) == cache.keys[g](src, j));
                CHECK(comp.values[g](i, j) == cache.values[g](src, j));
            }
        }
    }

    // full selection reproduces the cache exactly
    const SelectionResult all = select_curdkv(cache, budget_cfg(12));
    const CompressedCache same = apply_selection(cache, all);
    for (std::size_t g = 0; g < 2; ++g) {
        CHECK(same.keys[g] == cache.keys[g]);
        CHECK(same.values[g] == cache.values[g]);
    }

    // single-token selection
    SelectionResult one;
    one.policy = "curdkv";
    one.requested_k = 1;
    one.groups.resize(2);
    for (auto &g : one.groups) {
        g.retained = {0};
        g.granted = 1;
    }
    const CompressedCache tiny = apply_selection(cache, one);
    CHECK(tiny.tokens(0) == 1);
    for (std::size_t j = 0; j < 5; ++j) {
        CHECK(tiny.keys[0](0, j) == cache.keys[0](0, j));
    }
}

TEST_CASE("apply_selection carries ragged adaptive grants") {
    const KVCache cache = random_cache(2, 16, 4, 91);
    SelectionResult sel;
    sel.policy = "adacurdkv";
    sel.requested_k = 6;
    sel.groups.resize(2);
    sel.groups[0].retained = {0, 1, 2, 3, 5, 8, 9, 12};
    sel.groups[1].retained = {0, 1, 2, 3};
    for (auto &g : sel.groups) {
        g.granted = g.retained.size();
    }
    const CompressedCache comp = apply_selection(cache, sel);
    CHECK_FALSE(comp.uniform());
    CHECK(comp.tokens(0) == 8);
    CHECK(comp.tokens(1) == 4);
    CHECK(comp.total_tokens() == 12);
    CHECK_THROWS_AS(comp.to_kv_cache(), ShapeError);
}

TEST_CASE("score scaling leaves retained sets unchanged") {
    const KVCache cache = random_cache(1, 20, 6, 83);
    CompressionConfig cfg = ratio_cfg(0.6);
    cfg.seed = 89;
    const auto base = select_curdkv(cache, cfg).groups[0].retained;

    // scaling the cache scales every sketch score by the same positive factor
    std::vector<Matrix> keys = cache.keys, values = cache.values;
    for (double &v : keys[0].data()) {
        v *= 3.5;
    }
    for (double &v : values[0].data()) {
        v *= 3.5;
    }
    const KVCache scaled(std::move(keys), std::move(values));
    CHECK(select_curdkv(scaled, cfg).groups[0].retained == base);
}

TEST_CASE("policy names round-trip") {
    for (Policy p : {Policy::curdkv, Policy::adacurdkv, Policy::window_sinks, Policy::chunked}) {
        CHECK(policy_from_string(to_string(p)) == p);
    }
    CHECK_THROWS_AS(policy_from_string("h2o"), ValidationError);
}
