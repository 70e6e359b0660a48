#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "curdkv/cache.hpp"
#include "curdkv/policy.hpp"

namespace curdkv {

// Frobenius distance between the full-cache attention output and the
// compressed-cache output, where the compressed softmax renormalizes over
// the retained rows only (sub-matrix semantics).
double eviction_loss(const Matrix &q, const KVCache &cache_full,
                     const CompressedCache &cache_comp, std::size_t group);

// Frobenius distance between q k^T and q k'^T with evicted key rows zeroed
// (matrix-level comparison at identical shape).
double qk_loss(const Matrix &q, const KVCache &cache_full, const SelectionResult &sel,
               std::size_t group);

struct BoundRecord {
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = false;
};

// Attention-output perturbation bound for zero-padded eviction:
//   lhs = |softmax(qk^T)v - softmax(qk'^T)v'|_F
//   rhs = sqrt(n)|v - v'|_F + 2 sqrt(n)|v'|_F
// where k', v' zero out the evicted rows. Tolerance 1e-9 on the comparison.
BoundRecord lemma1_check(const Matrix &q, const Matrix &k, const Matrix &v,
                         std::span<const std::size_t> evicted);

// 2 * g * n * d * bytes_per_element.
std::uint64_t cache_bytes(const KVCache &cache, std::size_t bytes_per_element);

// Ragged analogue: 2 * d * (sum of per-group token counts) * bytes_per_element.
std::uint64_t cache_bytes(const CompressedCache &cache, std::size_t bytes_per_element);

// One (policy, method, ratio, seed) grid cell. Loss vectors carry one entry
// per group; means are unweighted across groups.
struct EvalReport {
    std::string policy;
    std::string method;
    double ratio = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> eviction_loss;
    std::vector<double> qk_loss;
    std::vector<double> bound_lhs;
    std::vector<double> bound_rhs;
    std::vector<double> eviction_loss_rel;
    std::vector<double> qk_loss_rel;
    double eviction_loss_mean = 0.0;
    double qk_loss_mean = 0.0;
    std::uint64_t cache_bytes_full = 0;
    std::uint64_t cache_bytes_compressed = 0;
};

struct CellError {
    std::string policy;
    std::string method;
    double ratio = 0.0;
    std::uint64_t seed = 0;
    std::string message;
};

struct SweepResult {
    std::vector<EvalReport> reports;
    std::vector<CellError> errors;

    bool all_bounds_hold(double tolerance = 1e-9) const;
};

struct SweepOptions {
    std::vector<Policy> policies;
    std::vector<Method> methods;
    std::vector<double> ratios;
    std::vector<std::uint64_t> seeds;
    std::size_t sketch_dim = 20;
    std::size_t sinks = 4;
    double alpha = 0.20;
    std::size_t chunk_len = 32;
    std::size_t obs_window = 8;
    bool knorm_keep_low = true;
    bool adaptive_raw_scores = false;
    std::size_t query_rows = 8;
    std::size_t bytes_per_element = 8;
};

// Produces the cache evaluated in a cell. Seeded so that synthetic sources
// draw a fresh cache per trial; file-backed sources ignore the seed.
using CacheProvider = std::function<KVCache(std::uint64_t seed)>;

// Produces per-group evaluation query matrices for a cell.
using QueryProvider = std::function<std::vector<Matrix>(const KVCache &, std::uint64_t seed)>;

// Independent N(0,1) query rows, seeded per group; the question-agnostic
// stand-in for queries unknown at compression time.
QueryProvider gaussian_query_provider(std::size_t rows);

// Runs every (policy, method, ratio, seed) cell. Cell failures are recorded
// and do not abort the sweep; report order follows the grid order.
SweepResult run_sweep(const CacheProvider &cache_provider, const QueryProvider &query_provider,
                      const SweepOptions &opts);

} // namespace curdkv
