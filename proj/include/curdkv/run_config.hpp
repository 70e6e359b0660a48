#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "curdkv/cache.hpp"
#include "curdkv/eval.hpp"

namespace curdkv {

// Where the evaluated cache comes from: a seeded synthetic generator or a
// pair of CKV1 files.
struct CacheSpec {
    bool synthetic = true;
    SyntheticKind kind = SyntheticKind::iid_gaussian;
    std::size_t g = 1;
    std::size_t n = 0;
    std::size_t d = 0;
    std::uint64_t seed = 0; // base; the sweep cell seed is mixed in per trial
    SyntheticParams params;
    std::string keys_path;
    std::string values_path;
};

struct QuerySpec {
    enum class Source { gaussian, file };
    Source source = Source::gaussian;
    std::size_t rows = 8;
    std::vector<std::string> paths; // one matrix per group for Source::file
};

// JSON-backed sweep/eval configuration. Parsing is strict: unknown keys are
// rejected at every level.
struct RunConfig {
    CacheSpec cache;
    SweepOptions sweep;
    QuerySpec queries;
    std::string out_prefix;
};

RunConfig load_run_config(const std::filesystem::path &path);
RunConfig parse_run_config(const std::string &json_text);

CacheProvider make_cache_provider(const CacheSpec &spec);
QueryProvider make_query_provider(const QuerySpec &spec);

// Tabular report emission. Columns, in order: policy, method, ratio, seed,
// group, eviction_loss, qk_loss, bound_lhs, bound_rhs, cache_bytes_full,
// cache_bytes_compressed, eviction_loss_rel, qk_loss_rel. One row per cell
// per group; cells that errored appear only in the JSON output.
std::string sweep_to_csv(const SweepResult &result);
std::string sweep_to_json(const SweepResult &result);

} // namespace curdkv
