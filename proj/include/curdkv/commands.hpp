#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "curdkv/policy.hpp"
#include "curdkv/run_config.hpp"
#include "curdkv/tensor_io.hpp"

namespace curdkv {

// Process exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

struct GenArgs {
    SyntheticKind kind = SyntheticKind::iid_gaussian;
    std::size_t g = 1;
    std::size_t n = 0;
    std::size_t d = 0;
    std::uint64_t seed = 0;
    SyntheticParams params;
    Dtype dtype = Dtype::f64;
    std::string out_prefix;
};

// Writes <out>.keys.ckv, <out>.values.ckv and <out>.manifest.json.
int cmd_gen(const GenArgs &args, std::ostream &out, std::ostream &err);

struct CompressArgs {
    std::string keys_path;
    std::string values_path;
    Policy policy = Policy::curdkv;
    CompressionConfig cfg;
    std::size_t chunk_len = 32;
    std::string out_prefix;
};

// Writes compressed <out>.keys.ckv / <out>.values.ckv (input dtype) and
// <out>.selection.json.
int cmd_compress(const CompressArgs &args, std::ostream &out, std::ostream &err);

// Runs the configured grid and writes <out>.csv and <out>.json. Exit 0 only
// when every bound record holds and no cell errored. cmd_eval additionally
// requires the grid to contain exactly one cell.
int cmd_sweep(const std::string &config_path, const std::string &out_override, std::ostream &out,
              std::ostream &err);
int cmd_eval(const std::string &config_path, const std::string &out_override, std::ostream &out,
             std::ostream &err);

struct BoundCheckArgs {
    std::size_t trials = 1000;
    std::size_t max_n = 32;
    std::size_t max_d = 16;
    std::uint64_t seed = 0;
};

// Randomized verification of the eviction bound; prints per-run summary and
// the worst observed lhs/rhs ratio. Exit 0 iff every trial holds.
int cmd_boundcheck(const BoundCheckArgs &args, std::ostream &out, std::ostream &err);

} // namespace curdkv
