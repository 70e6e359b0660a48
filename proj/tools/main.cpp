#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "curdkv/commands.hpp"

namespace {

using namespace curdkv;

// Shared compression flags; defaults follow the library defaults
// (sketch dim 20, 4 sinks, alpha 0.20).
struct CompressionFlags {
    double ratio = -1.0;
    std::int64_t budget_k = -1;
    std::size_t sketch_dim = 20;
    std::size_t sinks = 4;
    double alpha = 0.20;
    std::string method = "sketch_kv";
    std::string policy = "curdkv";
    std::uint64_t seed = 0;
    std::size_t chunk_len = 32;
    std::size_t obs_window = 8;
    bool knorm_keep_high = false;

    void attach(CLI::App *app) {
        app->add_option("--ratio", ratio, "Compression ratio in [0, 1): fraction of tokens evicted");
        app->add_option("--budget-k", budget_k, "Tokens retained per group (alternative to --ratio)");
        app->add_option("--sketch-dim", sketch_dim, "Gaussian projection dimension")
            ->default_val(20);
        app->add_option("--sinks", sinks, "Leading sink tokens always retained")->default_val(4);
        app->add_option("--alpha", alpha, "Adaptive safeguard: minimum budget fraction per group")
            ->default_val(0.20);
        app->add_option("--method", method,
                        "Scoring method (exact_leverage_{key,value,kv}, sketch_{key,value,kv}, "
                        "key_norm, attention_sum, position_recency)")
            ->default_val("sketch_kv");
        app->add_option("--policy", policy, "curdkv | adacurdkv | window_sinks | chunked")
            ->default_val("curdkv");
        app->add_option("--seed", seed, "Base RNG seed")->default_val(0);
        app->add_option("--chunk-len", chunk_len, "Chunk length for the chunked policy")
            ->default_val(32);
        app->add_option("--obs-window", obs_window, "Observation rows for attention_sum scoring")
            ->default_val(8);
        app->add_flag("--knorm-keep-high", knorm_keep_high,
                      "Flip the key-norm convention to retain high-norm keys");
    }

    CompressionConfig to_config() const {
        CompressionConfig cfg;
        if (ratio >= 0.0) {
            cfg.compression_ratio = ratio;
        }
        if (budget_k >= 0) {
            cfg.budget_k = static_cast<std::size_t>(budget_k);
        }
        cfg.sketch_dim = sketch_dim;
        cfg.sinks = sinks;
        cfg.safeguard_alpha = alpha;
        cfg.method = method_from_string(method);
        cfg.seed = seed;
        cfg.obs_window = obs_window;
        cfg.knorm_keep_low = !knorm_keep_high;
        return cfg;
    }
};

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"KV-cache compression toolkit: leverage-score token selection, baseline "
                 "eviction policies and reconstruction-loss evaluation"};
    app.require_subcommand(1);

    // gen
    GenArgs gen;
    std::string gen_kind = "iid_gaussian";
    std::string gen_dtype = "f64";
    auto *gen_cmd = app.add_subcommand("gen", "Generate a synthetic cache as CKV1 files");
    gen_cmd->add_option("--kind", gen_kind, "iid_gaussian | planted_heavy | sink_pattern")
        ->default_val("iid_gaussian");
    gen_cmd->add_option("--groups,-g", gen.g, "Cache groups")->default_val(1);
    gen_cmd->add_option("--tokens,-n", gen.n, "Tokens")->required();
    gen_cmd->add_option("--dim,-d", gen.d, "Head dimension")->required();
    gen_cmd->add_option("--seed", gen.seed, "RNG seed")->default_val(0);
    gen_cmd->add_option("--heavy-fraction", gen.params.heavy_fraction,
                        "planted_heavy: fraction of scaled token rows")
        ->default_val(0.1);
    gen_cmd->add_option("--heavy-scale", gen.params.heavy_scale,
                        "planted_heavy: row scale factor")
        ->default_val(10.0);
    gen_cmd->add_option("--sink-count", gen.params.sink_count,
                        "sink_pattern: boosted leading keys")
        ->default_val(4);
    gen_cmd->add_option("--sink-scale", gen.params.sink_scale, "sink_pattern: key scale factor")
        ->default_val(10.0);
    gen_cmd->add_option("--dtype", gen_dtype, "Payload dtype: f32 | f64")->default_val("f64");
    gen_cmd->add_option("--out", gen.out_prefix, "Output path prefix")->required();

    // compress
    CompressArgs compress;
    CompressionFlags compress_flags;
    auto *compress_cmd =
        app.add_subcommand("compress", "Compress a CKV1 cache with a selection policy");
    compress_cmd->add_option("--keys", compress.keys_path, "Input keys (CKV1)")->required();
    compress_cmd->add_option("--values", compress.values_path, "Input values (CKV1)")->required();
    compress_flags.attach(compress_cmd);
    compress_cmd->add_option("--out", compress.out_prefix, "Output path prefix")->required();

    // eval / sweep
    std::string eval_config, eval_out;
    auto *eval_cmd = app.add_subcommand("eval", "Evaluate a single configured grid cell");
    eval_cmd->add_option("--config", eval_config, "RunConfig JSON path")->required();
    eval_cmd->add_option("--out", eval_out, "Output prefix (overrides config \"out\")");

    std::string sweep_config, sweep_out;
    auto *sweep_cmd = app.add_subcommand("sweep", "Run a configured evaluation grid");
    sweep_cmd->add_option("--config", sweep_config, "RunConfig JSON path")->required();
    sweep_cmd->add_option("--out", sweep_out, "Output prefix (overrides config \"out\")");

    // bound-check
    BoundCheckArgs bound;
    auto *bound_cmd = app.add_subcommand(
        "bound-check", "Verify the eviction-loss bound on randomized instances");
    bound_cmd->add_option("--trials", bound.trials, "Trial count")->default_val(1000);
    bound_cmd->add_option("--max-n", bound.max_n, "Maximum token count")->default_val(32);
    bound_cmd->add_option("--max-d", bound.max_d, "Maximum head dimension")->default_val(16);
    bound_cmd->add_option("--seed", bound.seed, "RNG seed")->default_val(0);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (gen_cmd->parsed()) {
            gen.kind = synthetic_kind_from_string(gen_kind);
            gen.dtype = dtype_from_string(gen_dtype);
            return cmd_gen(gen, std::cout, std::cerr);
        }
        if (compress_cmd->parsed()) {
            compress.cfg = compress_flags.to_config();
            compress.policy = policy_from_string(compress_flags.policy);
            compress.chunk_len = compress_flags.chunk_len;
            return cmd_compress(compress, std::cout, std::cerr);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(eval_config, eval_out, std::cout, std::cerr);
        }
        if (sweep_cmd->parsed()) {
            return cmd_sweep(sweep_config, sweep_out, std::cout, std::cerr);
        }
        if (bound_cmd->parsed()) {
            return cmd_boundcheck(bound, std::cout, std::cerr);
        }
    } catch (const ValidationError &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitValidation;
}
