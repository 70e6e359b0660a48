#include "curdkv/commands.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "curdkv/eval.hpp"
#include "curdkv/rng.hpp"

namespace curdkv {

namespace {

using nlohmann::json;

void write_text_file(const std::filesystem::path &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        throw IoError("short write to " + path.string());
    }
}

int classify(const std::exception &e, std::ostream &err) {
    err << "error: " << e.what() << "\n";
    if (dynamic_cast<const ValidationError *>(&e) != nullptr ||
        dynamic_cast<const ShapeError *>(&e) != nullptr ||
        dynamic_cast<const IoError *>(&e) != nullptr) {
        return kExitValidation;
    }
    return kExitRuntime;
}

} // namespace

int cmd_gen(const GenArgs &args, std::ostream &out, std::ostream &err) {
    try {
        if (args.out_prefix.empty()) {
            throw ValidationError("gen: --out is required");
        }
        const SyntheticCache generated =
            generate_synthetic(args.kind, args.g, args.n, args.d, args.seed, args.params);

        const std::string keys_path = args.out_prefix + ".keys.ckv";
        const std::string values_path = args.out_prefix + ".values.ckv";
        write_tensor(keys_path, cache_half_to_tensor(generated.cache.keys, args.dtype));
        write_tensor(values_path, cache_half_to_tensor(generated.cache.values, args.dtype));

        json manifest;
        manifest["format"] = "CKV1";
        manifest["kind"] = to_string(args.kind);
        manifest["g"] = args.g;
        manifest["n"] = args.n;
        manifest["d"] = args.d;
        manifest["seed"] = args.seed;
        manifest["dtype"] = to_string(args.dtype);
        manifest["params"] = {{"heavy_fraction", args.params.heavy_fraction},
                              {"heavy_scale", args.params.heavy_scale},
                              {"sink_count", args.params.sink_count},
                              {"sink_scale", args.params.sink_scale}};
        if (args.kind == SyntheticKind::planted_heavy) {
            manifest["planted_indices"] = generated.planted_rows;
        }
        manifest["files"] = {{"keys", keys_path}, {"values", values_path}};
        write_text_file(args.out_prefix + ".manifest.json", manifest.dump(2) + "\n");

        out << "wrote " << keys_path << ", " << values_path << ", " << args.out_prefix
            << ".manifest.json\n";
        return kExitOk;
    } catch (const std::exception &e) {
        return classify(e, err);
    }
}

int cmd_compress(const CompressArgs &args, std::ostream &out, std::ostream &err) {
    try {
        if (args.out_prefix.empty()) {
            throw ValidationError("compress: --out is required");
        }
        const TensorData keys_tensor = read_tensor(args.keys_path);
        const TensorData values_tensor = read_tensor(args.values_path);
        const KVCache cache = cache_from_tensors(keys_tensor, values_tensor);

        const SelectionResult sel =
            select_with_policy(args.policy, cache, args.cfg, args.chunk_len);
        const CompressedCache comp = apply_selection(cache, sel);

        // compressed output keeps the input dtype. Adaptive grants can be
        // ragged across groups; those serialize as one (total, d) tensor with
        // the per-group splits recorded in the selection JSON.
        auto to_tensor = [&](const std::vector<Matrix> &half, Dtype dtype) {
            if (comp.uniform()) {
                return cache_half_to_tensor(half, dtype);
            }
            TensorData t;
            t.dtype = dtype;
            t.dims = {comp.total_tokens(), comp.dim()};
            for (const Matrix &m : half) {
                t.values.insert(t.values.end(), m.data().begin(), m.data().end());
            }
            return t;
        };
        write_tensor(args.out_prefix + ".keys.ckv", to_tensor(comp.keys, keys_tensor.dtype));
        write_tensor(args.out_prefix + ".values.ckv",
                     to_tensor(comp.values, values_tensor.dtype));

        json sel_json;
        sel_json["policy"] = sel.policy;
        sel_json["method"] = to_string(args.cfg.method);
        sel_json["requested_k"] = sel.requested_k;
        sel_json["seed"] = args.cfg.seed;
        sel_json["sinks"] = args.cfg.sinks;
        sel_json["sketch_dim"] = args.cfg.sketch_dim;
        if (args.cfg.compression_ratio) {
            sel_json["compression_ratio"] = *args.cfg.compression_ratio;
        }
        if (args.cfg.budget_k) {
            sel_json["budget_k"] = *args.cfg.budget_k;
        }
        if (args.policy == Policy::adacurdkv) {
            sel_json["alpha"] = args.cfg.safeguard_alpha;
        }
        if (args.policy == Policy::chunked) {
            sel_json["chunk_len"] = args.chunk_len;
        }
        json groups = json::array();
        for (const GroupSelection &g : sel.groups) {
            groups.push_back({{"retained", g.retained},
                              {"sinks", g.sinks},
                              {"granted", g.granted}});
        }
        sel_json["groups"] = std::move(groups);
        write_text_file(args.out_prefix + ".selection.json", sel_json.dump(2) + "\n");

        out << "retained " << sel.groups.front().granted << " of " << cache.tokens()
            << " tokens per group (" << cache.groups() << " groups)\n";
        return kExitOk;
    } catch (const std::exception &e) {
        return classify(e, err);
    }
}

namespace {

int run_configured_sweep(const std::string &config_path, const std::string &out_override,
                         bool require_single_cell, std::ostream &out, std::ostream &err) {
    RunConfig cfg;
    try {
        cfg = load_run_config(config_path);
        if (!out_override.empty()) {
            cfg.out_prefix = out_override;
        }
        if (cfg.out_prefix.empty()) {
            throw ValidationError("eval/sweep: no output prefix (set \"out\" or pass --out)");
        }
        if (require_single_cell) {
            const std::size_t cells = cfg.sweep.policies.size() * cfg.sweep.methods.size() *
                                      cfg.sweep.ratios.size() * cfg.sweep.seeds.size();
            if (cells != 1) {
                throw ValidationError("eval: grid has " + std::to_string(cells) +
                                      " cells; use the sweep command for grids");
            }
        }
    } catch (const std::exception &e) {
        return classify(e, err);
    }

    try {
        const SweepResult result = run_sweep(make_cache_provider(cfg.cache),
                                             make_query_provider(cfg.queries), cfg.sweep);
        write_text_file(cfg.out_prefix + ".csv", sweep_to_csv(result));
        write_text_file(cfg.out_prefix + ".json", sweep_to_json(result));

        std::size_t rows = 0;
        for (const EvalReport &r : result.reports) {
            rows += r.eviction_loss.size();
        }
        out << "wrote " << rows << " report rows to " << cfg.out_prefix << ".csv / .json\n";
        for (const CellError &e : result.errors) {
            err << "cell error: policy=" << e.policy << " method=" << e.method
                << " ratio=" << e.ratio << " seed=" << e.seed << ": " << e.message << "\n";
        }
        if (!result.errors.empty()) {
            return kExitRuntime;
        }
        if (!result.all_bounds_hold()) {
            err << "error: eviction bound violated in at least one report row\n";
            return kExitRuntime;
        }
        return kExitOk;
    } catch (const std::exception &e) {
        return classify(e, err);
    }
}

} // namespace

int cmd_sweep(const std::string &config_path, const std::string &out_override, std::ostream &out,
              std::ostream &err) {
    return run_configured_sweep(config_path, out_override, false, out, err);
}

int cmd_eval(const std::string &config_path, const std::string &out_override, std::ostream &out,
             std::ostream &err) {
    return run_configured_sweep(config_path, out_override, true, out, err);
}

int cmd_boundcheck(const BoundCheckArgs &args, std::ostream &out, std::ostream &err) {
    try {
        if (args.trials == 0) {
            throw ValidationError("bound-check: trials must be at least 1");
        }
        if (args.max_n == 0 || args.max_d == 0) {
            throw ValidationError("bound-check: max-n and max-d must be at least 1");
        }
        SplitMix64 rng(args.seed);
        std::size_t violations = 0;
        double worst_ratio = 0.0;
        for (std::size_t t = 0; t < args.trials; ++t) {
            const std::size_t n = 1 + rng.next_u64() % args.max_n;
            const std::size_t d = 1 + rng.next_u64() % args.max_d;

            GaussianStream g(derive_seed(args.seed, t));
            auto draw = [&](std::size_t r, std::size_t c) {
                Matrix m(r, c);
                for (double &v : m.data()) {
                    v = g.next();
                }
                return m;
            };
            // the bound's sqrt(n) factor is the operator norm of an n x n
            // row-stochastic matrix, so queries match the token count
            const Matrix q = draw(n, d);
            const Matrix k = draw(n, d);
            const Matrix v = draw(n, d);

            std::vector<std::size_t> evicted;
            for (std::size_t i = 0; i < n; ++i) {
                if (rng.next_u64() % 2 == 0) {
                    evicted.push_back(i);
                }
            }
            const BoundRecord rec = lemma1_check(q, k, v, evicted);
            if (!rec.holds) {
                ++violations;
            }
            if (rec.rhs > 0.0) {
                worst_ratio = std::max(worst_ratio, rec.lhs / rec.rhs);
            }
        }
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%.6f", worst_ratio);
        out << "bound-check: " << args.trials << " trials, " << violations << " violations, "
            << "max lhs/rhs ratio " << buf << "\n";
        if (violations > 0) {
            err << "error: eviction bound violated in " << violations << " trials\n";
            return kExitRuntime;
        }
        return kExitOk;
    } catch (const std::exception &e) {
        return classify(e, err);
    }
}

} // namespace curdkv
