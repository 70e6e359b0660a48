#include "curdkv/run_config.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

#include "curdkv/rng.hpp"
#include "curdkv/tensor_io.hpp"

namespace curdkv {

namespace {

using nlohmann::json;

void require_keys(const json &obj, const std::string &where,
                  const std::set<std::string> &allowed) {
    for (const auto &[key, value] : obj.items()) {
        if (!allowed.contains(key)) {
            throw ValidationError("config: unknown key \"" + key + "\" in " + where);
        }
    }
}

template <typename T>
T get_or(const json &obj, const std::string &key, T fallback) {
    if (!obj.contains(key)) {
        return fallback;
    }
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception &e) {
        throw ValidationError("config: bad value for \"" + key + "\": " + e.what());
    }
}

template <typename T>
T get_required(const json &obj, const std::string &key, const std::string &where) {
    if (!obj.contains(key)) {
        throw ValidationError("config: missing required key \"" + key + "\" in " + where);
    }
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception &e) {
        throw ValidationError("config: bad value for \"" + key + "\": " + e.what());
    }
}

CacheSpec parse_cache(const json &obj) {
    CacheSpec spec;
    if (obj.contains("keys") || obj.contains("values")) {
        require_keys(obj, "cache", {"keys", "values"});
        spec.synthetic = false;
        spec.keys_path = get_required<std::string>(obj, "keys", "cache");
        spec.values_path = get_required<std::string>(obj, "values", "cache");
        return spec;
    }
    require_keys(obj, "cache", {"kind", "g", "n", "d", "seed", "params"});
    spec.synthetic = true;
    spec.kind = synthetic_kind_from_string(get_required<std::string>(obj, "kind", "cache"));
    spec.g = get_or<std::size_t>(obj, "g", 1);
    spec.n = get_required<std::size_t>(obj, "n", "cache");
    spec.d = get_required<std::size_t>(obj, "d", "cache");
    spec.seed = get_or<std::uint64_t>(obj, "seed", 0);
    if (obj.contains("params")) {
        const json &p = obj.at("params");
        require_keys(p, "cache.params",
                     {"heavy_fraction", "heavy_scale", "sink_count", "sink_scale"});
        spec.params.heavy_fraction = get_or<double>(p, "heavy_fraction", 0.1);
        spec.params.heavy_scale = get_or<double>(p, "heavy_scale", 10.0);
        spec.params.sink_count = get_or<std::size_t>(p, "sink_count", 4);
        spec.params.sink_scale = get_or<double>(p, "sink_scale", 10.0);
    }
    return spec;
}

QuerySpec parse_queries(const json &obj) {
    QuerySpec spec;
    require_keys(obj, "queries", {"source", "rows", "paths"});
    const auto source = get_or<std::string>(obj, "source", "gaussian");
    if (source == "gaussian") {
        spec.source = QuerySpec::Source::gaussian;
        spec.rows = get_or<std::size_t>(obj, "rows", 8);
        if (spec.rows == 0) {
            throw ValidationError("config: queries.rows must be at least 1");
        }
    } else if (source == "file") {
        spec.source = QuerySpec::Source::file;
        spec.paths = get_required<std::vector<std::string>>(obj, "paths", "queries");
        if (spec.paths.empty()) {
            throw ValidationError("config: queries.paths must not be empty");
        }
    } else {
        throw ValidationError("config: queries.source must be \"gaussian\" or \"file\"");
    }
    return spec;
}

} // namespace

RunConfig parse_run_config(const std::string &json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception &e) {
        throw ValidationError(std::string("config: invalid JSON: ") + e.what());
    }
    require_keys(root, "config root",
                 {"cache", "policies", "methods", "ratios", "seeds", "sketch_dim", "sinks",
                  "alpha", "chunk_len", "obs_window", "knorm_keep_low", "adaptive_raw_scores",
                  "queries", "bytes_per_element", "out"});

    RunConfig cfg;
    if (!root.contains("cache")) {
        throw ValidationError("config: missing required key \"cache\"");
    }
    cfg.cache = parse_cache(root.at("cache"));

    for (const auto &name : get_required<std::vector<std::string>>(root, "policies", "root")) {
        cfg.sweep.policies.push_back(policy_from_string(name));
    }
    for (const auto &name : get_required<std::vector<std::string>>(root, "methods", "root")) {
        cfg.sweep.methods.push_back(method_from_string(name));
    }
    cfg.sweep.ratios = get_required<std::vector<double>>(root, "ratios", "root");
    cfg.sweep.seeds = get_required<std::vector<std::uint64_t>>(root, "seeds", "root");
    if (cfg.sweep.policies.empty() || cfg.sweep.methods.empty() || cfg.sweep.ratios.empty() ||
        cfg.sweep.seeds.empty()) {
        throw ValidationError("config: policies, methods, ratios and seeds must be non-empty");
    }

    cfg.sweep.sketch_dim = get_or<std::size_t>(root, "sketch_dim", 20);
    cfg.sweep.sinks = get_or<std::size_t>(root, "sinks", 4);
    cfg.sweep.alpha = get_or<double>(root, "alpha", 0.20);
    cfg.sweep.chunk_len = get_or<std::size_t>(root, "chunk_len", 32);
    cfg.sweep.obs_window = get_or<std::size_t>(root, "obs_window", 8);
    cfg.sweep.knorm_keep_low = get_or<bool>(root, "knorm_keep_low", true);
    cfg.sweep.adaptive_raw_scores = get_or<bool>(root, "adaptive_raw_scores", false);
    cfg.sweep.bytes_per_element = get_or<std::size_t>(root, "bytes_per_element", 8);

    if (root.contains("queries")) {
        cfg.queries = parse_queries(root.at("queries"));
    }
    cfg.sweep.query_rows = cfg.queries.rows;
    cfg.out_prefix = get_or<std::string>(root, "out", "");
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("config: cannot open " + path.string());
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

CacheProvider make_cache_provider(const CacheSpec &spec) {
    if (spec.synthetic) {
        return [spec](std::uint64_t seed) {
            return generate_synthetic(spec.kind, spec.g, spec.n, spec.d,
                                      derive_seed(spec.seed, seed), spec.params)
                .cache;
        };
    }
    // file-backed caches are fixed across trials
    const KVCache cache =
        cache_from_tensors(read_tensor(spec.keys_path), read_tensor(spec.values_path));
    return [cache](std::uint64_t) { return cache; };
}

QueryProvider make_query_provider(const QuerySpec &spec) {
    if (spec.source == QuerySpec::Source::gaussian) {
        return gaussian_query_provider(spec.rows);
    }
    std::vector<Matrix> loaded;
    for (const std::string &path : spec.paths) {
        const TensorData t = read_tensor(path);
        if (t.dims.size() != 2) {
            throw ValidationError("queries: " + path + " must be a rank-2 tensor");
        }
        loaded.emplace_back(t.dims[0], t.dims[1], t.values);
    }
    return [loaded](const KVCache &cache, std::uint64_t) {
        if (loaded.size() != cache.groups()) {
            throw ValidationError("queries: " + std::to_string(loaded.size()) +
                                  " query files for " + std::to_string(cache.groups()) +
                                  " groups");
        }
        for (const Matrix &q : loaded) {
            if (q.cols() != cache.dim()) {
                throw ShapeError("queries: width " + std::to_string(q.cols()) +
                                 " does not match cache dim " + std::to_string(cache.dim()));
            }
        }
        return loaded;
    };
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

std::string sweep_to_csv(const SweepResult &result) {
    std::string csv = "policy,method,ratio,seed,group,eviction_loss,qk_loss,bound_lhs,bound_rhs,"
                      "cache_bytes_full,cache_bytes_compressed,eviction_loss_rel,qk_loss_rel\n";
    for (const EvalReport &r : result.reports) {
        for (std::size_t g = 0; g < r.eviction_loss.size(); ++g) {
            csv += r.policy;
            csv += ',';
            csv += r.method;
            csv += ',';
            csv += fmt_double(r.ratio);
            csv += ',';
            csv += std::to_string(r.seed);
            csv += ',';
            csv += std::to_string(g);
            csv += ',';
            csv += fmt_double(r.eviction_loss[g]);
            csv += ',';
            csv += fmt_double(r.qk_loss[g]);
            csv += ',';
            csv += fmt_double(r.bound_lhs[g]);
            csv += ',';
            csv += fmt_double(r.bound_rhs[g]);
            csv += ',';
            csv += std::to_string(r.cache_bytes_full);
            csv += ',';
            csv += std::to_string(r.cache_bytes_compressed);
            csv += ',';
            csv += fmt_double(r.eviction_loss_rel[g]);
            csv += ',';
            csv += fmt_double(r.qk_loss_rel[g]);
            csv += '\n';
        }
    }
    return csv;
}

std::string sweep_to_json(const SweepResult &result) {
    json arr = json::array();
    for (const EvalReport &r : result.reports) {
        for (std::size_t g = 0; g < r.eviction_loss.size(); ++g) {
            json rec;
            rec["policy"] = r.policy;
            rec["method"] = r.method;
            rec["ratio"] = r.ratio;
            rec["seed"] = r.seed;
            rec["group"] = g;
            rec["eviction_loss"] = r.eviction_loss[g];
            rec["qk_loss"] = r.qk_loss[g];
            rec["bound_lhs"] = r.bound_lhs[g];
            rec["bound_rhs"] = r.bound_rhs[g];
            rec["cache_bytes_full"] = r.cache_bytes_full;
            rec["cache_bytes_compressed"] = r.cache_bytes_compressed;
            rec["eviction_loss_rel"] = r.eviction_loss_rel[g];
            rec["qk_loss_rel"] = r.qk_loss_rel[g];
            arr.push_back(std::move(rec));
        }
    }
    for (const CellError &e : result.errors) {
        json rec;
        rec["policy"] = e.policy;
        rec["method"] = e.method;
        rec["ratio"] = e.ratio;
        rec["seed"] = e.seed;
        rec["error"] = e.message;
        arr.push_back(std::move(rec));
    }
    return arr.dump(2) + "\n";
}

} // namespace curdkv
