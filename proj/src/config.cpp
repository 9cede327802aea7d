#include "weedout/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "weedout/sparsity.hpp"

namespace weedout {

using ojson = nlohmann::ordered_json;

namespace {

std::string join(const std::vector<std::string>& lines) {
    std::string out = "invalid config:";
    for (const auto& l : lines) out += "\n  " + l;
    return out;
}

std::string_view to_string(DatasetKind k) {
    switch (k) {
        case DatasetKind::blobs: return "blobs";
        case DatasetKind::idx: return "idx";
        case DatasetKind::cifar10: return "cifar10";
        case DatasetKind::file: return "file";
    }
    return "?";
}

// Walks a JSON document, recording every problem with its dotted path
// instead of stopping at the first.
class Fields {
public:
    std::vector<std::string> errors;

    void fail(const std::string& path, const std::string& msg) { errors.push_back(path + ": " + msg); }

    bool object(const ojson& v, const std::string& path) {
        if (v.is_object()) return true;
        fail(path, "expected an object");
        return false;
    }

    void allow(const ojson& obj, const std::string& path, std::initializer_list<std::string_view> keys) {
        for (const auto& [k, _] : obj.items()) {
            if (std::find(keys.begin(), keys.end(), k) == keys.end()) fail(dotted(path, k), "unknown key");
        }
    }

    static std::string dotted(const std::string& path, std::string_view key) {
        return path.empty() ? std::string(key) : path + "." + std::string(key);
    }

    template <class T>
    void count(const ojson& obj, const std::string& path, const char* key, T& out, std::uint64_t min = 0) {
        if (!obj.contains(key)) return;
        const ojson& v = obj[key];
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
            fail(dotted(path, key), "expected a non-negative integer");
            return;
        }
        const auto x = v.get<std::uint64_t>();
        if (x < min) {
            fail(dotted(path, key), "must be at least " + std::to_string(min));
            return;
        }
        out = static_cast<T>(x);
    }

    void real(const ojson& obj, const std::string& path, const char* key, double& out) {
        if (!obj.contains(key)) return;
        if (!obj[key].is_number()) {
            fail(dotted(path, key), "expected a number");
            return;
        }
        out = obj[key].get<double>();
    }

    void boolean(const ojson& obj, const std::string& path, const char* key, bool& out) {
        if (!obj.contains(key)) return;
        if (!obj[key].is_boolean()) {
            fail(dotted(path, key), "expected true or false");
            return;
        }
        out = obj[key].get<bool>();
    }

    bool string(const ojson& obj, const std::string& path, const char* key, std::string& out) {
        if (!obj.contains(key)) return false;
        if (!obj[key].is_string()) {
            fail(dotted(path, key), "expected a string");
            return false;
        }
        out = obj[key].get<std::string>();
        return true;
    }

    void shape(const ojson& obj, const std::string& path, const char* key, std::optional<Shape>& out) {
        if (!obj.contains(key)) return;
        const ojson& v = obj[key];
        Shape s;
        bool good = v.is_array() && !v.empty();
        if (good) {
            for (const auto& d : v) {
                if (!d.is_number_unsigned() || d.get<std::uint64_t>() == 0) {
                    good = false;
                    break;
                }
                s.push_back(d.get<std::size_t>());
            }
        }
        if (!good) {
            fail(dotted(path, key), "expected a non-empty array of positive integers");
            return;
        }
        out = std::move(s);
    }

    template <class E, class F>
    void enumeration(const ojson& obj, const std::string& path, const char* key, E& out, F parse) {
        std::string name;
        if (!string(obj, path, key, name)) return;
        try {
            out = parse(name);
        } catch (const NotImplemented& e) {
            fail(dotted(path, key), e.what());
        } catch (const Error&) {
            fail(dotted(path, key), "unknown value '" + name + "'");
        }
    }
};

void parse_dataset(Fields& f, const ojson& d, DatasetConfig& out) {
    const std::string path = "dataset";
    if (!f.object(d, path)) return;
    std::string kind = "blobs";
    f.string(d, path, "kind", kind);
    if (kind == "blobs") {
        out.kind = DatasetKind::blobs;
        f.allow(d, path, {"kind", "num_classes", "per_class", "dim", "spread", "seed", "image", "split", "split_seed"});
        f.count(d, path, "num_classes", out.num_classes, 2);
        f.count(d, path, "per_class", out.per_class, 1);
        f.count(d, path, "dim", out.dim, 1);
        f.real(d, path, "spread", out.spread);
        f.count(d, path, "seed", out.data_seed);
        f.shape(d, path, "image", out.image);
        if (!(out.spread >= 0.0) || !std::isfinite(out.spread)) f.fail(path + ".spread", "must be non-negative");
        if (out.dim < static_cast<std::size_t>(out.num_classes)) f.fail(path + ".dim", "must be at least num_classes");
        if (out.image && shape_size(*out.image) != out.dim) f.fail(path + ".image", "must have dim entries");
    } else if (kind == "file") {
        out.kind = DatasetKind::file;
        f.allow(d, path, {"kind", "path", "split", "split_seed"});
        std::string p;
        if (!f.string(d, path, "path", p)) f.fail(path + ".path", "required");
        out.path = p;
    } else if (kind == "idx") {
        out.kind = DatasetKind::idx;
        f.allow(d, path, {"kind", "train_images", "train_labels", "test_images", "test_labels", "train_count",
                          "validation_count", "test_count", "split_seed"});
        for (auto [key, dst] : {std::pair{"train_images", &out.train_images}, {"train_labels", &out.train_labels},
                                {"test_images", &out.test_images}, {"test_labels", &out.test_labels}}) {
            std::string p;
            if (!f.string(d, path, key, p)) f.fail(Fields::dotted(path, key), "required");
            *dst = p;
        }
    } else if (kind == "cifar10") {
        out.kind = DatasetKind::cifar10;
        f.allow(d, path, {"kind", "train_files", "test_files", "train_count", "validation_count", "test_count",
                          "split_seed"});
        for (auto [key, dst] : {std::pair{"train_files", &out.train_files}, {"test_files", &out.test_files}}) {
            if (!d.contains(key) || !d[key].is_array() || d[key].empty() ||
                !std::all_of(d[key].begin(), d[key].end(), [](const ojson& v) { return v.is_string(); })) {
                f.fail(Fields::dotted(path, key), "expected a non-empty array of paths");
                continue;
            }
            for (const auto& v : d[key]) dst->emplace_back(v.get<std::string>());
        }
    } else {
        f.fail(path + ".kind", "unknown dataset kind '" + kind + "'");
        return;
    }
    f.count(d, path, "split_seed", out.split_seed);

    if (out.kind == DatasetKind::blobs || out.kind == DatasetKind::file) {
        if (!d.contains("split")) {
            out.fractions = std::array<double, 3>{0.8, 0.1, 0.1};
            return;
        }
        const ojson& s = d["split"];
        const std::string sp = path + ".split";
        if (!f.object(s, sp)) return;
        f.allow(s, sp, {"fractions", "counts"});
        if (s.contains("fractions") == s.contains("counts")) {
            f.fail(sp, "give exactly one of fractions or counts");
            return;
        }
        const char* key = s.contains("fractions") ? "fractions" : "counts";
        const ojson& v = s[key];
        if (!v.is_array() || v.size() != 3) {
            f.fail(Fields::dotted(sp, key), "expected three entries (train, validation, test)");
            return;
        }
        if (s.contains("fractions")) {
            std::array<double, 3> fr{};
            for (std::size_t i = 0; i < 3; ++i) {
                if (!v[i].is_number() || v[i].get<double>() <= 0.0) {
                    f.fail(sp + ".fractions", "entries must be positive numbers");
                    return;
                }
                fr[i] = v[i].get<double>();
            }
            if (std::abs(fr[0] + fr[1] + fr[2] - 1.0) > 1e-9) f.fail(sp + ".fractions", "must sum to 1");
            out.fractions = fr;
        } else {
            std::array<std::size_t, 3> c{};
            for (std::size_t i = 0; i < 3; ++i) {
                if (!v[i].is_number_unsigned() || v[i].get<std::uint64_t>() == 0) {
                    f.fail(sp + ".counts", "entries must be positive integers");
                    return;
                }
                c[i] = v[i].get<std::size_t>();
            }
            out.counts = c;
        }
        if (out.kind == DatasetKind::blobs && out.counts) {
            const std::size_t n = out.per_class * static_cast<std::size_t>(out.num_classes);
            if ((*out.counts)[0] + (*out.counts)[1] + (*out.counts)[2] != n) {
                f.fail(sp + ".counts", "must sum to num_classes * per_class = " + std::to_string(n));
            }
        }
    } else {
        f.count(d, path, "train_count", out.train_count, 1);
        f.count(d, path, "validation_count", out.validation_count, 1);
        f.count(d, path, "test_count", out.test_count);
    }
}

void parse_layers(Fields& f, const ojson& arr, const std::string& path, std::vector<LayerSpec>& out) {
    if (!arr.is_array() || arr.empty()) {
        f.fail(path, "expected a non-empty array of layers");
        return;
    }
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string lp = path + "[" + std::to_string(i) + "]";
        const ojson& l = arr[i];
        if (!f.object(l, lp)) continue;
        std::string kind;
        if (!f.string(l, lp, "kind", kind)) {
            f.fail(lp + ".kind", "required");
            continue;
        }
        LayerSpec spec;
        if (kind == "dense") {
            f.allow(l, lp, {"kind", "units", "maskable"});
            spec = LayerSpec::dense(0);
            f.count(l, lp, "units", spec.units, 1);
            if (!l.contains("units")) f.fail(lp + ".units", "required");
            f.boolean(l, lp, "maskable", spec.maskable);
        } else if (kind == "conv2d") {
            f.allow(l, lp, {"kind", "channels", "kernel", "stride", "maskable"});
            spec = LayerSpec::conv2d(0, 3);
            f.count(l, lp, "channels", spec.units, 1);
            if (!l.contains("channels")) f.fail(lp + ".channels", "required");
            f.count(l, lp, "kernel", spec.kernel, 1);
            f.count(l, lp, "stride", spec.stride, 1);
            f.boolean(l, lp, "maskable", spec.maskable);
        } else if (kind == "relu" || kind == "flatten") {
            f.allow(l, lp, {"kind"});
            spec = kind == "relu" ? LayerSpec::relu() : LayerSpec::flatten();
        } else {
            f.fail(lp + ".kind", "unknown layer kind '" + kind + "'");
            continue;
        }
        out.push_back(spec);
    }
}

ojson layers_json(const std::vector<LayerSpec>& layers) {
    ojson arr = ojson::array();
    for (const LayerSpec& l : layers) {
        ojson j;
        j["kind"] = std::string(to_string(l.kind));
        if (l.kind == LayerKind::dense) {
            j["units"] = l.units;
            j["maskable"] = l.maskable;
        } else if (l.kind == LayerKind::conv2d) {
            j["channels"] = l.units;
            j["kernel"] = l.kernel;
            j["stride"] = l.stride;
            j["maskable"] = l.maskable;
        }
        arr.push_back(j);
    }
    return arr;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> diagnostics)
    : Error(join(diagnostics)), diagnostics_(std::move(diagnostics)) {}

ExperimentConfig parse_config(const std::string& text) {
    ojson doc;
    try {
        doc = ojson::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError({std::string("config is not valid JSON: ") + e.what()});
    }
    Fields f;
    ExperimentConfig cfg;
    if (!doc.is_object()) throw ConfigError({"config: expected a JSON object"});
    f.allow(doc, "", {"schema_version", "name", "dataset", "architecture", "search", "etas", "train", "arms", "seeds",
                      "independent_parents", "output_dir"});

    if (!doc.contains("schema_version")) {
        f.fail("schema_version", "required");
    } else if (!doc["schema_version"].is_number_integer() || doc["schema_version"].get<int>() != kConfigSchemaVersion) {
        f.fail("schema_version", "must be " + std::to_string(kConfigSchemaVersion));
    }
    if (f.string(doc, "", "name", cfg.name)) {
        if (cfg.name.empty() || cfg.name.find_first_of("/\\") != std::string::npos || cfg.name == "." ||
            cfg.name == "..") {
            f.fail("name", "must be a non-empty plain directory name");
        }
    }

    if (doc.contains("dataset")) parse_dataset(f, doc["dataset"], cfg.dataset);

    if (doc.contains("architecture")) {
        const ojson& a = doc["architecture"];
        if (f.object(a, "architecture")) {
            f.allow(a, "architecture", {"preset", "input", "layers"});
            f.shape(a, "architecture", "input", cfg.input);
            if (a.contains("preset") == a.contains("layers")) {
                f.fail("architecture", "give exactly one of preset or layers");
            } else if (a.contains("preset")) {
                std::string preset;
                f.string(a, "architecture", "preset", preset);
                if (preset != "default") f.fail("architecture.preset", "unknown preset '" + preset + "'");
            } else {
                cfg.default_architecture = false;
                parse_layers(f, a["layers"], "architecture.layers", cfg.layers);
            }
        }
    }

    if (doc.contains("search")) {
        const ojson& s = doc["search"];
        if (f.object(s, "search")) {
            f.allow(s, "search", {"population_size", "generations", "validation_batch_size", "strategy", "winner_scope",
                                  "mode", "budget", "convergence"});
            f.count(s, "search", "population_size", cfg.search.population_size, 2);
            f.count(s, "search", "generations", cfg.search.generations, 1);
            f.count(s, "search", "validation_batch_size", cfg.search.validation_batch_size, 1);
            f.enumeration(s, "search", "strategy", cfg.search.strategy, search_strategy_from_string);
            f.enumeration(s, "search", "winner_scope", cfg.search.winner_scope, winner_scope_from_string);
            f.enumeration(s, "search", "mode", cfg.search.mode, mask_mode_from_string);
            f.enumeration(s, "search", "budget", cfg.search.budget, sparsity_budget_from_string);
            if (cfg.search.budget != SparsityBudget::per_layer) {
                f.fail("search.budget", "'" + std::string(to_string(cfg.search.budget)) + "' is not implemented");
            }
            if (s.contains("convergence")) {
                const ojson& c = s["convergence"];
                if (f.object(c, "search.convergence")) {
                    f.allow(c, "search.convergence", {"enabled", "tolerance", "patience"});
                    f.boolean(c, "search.convergence", "enabled", cfg.search.convergence.enabled);
                    f.real(c, "search.convergence", "tolerance", cfg.search.convergence.tolerance);
                    f.count(c, "search.convergence", "patience", cfg.search.convergence.patience, 1);
                    if (!(cfg.search.convergence.tolerance >= 0.0)) {
                        f.fail("search.convergence.tolerance", "must be non-negative");
                    }
                }
            }
        }
    }

    if (doc.contains("etas")) {
        const ojson& e = doc["etas"];
        cfg.etas.clear();
        if (!e.is_array() || e.empty()) {
            f.fail("etas", "expected a non-empty array");
        } else {
            for (std::size_t i = 0; i < e.size(); ++i) {
                const std::string p = "etas[" + std::to_string(i) + "]";
                if (!e[i].is_number()) {
                    f.fail(p, "expected a number");
                    continue;
                }
                const double eta = e[i].get<double>();
                if (!(eta >= 0.0 && eta < 1.0)) {
                    f.fail(p, "sparsity ratio must lie in [0, 1)");
                    continue;
                }
                if (std::find(cfg.etas.begin(), cfg.etas.end(), eta) != cfg.etas.end()) f.fail(p, "duplicate");
                cfg.etas.push_back(eta);
            }
        }
    }

    if (doc.contains("train")) {
        const ojson& t = doc["train"];
        if (f.object(t, "train")) {
            f.allow(t, "train", {"epochs", "batch_size", "lr", "momentum", "eval_every"});
            f.count(t, "train", "epochs", cfg.train.epochs, 1);
            f.count(t, "train", "batch_size", cfg.train.batch_size, 1);
            f.real(t, "train", "lr", cfg.train.lr);
            f.real(t, "train", "momentum", cfg.train.momentum);
            f.count(t, "train", "eval_every", cfg.train.eval_every, 1);
            if (!(cfg.train.lr > 0.0)) f.fail("train.lr", "must be positive");
            if (!(cfg.train.momentum >= 0.0 && cfg.train.momentum < 1.0)) f.fail("train.momentum", "must be in [0, 1)");
        }
    }

    if (doc.contains("arms")) {
        const ojson& a = doc["arms"];
        cfg.arms.clear();
        if (!a.is_array() || a.empty()) {
            f.fail("arms", "expected a non-empty array");
        } else {
            for (std::size_t i = 0; i < a.size(); ++i) {
                const std::string p = "arms[" + std::to_string(i) + "]";
                try {
                    if (!a[i].is_string()) throw InvalidArgument("");
                    const Arm arm = arm_from_string(a[i].get<std::string>());
                    if (std::find(cfg.arms.begin(), cfg.arms.end(), arm) != cfg.arms.end()) f.fail(p, "duplicate");
                    cfg.arms.push_back(arm);
                } catch (const Error&) {
                    f.fail(p, "expected one of weedout, random_baseline, dense");
                }
            }
        }
    }

    if (doc.contains("seeds")) {
        const ojson& s = doc["seeds"];
        cfg.seeds.clear();
        if (!s.is_array() || s.empty()) {
            f.fail("seeds", "expected a non-empty array");
        } else {
            for (std::size_t i = 0; i < s.size(); ++i) {
                const std::string p = "seeds[" + std::to_string(i) + "]";
                if (!s[i].is_number_unsigned()) {
                    f.fail(p, "expected a non-negative integer");
                    continue;
                }
                const auto seed = s[i].get<std::uint64_t>();
                if (std::find(cfg.seeds.begin(), cfg.seeds.end(), seed) != cfg.seeds.end()) f.fail(p, "duplicate");
                cfg.seeds.push_back(seed);
            }
        }
    }

    f.boolean(doc, "", "independent_parents", cfg.independent_parents);
    std::string out_dir;
    if (f.string(doc, "", "output_dir", out_dir)) {
        if (out_dir.empty()) f.fail("output_dir", "must not be empty");
        cfg.output_dir = out_dir;
    }

    if (!f.errors.empty()) throw ConfigError(std::move(f.errors));
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"cannot read config file " + path.string()});
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string effective_config_json(const ExperimentConfig& cfg) {
    ojson j;
    j["schema_version"] = kConfigSchemaVersion;
    j["name"] = cfg.name;

    const DatasetConfig& d = cfg.dataset;
    ojson ds;
    ds["kind"] = std::string(to_string(d.kind));
    auto split_json = [&] {
        ojson s;
        if (d.counts) {
            s["counts"] = *d.counts;
        } else {
            s["fractions"] = d.fractions.value_or(std::array<double, 3>{0.8, 0.1, 0.1});
        }
        return s;
    };
    switch (d.kind) {
        case DatasetKind::blobs:
            ds["num_classes"] = d.num_classes;
            ds["per_class"] = d.per_class;
            ds["dim"] = d.dim;
            ds["spread"] = d.spread;
            ds["seed"] = d.data_seed;
            if (d.image) ds["image"] = *d.image;
            ds["split"] = split_json();
            break;
        case DatasetKind::file:
            ds["path"] = d.path.string();
            ds["split"] = split_json();
            break;
        case DatasetKind::idx:
            ds["train_images"] = d.train_images.string();
            ds["train_labels"] = d.train_labels.string();
            ds["test_images"] = d.test_images.string();
            ds["test_labels"] = d.test_labels.string();
            break;
        case DatasetKind::cifar10: {
            ojson tr = ojson::array(), te = ojson::array();
            for (const auto& p : d.train_files) tr.push_back(p.string());
            for (const auto& p : d.test_files) te.push_back(p.string());
            ds["train_files"] = tr;
            ds["test_files"] = te;
            break;
        }
    }
    if (d.kind == DatasetKind::idx || d.kind == DatasetKind::cifar10) {
        ds["train_count"] = d.train_count;
        ds["validation_count"] = d.validation_count;
        ds["test_count"] = d.test_count;
    }
    ds["split_seed"] = d.split_seed;
    j["dataset"] = ds;

    ojson arch;
    if (cfg.default_architecture) {
        arch["preset"] = "default";
    } else {
        arch["layers"] = layers_json(cfg.layers);
    }
    if (cfg.input) arch["input"] = *cfg.input;
    j["architecture"] = arch;

    const SearchConfig& s = cfg.search;
    j["search"] = {{"population_size", s.population_size},
                   {"generations", s.generations},
                   {"validation_batch_size", s.validation_batch_size},
                   {"strategy", std::string(to_string(s.strategy))},
                   {"winner_scope", std::string(to_string(s.winner_scope))},
                   {"mode", std::string(to_string(s.mode))},
                   {"budget", std::string(to_string(s.budget))},
                   {"convergence",
                    {{"enabled", s.convergence.enabled},
                     {"tolerance", s.convergence.tolerance},
                     {"patience", s.convergence.patience}}}};
    j["etas"] = cfg.etas;
    j["train"] = {{"epochs", cfg.train.epochs},
                  {"batch_size", cfg.train.batch_size},
                  {"lr", cfg.train.lr},
                  {"momentum", cfg.train.momentum},
                  {"eval_every", cfg.train.eval_every}};
    ojson arms = ojson::array();
    for (Arm a : cfg.arms) arms.push_back(std::string(to_string(a)));
    j["arms"] = arms;
    j["seeds"] = cfg.seeds;
    j["independent_parents"] = cfg.independent_parents;
    j["output_dir"] = cfg.output_dir.string();
    return j.dump(2);
}

namespace {

Splits from_separate_test(Dataset train_source, Dataset test_source, const DatasetConfig& d) {
    const int classes = std::max(train_source.num_classes, test_source.num_classes);
    train_source.num_classes = classes;
    test_source.num_classes = classes;
    const std::size_t wanted = d.train_count + d.validation_count;
    if (wanted > train_source.size()) {
        throw ConfigError({"dataset: train_count + validation_count = " + std::to_string(wanted) + " exceeds the " +
                           std::to_string(train_source.size()) + " training examples"});
    }
    if (d.test_count > test_source.size()) {
        throw ConfigError({"dataset.test_count: exceeds the " + std::to_string(test_source.size()) +
                           " test examples"});
    }
    const Dataset pool = take(train_source, wanted, d.split_seed);
    const std::array<std::size_t, 2> counts{d.train_count, d.validation_count};
    auto parts = partition(pool, counts, RngStream(d.split_seed).split("partition").seed());
    Splits out;
    out.train = std::move(parts[0]);
    out.validation = std::move(parts[1]);
    out.test = d.test_count > 0 ? take(test_source, d.test_count, RngStream(d.split_seed).split("test").seed())
                                : std::move(test_source);
    return out;
}

}  // namespace

Splits build_splits(const ExperimentConfig& cfg) {
    const DatasetConfig& d = cfg.dataset;
    try {
        switch (d.kind) {
            case DatasetKind::blobs:
            case DatasetKind::file: {
                Dataset ds = d.kind == DatasetKind::blobs
                                 ? synthetic_blobs(d.num_classes, d.per_class, d.dim, d.spread, d.data_seed)
                                 : load_dataset(d.path);
                if (d.kind == DatasetKind::blobs && d.image) {
                    Shape shape{ds.size()};
                    shape.insert(shape.end(), d.image->begin(), d.image->end());
                    ds.inputs = ds.inputs.reshaped(std::move(shape));
                }
                SplitSpec spec;
                spec.fractions = d.fractions;
                spec.counts = d.counts;
                if (!spec.fractions && !spec.counts) spec.fractions = std::array<double, 3>{0.8, 0.1, 0.1};
                spec.seed = d.split_seed;
                return split(ds, spec);
            }
            case DatasetKind::idx:
                return from_separate_test(load_idx(d.train_images, d.train_labels),
                                          load_idx(d.test_images, d.test_labels), d);
            case DatasetKind::cifar10:
                return from_separate_test(load_cifar10_binary(d.train_files), load_cifar10_binary(d.test_files), d);
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const InvalidArgument& e) {
        throw ConfigError({std::string("dataset: ") + e.what()});
    }
    throw ConfigError({"dataset: unsupported kind"});
}

NetworkSpec build_spec(const ExperimentConfig& cfg, const Splits& splits) {
    const Shape input = cfg.input.value_or(splits.train.sample_shape());
    const int classes =
        std::max({splits.train.num_classes, splits.validation.num_classes, splits.test.num_classes});
    if (shape_size(input) != splits.train.sample_size()) {
        throw ConfigError({"architecture.input: " + shape_string(input) + " does not match samples of shape " +
                           shape_string(splits.train.sample_shape())});
    }
    try {
        if (cfg.default_architecture) return default_architecture(input, static_cast<std::size_t>(classes));
        NetworkSpec spec{input, cfg.layers};
        spec.validate();
        if (spec.num_classes() != static_cast<std::size_t>(classes)) {
            throw ConfigError({"architecture.layers: logits layer has " + std::to_string(spec.num_classes()) +
                               " units but the data has " + std::to_string(classes) + " classes"});
        }
        return spec;
    } catch (const SpecError& e) {
        throw ConfigError({std::string("architecture: ") + e.what()});
    }
}

void check_feasible(const ExperimentConfig& cfg, const NetworkSpec& spec) {
    std::vector<std::string> errors;
    for (std::size_t i = 0; i < cfg.etas.size(); ++i) {
        try {
            sample_mask(spec, SparsityRatio(cfg.etas[i]), cfg.search.mode, 0);
        } catch (const InfeasibleSparsity& e) {
            errors.push_back("etas[" + std::to_string(i) + "]: " + e.what());
        }
    }
    if (!errors.empty()) throw ConfigError(std::move(errors));
}

SweepPlan make_plan(const ExperimentConfig& cfg, const NetworkSpec& spec) {
    return {spec, cfg.etas, cfg.arms, cfg.seeds, cfg.search, cfg.train, cfg.independent_parents};
}

}  // namespace weedout
