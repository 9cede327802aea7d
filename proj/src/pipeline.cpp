#include "weedout/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "bytes.hpp"
#include "json.hpp"
#include "weedout/csv.hpp"
#include "weedout/errors.hpp"
#include "weedout/sparsity.hpp"

namespace weedout {

using ojson = nlohmann::ordered_json;

std::string_view to_string(Arm arm) {
    switch (arm) {
        case Arm::weedout: return "weedout";
        case Arm::random_baseline: return "random_baseline";
        case Arm::dense: return "dense";
    }
    return "?";
}

Arm arm_from_string(std::string_view name) {
    if (name == "weedout") return Arm::weedout;
    if (name == "random_baseline") return Arm::random_baseline;
    if (name == "dense") return Arm::dense;
    throw InvalidArgument("unknown arm '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw InvalidArgument("epochs must be at least 1");
    if (batch_size < 1) throw InvalidArgument("batch size must be at least 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidArgument("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must be in [0, 1)");
    if (eval_every < 1) throw InvalidArgument("eval_every must be at least 1");
}

const EpochRow& RunRecord::final_row() const {
    if (rows.empty()) throw InvalidArgument("run " + run_id + " has no epochs");
    return rows.back();
}

std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

MaskSummary summarize(const MaskSet& m) {
    return {m.mode, m.eta, m.sample_seed, realized_sparsity(m), realized_sparsity_per_layer(m)};
}

// Streams for one run. Everything except the parent (optionally) and the
// arm-specific mask stream is shared across arms of the same seed, so the
// mask is the only difference between arms.
struct RunStreams {
    RngStream root;
    explicit RunStreams(std::uint64_t seed) : root(seed) {}
    RngStream search() const { return root.split("search"); }
    RngStream baseline_mask() const { return root.split("baseline-mask"); }
    RngStream train() const { return root.split("train"); }
};

std::string run_label(Arm arm, double eta, std::uint64_t seed) {
    return std::string(to_string(arm)) + "_" + csv::format_double(eta) + "_" + std::to_string(seed);
}

RunRecord train_masked(const NetworkSpec& spec, Arm arm, const MaskSet& mask, const TrainConfig& train_cfg,
                       const Splits& splits, std::uint64_t seed, const RunOptions& opts, RunRecord rec) {
    Network net = init_network(spec, parent_seed(seed, arm, opts.independent_parents));
    rec.parent_checksum = net.checksum();
    rec.active_parameters = active_parameter_count(spec, mask);
    rec.mask = summarize(mask);
    rec.rows = train_and_evaluate(net, mask, train_cfg, splits, RunStreams(seed).train(), rec.times);
    return rec;
}

}  // namespace

std::uint64_t parent_seed(std::uint64_t seed, Arm arm, bool independent_parents) {
    const RngStream root(seed);
    return independent_parents ? root.split("parent").split(to_string(arm)).seed() : root.split("parent").seed();
}

std::vector<EpochRow> train_and_evaluate(Network& net, const MaskSet& mask, const TrainConfig& cfg,
                                         const Splits& splits, const RngStream& rng, PhaseTimes& times) {
    cfg.validate();
    splits.train.validate();
    splits.test.validate();
    std::vector<EpochRow> rows;
    SgdState state;
    const std::size_t n = splits.train.size();
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = Clock::now();
        RngStream epoch_rng = rng.split(epoch);
        const auto plan = epoch_plan(n, cfg.batch_size, epoch_rng, false);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t b = 0; b < plan.size(); ++b) {
            const Batch batch = gather(splits.train, plan[b]);
            LossGrads lg;
            try {
                lg = loss_and_grads(net, mask, batch.inputs, batch.labels);
            } catch (const NumericError& e) {
                throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(b + 1) + ": " + e.what());
            }
            loss_sum += lg.loss * static_cast<double>(batch.labels.size());
            const auto pred = argmax_rows(lg.logits);
            for (std::size_t k = 0; k < pred.size(); ++k) correct += pred[k] == batch.labels[k];
            sgd_step(net, lg.grads, cfg.lr, cfg.momentum, state);
        }
        times.training_s += seconds_since(t0);

        EpochRow row{epoch, static_cast<double>(correct) / static_cast<double>(n),
                     loss_sum / static_cast<double>(n), std::nan(""), std::nan("")};
        if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
            const auto t1 = Clock::now();
            const Metrics m = evaluate(net, mask, splits.test);
            row.test_accuracy = m.accuracy;
            row.test_loss = m.mean_loss;
            times.evaluation_s += seconds_since(t1);
        }
        rows.push_back(row);
    }
    return rows;
}

RunRecord weedout_run(const NetworkSpec& spec, const SearchConfig& search_cfg, const TrainConfig& train_cfg,
                      const Splits& splits, std::uint64_t seed, const RunOptions& opts) {
    search_cfg.validate();
    RunRecord rec;
    rec.run_id = run_label(Arm::weedout, search_cfg.eta.value(), seed);
    rec.arm = Arm::weedout;
    rec.eta = search_cfg.eta.value();
    rec.seed = seed;

    // The search scores masks on the untrained parent; training starts from
    // a fresh copy of the same parent.
    const Network parent = init_network(spec, parent_seed(seed, Arm::weedout, opts.independent_parents));
    const auto t0 = Clock::now();
    SearchResult found = run_search(parent, search_cfg, splits.validation, RunStreams(seed).search(), opts.threads);
    rec.times.weedout_s = seconds_since(t0);
    rec.search_history = std::move(found.history);
    rec.winner_id = found.best.id;
    rec.fitness_evaluations = found.evaluations;
    rec.generations_run = found.generations_run;
    return train_masked(spec, Arm::weedout, found.best.mask, train_cfg, splits, seed, opts, std::move(rec));
}

RunRecord baseline_run(const NetworkSpec& spec, SparsityRatio eta, MaskMode mode, const TrainConfig& train_cfg,
                       const Splits& splits, std::uint64_t seed, const RunOptions& opts) {
    RunRecord rec;
    rec.run_id = run_label(Arm::random_baseline, eta.value(), seed);
    rec.arm = Arm::random_baseline;
    rec.eta = eta.value();
    rec.seed = seed;
    const MaskSet mask = sample_mask(spec, eta, mode, RunStreams(seed).baseline_mask().seed());
    return train_masked(spec, Arm::random_baseline, mask, train_cfg, splits, seed, opts, std::move(rec));
}

RunRecord dense_run(const NetworkSpec& spec, const TrainConfig& train_cfg, const Splits& splits, std::uint64_t seed,
                    const RunOptions& opts) {
    RunRecord rec;
    rec.run_id = run_label(Arm::dense, 0.0, seed);
    rec.arm = Arm::dense;
    rec.seed = seed;
    return train_masked(spec, Arm::dense, MaskSet::ones(spec), train_cfg, splits, seed, opts, std::move(rec));
}

std::string metrics_csv(const RunRecord& rec) {
    std::string out(kMetricsHeader);
    out += '\n';
    for (const EpochRow& r : rec.rows) {
        out += std::to_string(r.epoch) + ',' + csv::format_double(r.train_accuracy) + ',' +
               csv::format_double(r.train_loss) + ',' + csv::format_double(r.test_accuracy) + ',' +
               csv::format_double(r.test_loss) + '\n';
    }
    return out;
}

std::vector<EpochRow> parse_metrics_csv(std::string_view text) {
    std::vector<EpochRow> rows;
    for (const auto& f : csv::parse(text, kMetricsHeader)) {
        rows.push_back({std::stoull(f[0]), csv::parse_double(f[1]), csv::parse_double(f[2]), csv::parse_double(f[3]),
                        csv::parse_double(f[4])});
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].epoch != i + 1) throw InvalidArgument("metrics epochs are not contiguous from 1");
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kMetrics = "metrics.csv";
constexpr const char* kSearch = "search.csv";

std::string read_text(const std::filesystem::path& p) {
    auto b = bytes::read_file(p);
    return {b.begin(), b.end()};
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    bytes::write_file(p, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::uint64_t text_checksum(const std::string& s) {
    return fnv1a64(std::string_view(s));
}

std::string manifest_checksum(ojson manifest) {
    manifest.erase("checksum");
    return hex64(text_checksum(manifest.dump(2)));
}

}  // namespace

void save_run(const RunRecord& rec, const std::filesystem::path& dir, const std::string& config_json) {
    std::filesystem::create_directories(dir);
    const std::string metrics = metrics_csv(rec);
    write_text(dir / kMetrics, metrics);
    ojson files = ojson::object();
    files[kMetrics] = hex64(text_checksum(metrics));
    if (rec.arm == Arm::weedout) {
        const std::string search = history_csv(rec.search_history);
        write_text(dir / kSearch, search);
        files[kSearch] = hex64(text_checksum(search));
    }

    ojson m;
    m["format"] = "weedout-run";
    m["version"] = 1;
    m["run_id"] = rec.run_id;
    m["arm"] = std::string(to_string(rec.arm));
    m["eta"] = rec.eta;
    m["seed"] = rec.seed;
    m["config"] = config_json.empty() ? ojson::object() : ojson::parse(config_json);
    m["parent_checksum"] = hex64(rec.parent_checksum);
    m["mask"] = {{"mode", std::string(to_string(rec.mask.mode))},
                 {"eta", rec.mask.eta},
                 {"sample_seed", rec.mask.sample_seed},
                 {"realized_sparsity", rec.mask.realized},
                 {"per_layer", rec.mask.per_layer}};
    m["active_parameters"] = rec.active_parameters;
    m["fitness_evaluations"] = rec.fitness_evaluations;
    m["generations_run"] = rec.generations_run;
    m["winner_id"] = rec.winner_id ? ojson(*rec.winner_id) : ojson(nullptr);
    m["wall_clock_s"] = {{"weedout", rec.times.weedout_s},
                         {"training", rec.times.training_s},
                         {"evaluation", rec.times.evaluation_s},
                         {"total", rec.times.total_s()}};
    m["files"] = files;
    m["checksum"] = manifest_checksum(m);

    // The manifest marks the cell complete, so it is written last and
    // atomically.
    const auto tmp = dir / (std::string(kManifest) + ".tmp");
    write_text(tmp, m.dump(2) + "\n");
    std::filesystem::rename(tmp, dir / kManifest);
}

namespace {

ojson load_manifest(const std::filesystem::path& dir) {
    const auto path = dir / kManifest;
    if (!std::filesystem::exists(path)) throw ChecksumError("no manifest in " + dir.string());
    ojson m;
    try {
        m = ojson::parse(read_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw ChecksumError("corrupt manifest " + path.string() + ": " + e.what());
    }
    if (!m.is_object() || !m.contains("checksum") || !m["checksum"].is_string() ||
        m["checksum"].get<std::string>() != manifest_checksum(m)) {
        throw ChecksumError("manifest checksum mismatch in " + path.string());
    }
    return m;
}

}  // namespace

RunRecord load_run(const std::filesystem::path& dir) {
    const ojson m = load_manifest(dir);
    try {
        RunRecord rec;
        rec.run_id = m.at("run_id").get<std::string>();
        rec.arm = arm_from_string(m.at("arm").get<std::string>());
        rec.eta = m.at("eta").get<double>();
        rec.seed = m.at("seed").get<std::uint64_t>();
        for (const auto& [name, sum] : m.at("files").items()) {
            const std::string text = read_text(dir / name);
            if (hex64(text_checksum(text)) != sum.get<std::string>()) {
                throw ChecksumError(name + " in " + dir.string() + " does not match its manifest checksum");
            }
            if (name == kMetrics) rec.rows = parse_metrics_csv(text);
            if (name == kSearch) rec.search_history = parse_history_csv(text);
        }
        std::uint64_t parent = 0;
        std::istringstream(m.at("parent_checksum").get<std::string>()) >> std::hex >> parent;
        rec.parent_checksum = parent;
        const auto& mask = m.at("mask");
        rec.mask.mode = mask_mode_from_string(mask.at("mode").get<std::string>());
        rec.mask.eta = mask.at("eta").get<double>();
        rec.mask.sample_seed = mask.at("sample_seed").get<std::uint64_t>();
        rec.mask.realized = mask.at("realized_sparsity").get<double>();
        rec.mask.per_layer = mask.at("per_layer").get<std::vector<double>>();
        rec.active_parameters = m.at("active_parameters").get<std::size_t>();
        rec.fitness_evaluations = m.at("fitness_evaluations").get<std::size_t>();
        rec.generations_run = m.at("generations_run").get<std::size_t>();
        if (!m.at("winner_id").is_null()) rec.winner_id = m.at("winner_id").get<std::uint64_t>();
        const auto& wc = m.at("wall_clock_s");
        rec.times = {wc.at("weedout").get<double>(), wc.at("training").get<double>(),
                     wc.at("evaluation").get<double>()};
        return rec;
    } catch (const nlohmann::json::exception& e) {
        throw ChecksumError("malformed manifest in " + dir.string() + ": " + e.what());
    }
}

std::string load_run_config(const std::filesystem::path& dir) {
    return load_manifest(dir).at("config").dump(2);
}

bool is_completed_run(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir / kManifest)) return false;
    try {
        load_run(dir);
        return true;
    } catch (const Error&) {
        return false;
    }
}

// ---------------------------------------------------------------------------
// Sweeps

std::string SweepCell::label() const {
    return run_label(arm, eta, seed);
}

std::vector<SweepCell> sweep_cells(const SweepPlan& plan) {
    if (plan.etas.empty() || plan.arms.empty() || plan.seeds.empty()) {
        throw InvalidArgument("sweep needs at least one eta, arm and seed");
    }
    std::vector<SweepCell> cells;
    for (Arm arm : plan.arms) {
        if (arm == Arm::dense) {
            for (std::uint64_t s : plan.seeds) cells.push_back({arm, 0.0, s});
            continue;
        }
        for (double eta : plan.etas) {
            for (std::uint64_t s : plan.seeds) cells.push_back({arm, eta, s});
        }
    }
    return cells;
}

RunRecord run_cell(const SweepPlan& plan, const SweepCell& cell, const Splits& splits, const RunOptions& opts) {
    switch (cell.arm) {
        case Arm::weedout: {
            SearchConfig cfg = plan.search;
            cfg.eta = SparsityRatio(cell.eta);
            return weedout_run(plan.spec, cfg, plan.train, splits, cell.seed, opts);
        }
        case Arm::random_baseline:
            return baseline_run(plan.spec, SparsityRatio(cell.eta), plan.search.mode, plan.train, splits, cell.seed,
                                opts);
        case Arm::dense: return dense_run(plan.spec, plan.train, splits, cell.seed, opts);
    }
    throw InvalidArgument("unknown arm");
}

std::vector<RunRecord> sweep(const SweepPlan& plan, const Splits& splits, const SweepOptions& opts) {
    plan.spec.validate();
    plan.train.validate();
    const auto cells = sweep_cells(plan);
    std::filesystem::create_directories(opts.dir);
    const RunOptions run_opts{opts.threads, plan.independent_parents};

    std::vector<RunRecord> records(cells.size());
    std::atomic<std::size_t> next{0};
    std::mutex report_mu;
    auto work = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            const SweepCell& cell = cells[i];
            const auto dir = opts.dir / cell.label();
            bool resumed = false;
            if (opts.resume && is_completed_run(dir)) {
                records[i] = load_run(dir);
                resumed = true;
            } else {
                try {
                    records[i] = run_cell(plan, cell, splits, run_opts);
                    save_run(records[i], dir, opts.config_json);
                    std::filesystem::remove(dir / "error.txt");
                } catch (const std::exception& e) {
                    RunRecord failed;
                    failed.run_id = cell.label();
                    failed.arm = cell.arm;
                    failed.eta = cell.eta;
                    failed.seed = cell.seed;
                    failed.ok = false;
                    failed.error = e.what();
                    std::filesystem::create_directories(dir);
                    write_text(dir / "error.txt", failed.error + "\n");
                    records[i] = std::move(failed);
                }
            }
            if (opts.on_cell) {
                std::lock_guard lock(report_mu);
                opts.on_cell(cell, records[i], resumed);
            }
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(opts.parallel_cells, 1, cells.size());
    if (workers == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    return records;
}

}  // namespace weedout
