#include "weedout/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>

#include "weedout/config.hpp"
#include "weedout/csv.hpp"
#include "weedout/report.hpp"

namespace weedout {

namespace {

constexpr const char* kSweepConfig = "config.json";

std::string read_all(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_all(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw Error("cannot write " + p.string());
}

std::string fixed(double v, int digits) {
    if (std::isnan(v)) return "-";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

std::filesystem::path resolve_sweep_dir(const std::filesystem::path& output_dir, const std::string& name,
                                        const std::optional<std::filesystem::path>& out) {
    if (out) return *out;
    const char* env = std::getenv("WEEDOUT_RUNS_DIR");
    const std::filesystem::path root = env && *env ? std::filesystem::path(env) : output_dir;
    return root / name;
}

int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err) {
    ExperimentConfig cfg;
    Splits splits;
    NetworkSpec spec;
    try {
        cfg = load_config(args.config);
        for (auto& s : cfg.seeds) s += args.seed_offset;
        splits = build_splits(cfg);
        spec = build_spec(cfg, splits);
        check_feasible(cfg, spec);
    } catch (const ConfigError& e) {
        err << "error: invalid config " << args.config.string() << "\n";
        for (const auto& d : e.diagnostics()) err << "  " << d << "\n";
        return kExitInvalid;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitInvalid;
    }
    if (args.parallel == 0) {
        err << "error: --parallel must be at least 1\n";
        return kExitInvalid;
    }

    const std::string config_json = effective_config_json(cfg);
    const auto dir = resolve_sweep_dir(cfg.output_dir, cfg.name, args.out);
    const auto config_path = dir / kSweepConfig;
    if (args.resume && std::filesystem::exists(config_path) && read_all(config_path) != config_json + "\n") {
        err << "error: " << dir.string()
            << " holds a sweep with a different config; choose another --out or pass --no-resume\n";
        return kExitInvalid;
    }
    std::filesystem::create_directories(dir);
    write_all(config_path, config_json + "\n");

    const auto cells = sweep_cells(make_plan(cfg, spec));
    out << "sweep " << cfg.name << ": " << cells.size() << " cells -> " << dir.string() << "\n"
        << "data: train " << splits.train.size() << ", validation " << splits.validation.size() << ", test "
        << splits.test.size() << "; parameters " << spec.parameter_count() << "\n";

    SweepOptions opts;
    opts.dir = dir;
    opts.threads = args.parallel;
    opts.resume = args.resume;
    opts.config_json = config_json;
    std::size_t done = 0, failed = 0, resumed_count = 0;
    opts.on_cell = [&](const SweepCell& cell, const RunRecord& rec, bool resumed) {
        ++done;
        out << "[" << done << "/" << cells.size() << "] " << cell.label() << ": ";
        if (!rec.ok) {
            ++failed;
            out << "FAILED: " << rec.error << "\n";
        } else {
            resumed_count += resumed ? 1 : 0;
            out << "test accuracy " << fixed(rec.final_row().test_accuracy, 4);
            if (resumed) {
                out << " (resumed)\n";
            } else {
                out << " (" << fixed(rec.times.total_s(), 1) << " s)\n";
            }
        }
        out.flush();
    };
    try {
        sweep(make_plan(cfg, spec), splits, opts);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitInvalid;
    }
    out << done - failed << " cells ok (" << resumed_count << " resumed), " << failed << " failed\n";
    return failed > 0 ? kExitCellFailure : kExitOk;
}

int cmd_report(const std::filesystem::path& dir, std::ostream& out, std::ostream& err) {
    LoadedSweep loaded;
    try {
        loaded = load_sweep(dir);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitInvalid;
    }
    for (const auto& s : loaded.skipped) err << "warning: skipped " << s << "\n";
    std::vector<RunRecord> ok;
    for (auto& r : loaded.runs) {
        if (r.ok) ok.push_back(std::move(r));
    }
    if (ok.empty()) {
        err << "error: no completed runs in " << dir.string() << "\n";
        return kExitInvalid;
    }

    const auto rows = aggregate(ok);
    const auto comparisons = compare_arms(ok);
    try {
        write_all(dir / "aggregate.csv", aggregate_csv(rows));
        write_all(dir / "plot.csv", plot_csv(rows));
        write_all(dir / "comparison.csv", comparison_csv(comparisons));
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitInvalid;
    }

    out << ok.size() << " runs\n\nfinal test accuracy (mean +/- 95% CI)\n";
    for (const AggregateRow& r : rows) {
        const bool last = &r == &rows.back() || (&r + 1)->arm != r.arm || (&r + 1)->eta != r.eta;
        if (!last) continue;
        out << "  " << to_string(r.arm) << " eta " << fixed(r.eta, 2) << ": " << fixed(r.test_accuracy.mean, 4)
            << " +/- " << fixed(r.test_accuracy.half_width, 4) << " (n=" << r.test_accuracy.n << ")\n";
    }

    if (!comparisons.empty()) {
        out << "\nweedout - random_baseline, final test accuracy (pooled 95% CI)\n" << comparison_table(comparisons);
        for (const ArmComparison& c : comparisons) {
            if (c.verdict == Verdict::weedout_advantage) {
                out << "note: at eta " << fixed(c.eta, 2) << " the searched mask beats the random mask by "
                    << fixed(c.difference, 4) << " (> " << fixed(c.half_width, 4)
                    << "); check the search and seeding before trusting this\n";
            }
        }
    }

    const auto violations = monotone_violations(ok);
    out << "\nmonotone degradation: " << (violations.empty() ? "holds" : "violated") << "\n";
    for (const auto& v : violations) {
        out << "  " << to_string(v.arm) << ": eta " << fixed(v.eta_low, 2) << " (" << fixed(v.low.mean, 4)
            << ") < eta " << fixed(v.eta_high, 2) << " (" << fixed(v.high.mean, 4) << ") beyond CI overlap\n";
    }
    out << "\nwrote aggregate.csv, plot.csv, comparison.csv in " << dir.string() << "\n";
    return kExitOk;
}

int cmd_inspect(const std::filesystem::path& dir, std::ostream& out, std::ostream& err) {
    RunRecord rec;
    std::string config;
    try {
        rec = load_run(dir);
        config = load_run_config(dir);
    } catch (const ChecksumError& e) {
        err << "checksum error: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitInvalid;
    }

    out << "run " << rec.run_id << "\n"
        << "  arm " << to_string(rec.arm) << ", eta " << csv::format_double(rec.eta) << ", seed " << rec.seed << "\n"
        << "  config digest " << hex64(fnv1a64(config)) << "\n"
        << "  parent checksum " << hex64(rec.parent_checksum) << "\n";

    if (rec.search_history.empty()) {
        out << "search: none\n";
    } else {
        out << "search: " << rec.generations_run << " generations, " << rec.fitness_evaluations
            << " fitness evaluations, winner candidate " << (rec.winner_id ? std::to_string(*rec.winner_id) : "-")
            << "\n";
        const auto best = best_fitness_per_generation(rec.search_history);
        for (std::size_t g = 0; g < best.size(); ++g) {
            out << "  generation " << g + 1 << ": best fitness " << fixed(best[g], 6) << "\n";
        }
    }

    if (!rec.rows.empty()) {
        const EpochRow& f = rec.final_row();
        out << "final (epoch " << f.epoch << "): test accuracy " << fixed(f.test_accuracy, 4) << ", test loss "
            << fixed(f.test_loss, 4) << ", train accuracy " << fixed(f.train_accuracy, 4) << ", train loss "
            << fixed(f.train_loss, 4) << "\n";
    }
    out << "mask: " << to_string(rec.mask.mode) << ", realized sparsity " << fixed(rec.mask.realized, 6)
        << ", active parameters " << rec.active_parameters << "\n";
    for (std::size_t i = 0; i < rec.mask.per_layer.size(); ++i) {
        if (rec.mask.per_layer[i] < 0.0) continue;
        out << "  layer " << i << ": " << fixed(rec.mask.per_layer[i], 6) << "\n";
    }
    out << "time: search " << fixed(rec.times.weedout_s, 2) << " s, training " << fixed(rec.times.training_s, 2)
        << " s, evaluation " << fixed(rec.times.evaluation_s, 2) << " s\n";
    return kExitOk;
}

}  // namespace weedout
