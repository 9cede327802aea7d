#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "weedout/data.hpp"
#include "weedout/network.hpp"
#include "weedout/search.hpp"

namespace weedout {

enum class Arm { weedout, random_baseline, dense };

std::string_view to_string(Arm arm);
Arm arm_from_string(std::string_view name);

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 128;
    double lr = 0.05;
    double momentum = 0.9;
    std::size_t eval_every = 1;

    void validate() const;
};

struct EpochRow {
    std::size_t epoch = 0;
    double train_accuracy = 0.0;  // running over the epoch's minibatches
    double train_loss = 0.0;
    double test_accuracy = 0.0;   // NaN on epochs without a test evaluation
    double test_loss = 0.0;

    friend bool operator==(const EpochRow&, const EpochRow&) = default;
};

struct PhaseTimes {
    double weedout_s = 0.0;
    double training_s = 0.0;
    double evaluation_s = 0.0;
    double total_s() const noexcept { return weedout_s + training_s + evaluation_s; }
};

/// Summary of the trained mask, enough to rebuild it with sample_mask.
struct MaskSummary {
    MaskMode mode = MaskMode::structured;
    double eta = 0.0;
    std::uint64_t sample_seed = 0;
    double realized = 0.0;
    std::vector<double> per_layer;  // -1 for unmasked layers
};

struct RunRecord {
    std::string run_id;
    Arm arm = Arm::weedout;
    double eta = 0.0;
    std::uint64_t seed = 0;
    std::vector<EpochRow> rows;
    std::vector<HistoryRow> search_history;  // empty unless arm == weedout
    std::optional<std::uint64_t> winner_id;
    std::size_t fitness_evaluations = 0;
    std::size_t generations_run = 0;
    MaskSummary mask;
    std::uint64_t parent_checksum = 0;
    std::size_t active_parameters = 0;
    PhaseTimes times;
    bool ok = true;
    std::string error;

    const EpochRow& final_row() const;
};

struct RunOptions {
    std::size_t threads = 1;           // fitness evaluation workers
    bool independent_parents = false;  // draw the parent per arm instead of per seed
};

/// Parent initialization seed for a run. Shared by all arms of a seed unless
/// independent parents are requested.
std::uint64_t parent_seed(std::uint64_t seed, Arm arm, bool independent_parents);

/// Search phase, then SGD on the winner, evaluated on the test split.
RunRecord weedout_run(const NetworkSpec& spec, const SearchConfig& search_cfg, const TrainConfig& train_cfg,
                      const Splits& splits, std::uint64_t seed, const RunOptions& opts = {});

/// Control arm: one randomly drawn mask at the same sparsity, no search.
RunRecord baseline_run(const NetworkSpec& spec, SparsityRatio eta, MaskMode mode, const TrainConfig& train_cfg,
                       const Splits& splits, std::uint64_t seed, const RunOptions& opts = {});

/// Unmasked parent, trained identically.
RunRecord dense_run(const NetworkSpec& spec, const TrainConfig& train_cfg, const Splits& splits, std::uint64_t seed,
                    const RunOptions& opts = {});

/// SGD on (net, mask) with the per-seed shuffling stream. Returns one row per
/// epoch; test metrics every `eval_every` epochs and at the last epoch.
std::vector<EpochRow> train_and_evaluate(Network& net, const MaskSet& mask, const TrainConfig& cfg,
                                         const Splits& splits, const RngStream& rng, PhaseTimes& times);

inline constexpr std::string_view kMetricsHeader = "epoch,train_accuracy,train_loss,test_accuracy,test_loss";

std::string metrics_csv(const RunRecord& rec);
std::vector<EpochRow> parse_metrics_csv(std::string_view text);

// --- sweeps ----------------------------------------------------------------

struct SweepPlan {
    NetworkSpec spec;
    std::vector<double> etas;
    std::vector<Arm> arms;
    std::vector<std::uint64_t> seeds;
    SearchConfig search;  // eta is overridden per cell
    TrainConfig train;
    bool independent_parents = false;
};

struct SweepCell {
    Arm arm;
    double eta;
    std::uint64_t seed;
    std::string label() const;  // <arm>_<eta>_<seed>
};

/// Full factorial arm × eta × seed. The dense arm runs once per seed at eta 0.
std::vector<SweepCell> sweep_cells(const SweepPlan& plan);

struct SweepOptions {
    std::filesystem::path dir;  // cells land in dir/<label>/
    std::size_t threads = 1;    // fitness workers per cell
    std::size_t parallel_cells = 1;
    bool resume = true;
    std::string config_json;    // effective config, embedded in every manifest
    std::function<void(const SweepCell&, const RunRecord&, bool resumed)> on_cell;
};

/// Runs (or resumes) every cell. Completed cells are loaded instead of
/// recomputed; a failing cell is recorded with ok == false and the sweep
/// continues.
std::vector<RunRecord> sweep(const SweepPlan& plan, const Splits& splits, const SweepOptions& opts);

RunRecord run_cell(const SweepPlan& plan, const SweepCell& cell, const Splits& splits, const RunOptions& opts);

/// Writes metrics.csv, search.csv and finally manifest.json into `dir`.
void save_run(const RunRecord& rec, const std::filesystem::path& dir, const std::string& config_json);

/// Loads a completed run, verifying the manifest and file checksums.
/// Throws ChecksumError on any mismatch.
RunRecord load_run(const std::filesystem::path& dir);

/// The effective config stored in a run's manifest.
std::string load_run_config(const std::filesystem::path& dir);

bool is_completed_run(const std::filesystem::path& dir);

std::string hex64(std::uint64_t v);

}  // namespace weedout
