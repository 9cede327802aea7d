#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "weedout/pipeline.hpp"

namespace weedout {

/// Two-sided 95% Student-t quantile, t(0.975, df).
double t_quantile_975(std::size_t df);

struct MeanCi {
    double mean = 0.0;
    double half_width = 0.0;  // NaN when n < 2
    std::size_t n = 0;
};

/// Mean and t-based 95% half-width of the finite values in `xs`.
MeanCi mean_ci(std::span<const double> xs);

struct AggregateRow {
    Arm arm = Arm::weedout;
    double eta = 0.0;
    std::size_t epoch = 0;
    std::size_t n_runs = 0;
    MeanCi test_accuracy, train_accuracy, test_loss, train_loss;
};

/// One row per (arm, eta, epoch), in arm, eta, epoch order. Failed runs are
/// ignored.
std::vector<AggregateRow> aggregate(std::span<const RunRecord> runs);

enum class Verdict { consistent, weedout_advantage, weedout_deficit, insufficient };
std::string_view to_string(Verdict v);

/// Final-epoch weedout minus baseline test accuracy at one eta.
struct ArmComparison {
    double eta = 0.0;
    MeanCi weedout, baseline;
    double difference = 0.0;
    double half_width = 0.0;  // pooled two-sample t interval
    Verdict verdict = Verdict::insufficient;
};

std::vector<ArmComparison> compare_arms(std::span<const RunRecord> runs);

/// Pairs (eta1 < eta2) of one arm where mean(eta1) + ci(eta1) < mean(eta2) - ci(eta2),
/// i.e. final test accuracy rose beyond interval overlap as sparsity increased.
struct MonotoneViolation {
    Arm arm;
    double eta_low, eta_high;
    MeanCi low, high;
};

std::vector<MonotoneViolation> monotone_violations(std::span<const RunRecord> runs);

struct LoadedSweep {
    std::vector<RunRecord> runs;
    std::vector<std::string> skipped;  // unreadable or incomplete cells
};

/// Every completed cell directly under `dir`, in directory-name order.
LoadedSweep load_sweep(const std::filesystem::path& dir);

inline constexpr std::string_view kAggregateHeader =
    "arm,eta,epoch,n_runs,mean_test_accuracy,ci_test_accuracy,mean_train_accuracy,ci_train_accuracy,"
    "mean_test_loss,ci_test_loss,mean_train_loss,ci_train_loss";
inline constexpr std::string_view kPlotHeader = "arm,eta,epoch,metric,mean,ci_half_width,n_runs";
inline constexpr std::string_view kComparisonHeader =
    "eta,n_weedout,n_baseline,mean_weedout,mean_baseline,difference,ci_half_width,verdict";

std::string aggregate_csv(std::span<const AggregateRow> rows);
std::string plot_csv(std::span<const AggregateRow> rows);
std::string comparison_csv(std::span<const ArmComparison> rows);

/// Fixed-width table for the terminal.
std::string comparison_table(std::span<const ArmComparison> rows);

}  // namespace weedout
