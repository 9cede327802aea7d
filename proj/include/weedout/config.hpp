#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "weedout/data.hpp"
#include "weedout/errors.hpp"
#include "weedout/network.hpp"
#include "weedout/pipeline.hpp"
#include "weedout/search.hpp"

namespace weedout {

inline constexpr int kConfigSchemaVersion = 1;

/// All field-level problems found while validating a config.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> diagnostics);
    const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

private:
    std::vector<std::string> diagnostics_;
};

enum class DatasetKind { blobs, idx, cifar10, file };

struct DatasetConfig {
    DatasetKind kind = DatasetKind::blobs;

    // blobs
    int num_classes = 10;
    std::size_t per_class = 300;
    std::size_t dim = 64;
    double spread = 0.5;
    std::uint64_t data_seed = 0;
    std::optional<Shape> image;  // reinterpret each blob as an HWC image

    // idx / cifar10 / file
    std::filesystem::path train_images, train_labels, test_images, test_labels;
    std::vector<std::filesystem::path> train_files, test_files;
    std::filesystem::path path;

    // Splits. For blobs and file: three-way split of the whole set, by
    // fractions or counts. For idx and cifar10: train/validation counts
    // drawn from the training files (test_count 0 means the whole test file).
    std::optional<std::array<double, 3>> fractions;
    std::optional<std::array<std::size_t, 3>> counts;
    std::size_t train_count = 5000;
    std::size_t validation_count = 1000;
    std::size_t test_count = 0;
    std::uint64_t split_seed = 0;
};

struct ExperimentConfig {
    std::string name = "sweep";
    DatasetConfig dataset;
    bool default_architecture = true;
    std::optional<Shape> input;  // overrides the dataset's sample shape
    std::vector<LayerSpec> layers;  // when not the default architecture
    SearchConfig search;
    std::vector<double> etas{0.0, 0.2, 0.4, 0.6, 0.8};
    TrainConfig train;
    std::vector<Arm> arms{Arm::weedout, Arm::random_baseline};
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    bool independent_parents = false;
    std::filesystem::path output_dir = "runs";
};

/// Parses and fully validates a config document. Unknown keys, wrong types
/// and out-of-range values are collected into one ConfigError.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical JSON of the effective config (all defaults filled in).
std::string effective_config_json(const ExperimentConfig& cfg);

/// Loads the dataset and produces train/validation/test.
Splits build_splits(const ExperimentConfig& cfg);

/// Network for the loaded data.
NetworkSpec build_spec(const ExperimentConfig& cfg, const Splits& splits);

/// Structured feasibility of every eta against the architecture; throws
/// ConfigError listing the offending etas.
void check_feasible(const ExperimentConfig& cfg, const NetworkSpec& spec);

SweepPlan make_plan(const ExperimentConfig& cfg, const NetworkSpec& spec);

}  // namespace weedout
