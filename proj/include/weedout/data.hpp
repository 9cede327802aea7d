#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "weedout/numerics.hpp"

namespace weedout {

/// Labelled examples. `inputs` has shape [n, ...sample shape]; the sample
/// shape is interpreted by the network (image data is stored HWC).
struct Dataset {
    Tensor inputs;
    std::vector<int> labels;
    int num_classes = 0;
    std::string provenance;

    std::size_t size() const noexcept { return labels.size(); }
    Shape sample_shape() const;
    std::size_t sample_size() const;

    /// Throws InvalidArgument if the invariants (n >= 1, labels in range,
    /// finite inputs, matching leading extent) do not hold.
    void validate() const;

    Dataset subset(std::span<const std::size_t> indices) const;
    std::vector<std::size_t> class_counts() const;
};

struct Batch {
    Tensor inputs;
    std::vector<int> labels;
};

Batch gather(const Dataset& ds, std::span<const std::size_t> indices);

// --- ingestion -------------------------------------------------------------

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// MNIST-style IDX pair. Pixels are scaled to [0,1]; shape [n, rows, cols, 1].
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
Dataset decode_idx(std::span<const std::uint8_t> image_bytes, std::span<const std::uint8_t> label_bytes);

std::vector<std::uint8_t> encode_idx_images(std::size_t rows, std::size_t cols, std::span<const std::uint8_t> pixels);
std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels);

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPixels = kCifarSide * kCifarSide * 3;
inline constexpr std::size_t kCifarRecord = 1 + kCifarPixels;

/// CIFAR-10 binary batches (1 label byte + 3072 channel-major pixel bytes per
/// record), decoded to [n, 32, 32, 3] HWC scaled to [0,1].
Dataset load_cifar10_binary(std::span<const std::filesystem::path> batch_files);
Dataset decode_cifar10(std::span<const std::uint8_t> bytes);

/// Inverse of the per-record decode: back to label byte + CHW pixel bytes.
/// Pixel values are rounded from [0,1] to the nearest byte.
std::vector<std::uint8_t> encode_cifar10_record(const Dataset& ds, std::size_t index);

/// Gaussian blobs: class c ~ Normal(e_c, spread² I), with the class means on
/// the vertices of the standard simplex in `dim` dimensions. Labels cycle
/// 0..k-1 so the set is balanced. Requires dim >= num_classes.
Dataset synthetic_blobs(int num_classes, std::size_t per_class, std::size_t dim, double spread, std::uint64_t seed);

/// Versioned binary container (magic "WDDS", version, shape, class count).
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// --- splitting and batching ------------------------------------------------

struct SplitSpec {
    // Either fractions (summing to 1) or counts (summing to n).
    std::optional<std::array<double, 3>> fractions;
    std::optional<std::array<std::size_t, 3>> counts;
    std::uint64_t seed = 0;
};

struct Splits {
    Dataset train;
    Dataset validation;
    Dataset test;
    // Source indices of each part, in the order they appear in the part.
    std::array<std::vector<std::size_t>, 3> indices;
};

Splits split(const Dataset& ds, const SplitSpec& spec);

/// Shuffled partition into consecutive parts of the given sizes, which must
/// be positive and sum to n.
std::vector<Dataset> partition(const Dataset& ds, std::span<const std::size_t> counts, std::uint64_t seed);

/// `count` examples drawn without replacement, in shuffled order.
Dataset take(const Dataset& ds, std::size_t count, std::uint64_t seed);

/// Shuffled epoch plan: every index in [0, n) exactly once.
std::vector<std::vector<std::size_t>> epoch_plan(std::size_t n, std::size_t batch_size, RngStream& rng,
                                                 bool drop_last);

std::vector<Batch> batches(const Dataset& ds, std::size_t batch_size, RngStream& rng, bool drop_last);

/// Uniform sample of `batch_size` distinct examples (clamped to n).
Batch sample_batch(const Dataset& ds, std::size_t batch_size, RngStream& rng);

/// First `count` entries of a uniform random permutation of [0, n).
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count, RngStream& rng);

}  // namespace weedout
