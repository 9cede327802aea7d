#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "weedout/data.hpp"
#include "weedout/numerics.hpp"

namespace weedout {

enum class LayerKind { dense, conv2d, relu, flatten };

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::size_t units = 0;   // dense width or conv output channels
    std::size_t kernel = 0;  // conv only, square
    std::size_t stride = 1;  // conv only
    bool maskable = false;

    static LayerSpec dense(std::size_t units, bool maskable = true);
    static LayerSpec conv2d(std::size_t channels, std::size_t kernel, std::size_t stride = 1, bool maskable = true);
    static LayerSpec relu();
    static LayerSpec flatten();

    bool has_params() const noexcept { return kind == LayerKind::dense || kind == LayerKind::conv2d; }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Layer stack plus the per-sample input shape. Conv layers read HWC input
/// and use valid padding; dense layers need a rank-1 input, so feature maps
/// must pass through an explicit flatten. The last layer produces the logits.
struct NetworkSpec {
    Shape input;
    std::vector<LayerSpec> layers;

    /// Throws SpecError describing the first inconsistency.
    void validate() const;

    /// Per-sample output shape of every layer.
    std::vector<Shape> output_shapes() const;
    Shape input_shape_of(std::size_t layer) const;
    std::size_t num_classes() const;

    std::size_t fan_in(std::size_t layer) const;
    Shape weight_shape(std::size_t layer) const;
    std::size_t parameter_count() const;
    std::vector<std::size_t> maskable_layers() const;

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// conv(16,3x3) → relu → conv(32,3x3) → relu → flatten → dense(128) → relu → dense(classes).
NetworkSpec default_architecture(Shape input, std::size_t num_classes);

/// Weights and bias of one layer. Dense weights are [in, out]; conv weights
/// are [k, k, in_channels, out_channels]. Layers without parameters hold
/// default (scalar) tensors.
struct LayerParams {
    Tensor weights;
    Tensor bias;

    friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

using Gradients = std::vector<LayerParams>;

struct Network {
    NetworkSpec spec;
    std::vector<LayerParams> params;
    std::uint64_t init_seed = 0;

    /// FNV-1a over the spec and the raw parameter bits.
    std::uint64_t checksum() const;
};

enum class MaskMode { structured, unstructured };

std::string_view to_string(MaskMode mode);
MaskMode mask_mode_from_string(std::string_view name);

/// Binary masks for one sparse sub-network. `layers[i]` is engaged only for
/// maskable layers: a node (or channel) vector of length `units` in
/// structured mode, a weight-shaped tensor in unstructured mode.
struct MaskSet {
    MaskMode mode = MaskMode::structured;
    double eta = 0.0;
    std::uint64_t sample_seed = 0;
    std::vector<std::optional<Tensor>> layers;

    /// Every maskable position active.
    static MaskSet ones(const NetworkSpec& spec, MaskMode mode = MaskMode::structured);

    friend bool operator==(const MaskSet&, const MaskSet&) = default;
};

/// Throws MaskMismatch unless `mask` has the layout `spec` expects.
void check_congruent(const MaskSet& mask, const NetworkSpec& spec);

/// Biases are zero; weights come from he_normal with the layer's fan-in and
/// a per-layer child stream of `seed`.
Network init_network(const NetworkSpec& spec, std::uint64_t seed);

/// Logits [n, classes] for a batch [n, ...input]. Structured masks multiply
/// each maskable layer's activation output; unstructured masks multiply its
/// weights. The logits layer is never masked.
Tensor forward(const Network& net, const MaskSet& mask, const Tensor& batch);

struct LossGrads {
    double loss = 0.0;
    Tensor logits;
    Gradients grads;
};

LossGrads loss_and_grads(const Network& net, const MaskSet& mask, const Tensor& batch, std::span<const int> labels);

/// Momentum buffer for sgd_step; starts empty (zero velocity).
struct SgdState {
    Gradients velocity;
};

/// velocity ← momentum·velocity + grads; params ← params − lr·velocity.
void sgd_step(Network& net, const Gradients& grads, double lr, double momentum, SgdState& state);

struct Metrics {
    double accuracy = 0.0;
    double mean_loss = 0.0;

    friend bool operator==(const Metrics&, const Metrics&) = default;
};

Metrics evaluate(const Network& net, const MaskSet& mask, const Dataset& dataset, std::size_t chunk = 500);

/// Index of the largest logit per row; ties go to the lowest class.
std::vector<int> argmax_rows(const Tensor& logits);

/// Self-describing binary checkpoint (magic "WDCK"): spec, init seed, flat
/// parameter arrays, and optionally a mask. Round trips are bit-exact. On
/// load the stored mask arrays are checked against a resample from
/// (spec, eta, mode, sample_seed).
void save_checkpoint(const std::filesystem::path& path, const Network& net, const MaskSet* mask = nullptr);

struct Checkpoint {
    Network net;
    std::optional<MaskSet> mask;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace weedout
