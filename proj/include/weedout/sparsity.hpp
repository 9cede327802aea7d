#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "weedout/network.hpp"

namespace weedout {

/// Fraction of inactive nodes (structured) or weights (unstructured) per
/// maskable layer. Always in [0, 1).
class SparsityRatio {
public:
    explicit SparsityRatio(double eta);
    double value() const noexcept { return eta_; }

    /// Zeros to place among `count` positions: round-half-up(eta * count).
    std::size_t zeros_for(std::size_t count) const noexcept;

    friend bool operator==(SparsityRatio, SparsityRatio) = default;

private:
    double eta_;
};

/// How a sparsity budget is distributed over layers. Only per-layer uniform
/// sparsity is implemented; the others raise NotImplemented.
enum class SparsityBudget { per_layer, global, non_uniform };

SparsityBudget sparsity_budget_from_string(std::string_view name);
std::string_view to_string(SparsityBudget budget);
void require_supported(SparsityBudget budget);

/// Exactly round(eta * units) zeros per maskable layer, placed uniformly
/// without replacement. Layer i draws from RngStream(sample_seed).split(i).
MaskSet sample_structured(const NetworkSpec& spec, SparsityRatio eta, std::uint64_t sample_seed);
MaskSet sample_structured(const NetworkSpec& spec, SparsityRatio eta, RngStream& rng);

/// Exactly round(eta * weight_count) zeros per maskable weight tensor.
MaskSet sample_unstructured(const NetworkSpec& spec, SparsityRatio eta, std::uint64_t sample_seed);
MaskSet sample_unstructured(const NetworkSpec& spec, SparsityRatio eta, RngStream& rng);

MaskSet sample_mask(const NetworkSpec& spec, SparsityRatio eta, MaskMode mode, std::uint64_t sample_seed);

/// Zeros over total across all maskable positions (0 if there are none).
double realized_sparsity(const MaskSet& mask);

/// Per-layer zero fraction; -1 for layers without a mask.
std::vector<double> realized_sparsity_per_layer(const MaskSet& mask);

/// Parameters that can still influence the output: for structured masks the
/// parameter count of the reduced network, for unstructured masks the total
/// minus masked weights.
std::size_t active_parameter_count(const NetworkSpec& spec, const MaskSet& mask);

/// Physically smaller network with masked nodes/channels deleted together
/// with their incident weights. Its logits match the masked parent.
Network reduce_network(const Network& net, const MaskSet& mask);

/// Same slicing applied to parent-shaped gradients, for comparing against
/// gradients of the reduced network.
Gradients reduce_gradients(const NetworkSpec& spec, const Gradients& grads, const MaskSet& mask);

NetworkSpec reduce_spec(const NetworkSpec& spec, const MaskSet& mask);

}  // namespace weedout
