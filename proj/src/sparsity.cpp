#include "weedout/sparsity.hpp"

#include <cmath>

#include "weedout/errors.hpp"

namespace weedout {

SparsityRatio::SparsityRatio(double eta) : eta_(eta) {
    if (!(eta >= 0.0 && eta < 1.0)) {
        throw InvalidArgument("sparsity ratio must lie in [0, 1), got " + std::to_string(eta));
    }
}

std::size_t SparsityRatio::zeros_for(std::size_t count) const noexcept {
    // The slack absorbs representation error in products such as 0.7 * 5 so
    // that exact halves round up as documented.
    return static_cast<std::size_t>(std::floor(eta_ * static_cast<double>(count) + 0.5 + 1e-9));
}

SparsityBudget sparsity_budget_from_string(std::string_view name) {
    if (name == "per_layer") return SparsityBudget::per_layer;
    if (name == "global") return SparsityBudget::global;
    if (name == "non_uniform") return SparsityBudget::non_uniform;
    throw InvalidArgument("unknown sparsity budget '" + std::string(name) + "'");
}

std::string_view to_string(SparsityBudget budget) {
    switch (budget) {
        case SparsityBudget::per_layer: return "per_layer";
        case SparsityBudget::global: return "global";
        case SparsityBudget::non_uniform: return "non_uniform";
    }
    return "?";
}

void require_supported(SparsityBudget budget) {
    if (budget != SparsityBudget::per_layer) {
        throw NotImplemented("sparsity budget '" + std::string(to_string(budget)) + "' is not implemented");
    }
}

namespace {

Tensor exact_count_mask(Shape shape, SparsityRatio eta, std::size_t layer, RngStream rng) {
    Tensor m = Tensor::filled(std::move(shape), 1.0);
    const std::size_t count = m.size();
    const std::size_t zeros = eta.zeros_for(count);
    if (zeros >= count) {
        throw InfeasibleSparsity(layer, "sparsity " + std::to_string(eta.value()) + " would deactivate all " +
                                            std::to_string(count) + " positions of layer " + std::to_string(layer));
    }
    for (std::size_t k : sample_without_replacement(count, zeros, rng)) m[k] = 0.0;
    return m;
}

MaskSet sample_with(const NetworkSpec& spec, SparsityRatio eta, MaskMode mode, std::uint64_t sample_seed) {
    spec.validate();
    MaskSet m;
    m.mode = mode;
    m.eta = eta.value();
    m.sample_seed = sample_seed;
    m.layers.resize(spec.layers.size());
    const RngStream root(sample_seed);
    for (std::size_t i : spec.maskable_layers()) {
        Shape shape = mode == MaskMode::structured ? Shape{spec.layers[i].units} : spec.weight_shape(i);
        m.layers[i] = exact_count_mask(std::move(shape), eta, i, root.split(i));
    }
    return m;
}

}  // namespace

MaskSet sample_structured(const NetworkSpec& spec, SparsityRatio eta, std::uint64_t sample_seed) {
    return sample_with(spec, eta, MaskMode::structured, sample_seed);
}

MaskSet sample_structured(const NetworkSpec& spec, SparsityRatio eta, RngStream& rng) {
    return sample_structured(spec, eta, rng.next_u64());
}

MaskSet sample_unstructured(const NetworkSpec& spec, SparsityRatio eta, std::uint64_t sample_seed) {
    return sample_with(spec, eta, MaskMode::unstructured, sample_seed);
}

MaskSet sample_unstructured(const NetworkSpec& spec, SparsityRatio eta, RngStream& rng) {
    return sample_unstructured(spec, eta, rng.next_u64());
}

MaskSet sample_mask(const NetworkSpec& spec, SparsityRatio eta, MaskMode mode, std::uint64_t sample_seed) {
    return sample_with(spec, eta, mode, sample_seed);
}

double realized_sparsity(const MaskSet& mask) {
    std::size_t zeros = 0, total = 0;
    for (const auto& slot : mask.layers) {
        if (!slot) continue;
        total += slot->size();
        for (double v : slot->data()) zeros += v == 0.0;
    }
    return total == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(total);
}

std::vector<double> realized_sparsity_per_layer(const MaskSet& mask) {
    std::vector<double> out;
    for (const auto& slot : mask.layers) {
        if (!slot) {
            out.push_back(-1.0);
            continue;
        }
        std::size_t zeros = 0;
        for (double v : slot->data()) zeros += v == 0.0;
        out.push_back(static_cast<double>(zeros) / static_cast<double>(slot->size()));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Graph reduction

namespace {

std::vector<std::size_t> active_indices(const Tensor& mask) {
    std::vector<std::size_t> keep;
    for (std::size_t j = 0; j < mask.size(); ++j) {
        if (mask[j] != 0.0) keep.push_back(j);
    }
    return keep;
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t j = 0; j < n; ++j) v[j] = j;
    return v;
}

// Which units of each parametric layer survive, and which input features
// each parametric layer still reads.
struct ReductionPlan {
    NetworkSpec spec;
    std::vector<std::vector<std::size_t>> keep_out;
    std::vector<std::vector<std::size_t>> keep_in;
};

ReductionPlan plan_reduction(const NetworkSpec& spec, const MaskSet& mask) {
    if (mask.mode != MaskMode::structured) throw UnsupportedMode("graph reduction needs a structured mask");
    check_congruent(mask, spec);
    ReductionPlan plan{spec, std::vector<std::vector<std::size_t>>(spec.layers.size()),
                       std::vector<std::vector<std::size_t>>(spec.layers.size())};
    const auto shapes = spec.output_shapes();
    Shape cur = spec.input;
    // Kept indices along the last axis of the current activation.
    std::vector<std::size_t> kept = all_indices(cur.back());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        if (l.has_params()) {
            plan.keep_in[i] = kept;
            kept = mask.layers[i] ? active_indices(*mask.layers[i]) : all_indices(l.units);
            plan.keep_out[i] = kept;
            plan.spec.layers[i].units = kept.size();
        } else if (l.kind == LayerKind::flatten) {
            const std::size_t channels = cur.back();
            const std::size_t positions = shape_size(cur) / channels;
            std::vector<std::size_t> flat;
            flat.reserve(positions * kept.size());
            for (std::size_t p = 0; p < positions; ++p) {
                for (std::size_t c : kept) flat.push_back(p * channels + c);
            }
            kept = std::move(flat);
        }
        cur = shapes[i];
    }
    return plan;
}

LayerParams slice_layer(const LayerSpec& l, const Shape& weight_shape, const LayerParams& p,
                        const std::vector<std::size_t>& keep_in, const std::vector<std::size_t>& keep_out) {
    LayerParams out;
    std::vector<double> b;
    b.reserve(keep_out.size());
    for (std::size_t o : keep_out) b.push_back(p.bias[o]);
    out.bias = Tensor({keep_out.size()}, std::move(b));

    const std::size_t in_full = weight_shape[weight_shape.size() - 2];
    const std::size_t out_full = weight_shape.back();
    const std::size_t taps = l.kind == LayerKind::conv2d ? l.kernel * l.kernel : 1;
    std::vector<double> w;
    w.reserve(taps * keep_in.size() * keep_out.size());
    for (std::size_t t = 0; t < taps; ++t) {
        for (std::size_t r : keep_in) {
            const double* row = p.weights.data().data() + (t * in_full + r) * out_full;
            for (std::size_t o : keep_out) w.push_back(row[o]);
        }
    }
    Shape ws = weight_shape;
    ws[ws.size() - 2] = keep_in.size();
    ws.back() = keep_out.size();
    out.weights = Tensor(std::move(ws), std::move(w));
    return out;
}

std::vector<LayerParams> slice_params(const ReductionPlan& plan, const NetworkSpec& spec,
                                      const std::vector<LayerParams>& params) {
    if (params.size() != spec.layers.size()) throw ShapeMismatch("parameter list does not match network");
    std::vector<LayerParams> out(spec.layers.size());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (!spec.layers[i].has_params()) continue;
        out[i] = slice_layer(spec.layers[i], spec.weight_shape(i), params[i], plan.keep_in[i], plan.keep_out[i]);
    }
    return out;
}

}  // namespace

NetworkSpec reduce_spec(const NetworkSpec& spec, const MaskSet& mask) {
    return plan_reduction(spec, mask).spec;
}

Network reduce_network(const Network& net, const MaskSet& mask) {
    ReductionPlan plan = plan_reduction(net.spec, mask);
    Network out{plan.spec, slice_params(plan, net.spec, net.params), net.init_seed};
    return out;
}

Gradients reduce_gradients(const NetworkSpec& spec, const Gradients& grads, const MaskSet& mask) {
    return slice_params(plan_reduction(spec, mask), spec, grads);
}

std::size_t active_parameter_count(const NetworkSpec& spec, const MaskSet& mask) {
    if (mask.mode == MaskMode::structured) return reduce_spec(spec, mask).parameter_count();
    check_congruent(mask, spec);
    std::size_t masked = 0;
    for (const auto& slot : mask.layers) {
        if (!slot) continue;
        for (double v : slot->data()) masked += v == 0.0;
    }
    return spec.parameter_count() - masked;
}

}  // namespace weedout
