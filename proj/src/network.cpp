#include "weedout/network.hpp"

#include <algorithm>
#include <cmath>

#include "weedout/errors.hpp"

namespace weedout {

std::string_view to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::dense: return "dense";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::relu: return "relu";
        case LayerKind::flatten: return "flatten";
    }
    return "?";
}

LayerKind layer_kind_from_string(std::string_view name) {
    if (name == "dense") return LayerKind::dense;
    if (name == "conv2d") return LayerKind::conv2d;
    if (name == "relu") return LayerKind::relu;
    if (name == "flatten") return LayerKind::flatten;
    throw SpecError("unknown layer kind '" + std::string(name) + "'");
}

std::string_view to_string(MaskMode mode) {
    return mode == MaskMode::structured ? "structured" : "unstructured";
}

MaskMode mask_mode_from_string(std::string_view name) {
    if (name == "structured") return MaskMode::structured;
    if (name == "unstructured") return MaskMode::unstructured;
    throw InvalidArgument("unknown mask mode '" + std::string(name) + "'");
}

LayerSpec LayerSpec::dense(std::size_t units, bool maskable) {
    return {LayerKind::dense, units, 0, 1, maskable};
}

LayerSpec LayerSpec::conv2d(std::size_t channels, std::size_t kernel, std::size_t stride, bool maskable) {
    return {LayerKind::conv2d, channels, kernel, stride, maskable};
}

LayerSpec LayerSpec::relu() {
    return {LayerKind::relu, 0, 0, 1, false};
}

LayerSpec LayerSpec::flatten() {
    return {LayerKind::flatten, 0, 0, 1, false};
}

// ---------------------------------------------------------------------------
// NetworkSpec

namespace {

std::string layer_name(std::size_t i, const LayerSpec& l) {
    return "layer " + std::to_string(i) + " (" + std::string(to_string(l.kind)) + ")";
}

}  // namespace

std::vector<Shape> NetworkSpec::output_shapes() const {
    if (input.empty() || shape_size(input) == 0) throw SpecError("input shape must be non-empty and positive");
    for (std::size_t d : input) {
        if (d == 0) throw SpecError("input shape has a zero extent");
    }
    std::vector<Shape> out;
    Shape cur = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        switch (l.kind) {
            case LayerKind::dense:
                if (l.units == 0) throw SpecError(layer_name(i, l) + " has zero units");
                if (cur.size() != 1) {
                    throw SpecError(layer_name(i, l) + " needs a flat input, got " + shape_string(cur) +
                                    " (insert a flatten layer)");
                }
                cur = {l.units};
                break;
            case LayerKind::conv2d: {
                if (l.units == 0) throw SpecError(layer_name(i, l) + " has zero channels");
                if (l.kernel == 0 || l.stride == 0) throw SpecError(layer_name(i, l) + " needs kernel and stride >= 1");
                if (cur.size() != 3) throw SpecError(layer_name(i, l) + " needs HWC input, got " + shape_string(cur));
                if (cur[0] < l.kernel || cur[1] < l.kernel) {
                    throw SpecError(layer_name(i, l) + " kernel " + std::to_string(l.kernel) + " exceeds input " +
                                    shape_string(cur));
                }
                cur = {(cur[0] - l.kernel) / l.stride + 1, (cur[1] - l.kernel) / l.stride + 1, l.units};
                break;
            }
            case LayerKind::relu:
                break;
            case LayerKind::flatten:
                cur = {shape_size(cur)};
                break;
        }
        out.push_back(cur);
    }
    return out;
}

void NetworkSpec::validate() const {
    if (layers.empty()) throw SpecError("network has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].maskable && !layers[i].has_params()) {
            throw SpecError(layer_name(i, layers[i]) + " cannot be maskable");
        }
    }
    const LayerSpec& last = layers.back();
    if (last.kind != LayerKind::dense) throw SpecError("the final layer must be a dense logits layer");
    if (last.maskable) throw SpecError("the logits layer must not be maskable");
    output_shapes();
}

Shape NetworkSpec::input_shape_of(std::size_t layer) const {
    if (layer == 0) return input;
    return output_shapes().at(layer - 1);
}

std::size_t NetworkSpec::num_classes() const {
    if (layers.empty()) throw SpecError("network has no layers");
    return layers.back().units;
}

std::size_t NetworkSpec::fan_in(std::size_t layer) const {
    const LayerSpec& l = layers.at(layer);
    const Shape in = input_shape_of(layer);
    switch (l.kind) {
        case LayerKind::dense: return in[0];
        case LayerKind::conv2d: return l.kernel * l.kernel * in[2];
        default: throw SpecError(layer_name(layer, l) + " has no weights");
    }
}

Shape NetworkSpec::weight_shape(std::size_t layer) const {
    const LayerSpec& l = layers.at(layer);
    const Shape in = input_shape_of(layer);
    switch (l.kind) {
        case LayerKind::dense: return {in[0], l.units};
        case LayerKind::conv2d: return {l.kernel, l.kernel, in[2], l.units};
        default: throw SpecError(layer_name(layer, l) + " has no weights");
    }
}

std::size_t NetworkSpec::parameter_count() const {
    std::size_t total = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].has_params()) total += shape_size(weight_shape(i)) + layers[i].units;
    }
    return total;
}

std::vector<std::size_t> NetworkSpec::maskable_layers() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].maskable) out.push_back(i);
    }
    return out;
}

NetworkSpec default_architecture(Shape input, std::size_t num_classes) {
    NetworkSpec spec{std::move(input),
                     {LayerSpec::conv2d(16, 3), LayerSpec::relu(), LayerSpec::conv2d(32, 3), LayerSpec::relu(),
                      LayerSpec::flatten(), LayerSpec::dense(128), LayerSpec::relu(),
                      LayerSpec::dense(num_classes, false)}};
    spec.validate();
    return spec;
}

// ---------------------------------------------------------------------------
// Masks

MaskSet MaskSet::ones(const NetworkSpec& spec, MaskMode mode) {
    MaskSet m;
    m.mode = mode;
    m.layers.resize(spec.layers.size());
    for (std::size_t i : spec.maskable_layers()) {
        m.layers[i] = mode == MaskMode::structured ? Tensor::filled({spec.layers[i].units}, 1.0)
                                                   : Tensor::filled(spec.weight_shape(i), 1.0);
    }
    return m;
}

void check_congruent(const MaskSet& mask, const NetworkSpec& spec) {
    if (mask.layers.size() != spec.layers.size()) {
        throw MaskMismatch("mask has " + std::to_string(mask.layers.size()) + " layer slots, network has " +
                           std::to_string(spec.layers.size()));
    }
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& slot = mask.layers[i];
        if (!spec.layers[i].maskable) {
            if (slot) throw MaskMismatch("mask given for non-maskable " + layer_name(i, spec.layers[i]));
            continue;
        }
        if (!slot) throw MaskMismatch("no mask for maskable " + layer_name(i, spec.layers[i]));
        const Shape want = mask.mode == MaskMode::structured ? Shape{spec.layers[i].units} : spec.weight_shape(i);
        if (slot->shape() != want) {
            throw MaskMismatch("mask for " + layer_name(i, spec.layers[i]) + " has shape " +
                               shape_string(slot->shape()) + ", expected " + shape_string(want));
        }
        for (double v : slot->data()) {
            if (v != 0.0 && v != 1.0) throw MaskMismatch("mask for " + layer_name(i, spec.layers[i]) + " is not 0/1");
        }
    }
}

// ---------------------------------------------------------------------------
// Init

Network init_network(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    Network net{spec, {}, seed};
    const RngStream root(seed);
    net.params.resize(spec.layers.size());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (!spec.layers[i].has_params()) continue;
        RngStream rng = root.split(i);
        net.params[i].weights = he_normal(spec.fan_in(i), spec.weight_shape(i), rng);
        net.params[i].bias = Tensor({spec.layers[i].units});
    }
    return net;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

struct ConvGeometry {
    std::size_t n, h, w, c, k, stride, oh, ow;
};

ConvGeometry conv_geometry(const Tensor& x, const LayerSpec& l) {
    ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), l.kernel, l.stride, 0, 0};
    g.oh = (g.h - g.k) / g.stride + 1;
    g.ow = (g.w - g.k) / g.stride + 1;
    return g;
}

// [n,h,w,c] -> [n*oh*ow, k*k*c], patch entries ordered (kh, kw, c) to match
// the [k,k,c,out] weight layout.
Tensor im2col(const Tensor& x, const ConvGeometry& g) {
    const std::size_t patch = g.k * g.k * g.c;
    Tensor cols({g.n * g.oh * g.ow, patch});
    const double* src = x.data().data();
    double* dst = cols.data().data();
    for (std::size_t n = 0; n < g.n; ++n) {
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
                double* row = dst + ((n * g.oh + oy) * g.ow + ox) * patch;
                for (std::size_t ky = 0; ky < g.k; ++ky) {
                    const double* line = src + ((n * g.h + oy * g.stride + ky) * g.w + ox * g.stride) * g.c;
                    std::copy_n(line, g.k * g.c, row + ky * g.k * g.c);
                }
            }
        }
    }
    return cols;
}

Tensor col2im(const Tensor& cols, const ConvGeometry& g) {
    const std::size_t patch = g.k * g.k * g.c;
    Tensor x({g.n, g.h, g.w, g.c});
    const double* src = cols.data().data();
    double* dst = x.data().data();
    for (std::size_t n = 0; n < g.n; ++n) {
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
                const double* row = src + ((n * g.oh + oy) * g.ow + ox) * patch;
                for (std::size_t ky = 0; ky < g.k; ++ky) {
                    double* line = dst + ((n * g.h + oy * g.stride + ky) * g.w + ox * g.stride) * g.c;
                    const double* part = row + ky * g.k * g.c;
                    for (std::size_t j = 0; j < g.k * g.c; ++j) line[j] += part[j];
                }
            }
        }
    }
    return x;
}

// Layer whose structured mask multiplies the output of layer j, if any. A
// mask belongs to a parametric layer and is applied to its activation
// output: after the following relu when there is one.
std::optional<std::size_t> mask_applied_after(const NetworkSpec& spec, const MaskSet& mask, std::size_t j) {
    if (mask.mode != MaskMode::structured) return std::nullopt;
    const auto& layers = spec.layers;
    if (layers[j].has_params() && mask.layers[j] &&
        (j + 1 == layers.size() || layers[j + 1].kind != LayerKind::relu)) {
        return j;
    }
    if (layers[j].kind == LayerKind::relu && j > 0 && layers[j - 1].has_params() && mask.layers[j - 1]) {
        return j - 1;
    }
    return std::nullopt;
}

const Tensor& effective_weights(const Network& net, const MaskSet& mask, std::size_t i, Tensor& scratch) {
    if (mask.mode == MaskMode::unstructured && mask.layers[i]) {
        scratch = hadamard(net.params[i].weights, *mask.layers[i]);
        return scratch;
    }
    return net.params[i].weights;
}

struct Trace {
    std::vector<Tensor> inputs;  // input to each layer
    std::vector<Tensor> cols;    // im2col of conv inputs
};

Tensor as_batch(const NetworkSpec& spec, const Tensor& batch) {
    const std::size_t per_sample = shape_size(spec.input);
    if (batch.rank() < 1 || batch.size() % per_sample != 0 || batch.size() / per_sample != batch.dim(0)) {
        throw ShapeMismatch("batch " + shape_string(batch.shape()) + " does not match network input " +
                            shape_string(spec.input));
    }
    Shape shape{batch.dim(0)};
    shape.insert(shape.end(), spec.input.begin(), spec.input.end());
    if (shape == batch.shape()) return batch;
    return batch.reshaped(std::move(shape));
}

Tensor run_forward(const Network& net, const MaskSet& mask, const Tensor& batch, Trace* trace) {
    const NetworkSpec& spec = net.spec;
    check_congruent(mask, spec);
    Tensor x = as_batch(spec, batch);
    const std::size_t n = x.dim(0);
    if (trace) {
        trace->inputs.assign(spec.layers.size(), Tensor());
        trace->cols.assign(spec.layers.size(), Tensor());
    }
    Tensor scratch;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        Tensor y;
        switch (l.kind) {
            case LayerKind::dense: {
                const Tensor& w = effective_weights(net, mask, i, scratch);
                y = add_bias(matmul(x, w), net.params[i].bias);
                break;
            }
            case LayerKind::conv2d: {
                const ConvGeometry g = conv_geometry(x, l);
                Tensor cols = im2col(x, g);
                const Tensor& w = effective_weights(net, mask, i, scratch);
                y = add_bias(matmul(cols, w.reshaped({g.k * g.k * g.c, l.units})), net.params[i].bias)
                        .reshaped({n, g.oh, g.ow, l.units});
                if (trace) trace->cols[i] = std::move(cols);
                break;
            }
            case LayerKind::relu:
                y = relu(x);
                break;
            case LayerKind::flatten:
                y = x.reshaped({n, x.size() / n});
                break;
        }
        if (auto owner = mask_applied_after(spec, mask, i)) hadamard_inplace(y, *mask.layers[*owner]);
        if (trace) trace->inputs[i] = std::move(x);
        x = std::move(y);
    }
    return x;
}

}  // namespace

Tensor forward(const Network& net, const MaskSet& mask, const Tensor& batch) {
    return run_forward(net, mask, batch, nullptr);
}

LossGrads loss_and_grads(const Network& net, const MaskSet& mask, const Tensor& batch, std::span<const int> labels) {
    const NetworkSpec& spec = net.spec;
    Trace trace;
    LossGrads out;
    out.logits = run_forward(net, mask, batch, &trace);
    LossAndGrad head = softmax_cross_entropy(out.logits, labels);
    out.loss = head.loss;
    out.grads.resize(spec.layers.size());

    Tensor g = std::move(head.grad);
    Tensor scratch;
    for (std::size_t i = spec.layers.size(); i-- > 0;) {
        const LayerSpec& l = spec.layers[i];
        if (auto owner = mask_applied_after(spec, mask, i)) hadamard_inplace(g, *mask.layers[*owner]);
        const Tensor& x = trace.inputs[i];
        const bool need_input_grad = i > 0;
        switch (l.kind) {
            case LayerKind::dense: {
                Tensor dw = matmul_transposed_a(x, g);
                if (mask.mode == MaskMode::unstructured && mask.layers[i]) hadamard_inplace(dw, *mask.layers[i]);
                out.grads[i].weights = std::move(dw);
                out.grads[i].bias = sum_to_last_axis(g);
                if (need_input_grad) g = matmul_transposed_b(g, effective_weights(net, mask, i, scratch));
                break;
            }
            case LayerKind::conv2d: {
                const ConvGeometry geo = conv_geometry(x, l);
                const std::size_t patch = geo.k * geo.k * geo.c;
                const Tensor g2 = g.reshaped({geo.n * geo.oh * geo.ow, l.units});
                Tensor dw = matmul_transposed_a(trace.cols[i], g2).reshaped(spec.weight_shape(i));
                if (mask.mode == MaskMode::unstructured && mask.layers[i]) hadamard_inplace(dw, *mask.layers[i]);
                out.grads[i].weights = std::move(dw);
                out.grads[i].bias = sum_to_last_axis(g2);
                if (need_input_grad) {
                    const Tensor w = effective_weights(net, mask, i, scratch).reshaped({patch, l.units});
                    g = col2im(matmul_transposed_b(g2, w), geo);
                }
                break;
            }
            case LayerKind::relu:
                g = relu_backward(g, x);
                break;
            case LayerKind::flatten:
                g = g.reshaped(x.shape());
                break;
        }
    }
    return out;
}

void sgd_step(Network& net, const Gradients& grads, double lr, double momentum, SgdState& state) {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidArgument("sgd_step: learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("sgd_step: momentum must be in [0, 1)");
    if (grads.size() != net.params.size()) throw ShapeMismatch("sgd_step: gradients do not match network");
    if (state.velocity.empty()) {
        state.velocity.resize(net.params.size());
        for (std::size_t i = 0; i < net.params.size(); ++i) {
            if (!net.spec.layers[i].has_params()) continue;
            state.velocity[i] = {Tensor(net.params[i].weights.shape()), Tensor(net.params[i].bias.shape())};
        }
    }
    auto update = [&](Tensor& p, const Tensor& grad, Tensor& v) {
        if (grad.shape() != p.shape() || v.shape() != p.shape()) {
            throw ShapeMismatch("sgd_step: gradient shape " + shape_string(grad.shape()) + " vs parameter " +
                                shape_string(p.shape()));
        }
        auto pd = p.data();
        auto gd = grad.data();
        auto vd = v.data();
        for (std::size_t k = 0; k < pd.size(); ++k) {
            vd[k] = momentum * vd[k] + gd[k];
            pd[k] -= lr * vd[k];
        }
    };
    for (std::size_t i = 0; i < net.params.size(); ++i) {
        if (!net.spec.layers[i].has_params()) continue;
        update(net.params[i].weights, grads[i].weights, state.velocity[i].weights);
        update(net.params[i].bias, grads[i].bias, state.velocity[i].bias);
    }
}

std::vector<int> argmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) throw ShapeMismatch("argmax_rows: expected [n, classes]");
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = logits.data().data() + i * c;
        out[i] = static_cast<int>(std::max_element(row, row + c) - row);
    }
    return out;
}

Metrics evaluate(const Network& net, const MaskSet& mask, const Dataset& dataset, std::size_t chunk) {
    if (dataset.size() == 0) throw InvalidArgument("evaluate: empty dataset");
    if (chunk == 0) throw InvalidArgument("evaluate: chunk must be positive");
    std::size_t correct = 0;
    double loss_sum = 0.0;
    std::vector<std::size_t> idx;
    for (std::size_t at = 0; at < dataset.size(); at += chunk) {
        const std::size_t len = std::min(chunk, dataset.size() - at);
        idx.resize(len);
        for (std::size_t k = 0; k < len; ++k) idx[k] = at + k;
        const Batch b = gather(dataset, idx);
        const Tensor logits = forward(net, mask, b.inputs);
        loss_sum += softmax_cross_entropy_loss(logits, b.labels) * static_cast<double>(len);
        const auto pred = argmax_rows(logits);
        for (std::size_t k = 0; k < len; ++k) correct += pred[k] == b.labels[k];
    }
    const auto n = static_cast<double>(dataset.size());
    return {static_cast<double>(correct) / n, loss_sum / n};
}

}  // namespace weedout
