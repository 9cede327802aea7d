#include "weedout/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "weedout/errors.hpp"

namespace weedout {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

void check_dims(const Shape& shape) {
    for (std::size_t d : shape) {
        if (d == 0) throw InvalidArgument("tensor shape " + shape_string(shape) + " has a zero extent");
    }
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw ShapeMismatch(std::string(op) + ": expected rank-2 tensor, got " + shape_string(t.shape()));
    }
}

}  // namespace

Tensor::Tensor() : data_(1, 0.0) {}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    check_dims(shape_);
    data_.assign(shape_size(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims(shape_);
    if (data_.size() != shape_size(shape_)) {
        throw ShapeMismatch("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                            shape_string(shape_));
    }
}

Tensor Tensor::filled(Shape shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::reshaped(Shape shape) const {
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_finite(const Tensor& t, std::string_view context) {
    if (!t.all_finite()) throw NumericError("non-finite value produced by " + std::string(context));
}

// ---------------------------------------------------------------------------
// RNG

std::uint64_t mix64(std::uint64_t x) noexcept {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64(std::string_view text) noexcept {
    return fnv1a64(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
}

RngStream::RngStream(std::uint64_t seed) noexcept : seed_(seed), key_(mix64(seed ^ 0x5851f42d4c957f2dULL)) {}

RngStream RngStream::split(std::string_view label) const noexcept {
    return RngStream(mix64(key_ ^ mix64(fnv1a64(label))));
}

RngStream RngStream::split(std::uint64_t index) const noexcept {
    return RngStream(mix64(key_ + mix64(index + kGolden)));
}

std::uint64_t RngStream::next_u64() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
}

double RngStream::uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngStream::uniform_index(std::uint64_t n) {
    if (n == 0) throw InvalidArgument("uniform_index: empty range");
    // Lemire's multiply-shift with rejection of the biased low region.
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            m = static_cast<unsigned __int128>(next_u64()) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

// ---------------------------------------------------------------------------
// Ops

Tensor he_normal(std::size_t fan_in, Shape shape, RngStream& rng) {
    if (fan_in == 0) throw InvalidArgument("he_normal: fan_in must be at least 1");
    Tensor t(std::move(shape));
    const double sigma = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : t.data()) v = sigma * rng.normal();
    return t;
}

void hadamard_inplace(Tensor& a, const Tensor& b) {
    auto out = a.data();
    auto m = b.data();
    if (a.shape() == b.shape()) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= m[i];
        return;
    }
    if (b.rank() == 1 && a.rank() >= 1 && a.shape().back() == b.size()) {
        const std::size_t width = b.size();
        for (std::size_t row = 0; row < out.size(); row += width) {
            for (std::size_t j = 0; j < width; ++j) out[row + j] *= m[j];
        }
        return;
    }
    throw ShapeMismatch("hadamard: cannot combine " + shape_string(a.shape()) + " with " + shape_string(b.shape()));
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    Tensor out = a;
    hadamard_inplace(out, b);
    return out;
}

// The inner loops skip zero multiplicands. Adding an exact zero product
// leaves a finite accumulator unchanged, and masked or rectified inputs
// are mostly zeros.
Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw ShapeMismatch("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    }
    Tensor c({m, n});
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* pc = c.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = pc + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = pa[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = pb + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    require_finite(c, "matmul");
    return c;
}

Tensor matmul_transposed_a(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul_transposed_a");
    require_rank2(b, "matmul_transposed_a");
    const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw ShapeMismatch("matmul_transposed_a: " + shape_string(a.shape()) + "ᵀ x " + shape_string(b.shape()));
    }
    Tensor c({m, n});
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* pc = c.data().data();
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = pa + p * m;
        const double* brow = pb + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double api = arow[i];
            if (api == 0.0) continue;
            double* crow = pc + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
        }
    }
    require_finite(c, "matmul_transposed_a");
    return c;
}

Tensor transpose(const Tensor& a) {
    require_rank2(a, "transpose");
    const std::size_t m = a.dim(0), n = a.dim(1);
    Tensor t({n, m});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) t[j * m + i] = a[i * n + j];
    }
    return t;
}

Tensor matmul_transposed_b(const Tensor& a, const Tensor& b) {
    require_rank2(b, "matmul_transposed_b");
    return matmul(a, transpose(b));
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (bias.rank() != 1 || x.rank() == 0 || x.shape().back() != bias.size()) {
        throw ShapeMismatch("add_bias: " + shape_string(x.shape()) + " + " + shape_string(bias.shape()));
    }
    Tensor out = x;
    auto o = out.data();
    auto b = bias.data();
    const std::size_t width = b.size();
    for (std::size_t row = 0; row < o.size(); row += width) {
        for (std::size_t j = 0; j < width; ++j) o[row + j] += b[j];
    }
    require_finite(out, "add_bias");
    return out;
}

Tensor sum_to_last_axis(const Tensor& x) {
    if (x.rank() == 0) throw ShapeMismatch("sum_to_last_axis: scalar input");
    const std::size_t width = x.shape().back();
    Tensor out({width});
    auto in = x.data();
    for (std::size_t row = 0; row < in.size(); row += width) {
        for (std::size_t j = 0; j < width; ++j) out[j] += in[row + j];
    }
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& forward_input) {
    if (grad_out.shape() != forward_input.shape()) {
        throw ShapeMismatch("relu_backward: " + shape_string(grad_out.shape()) + " vs " +
                            shape_string(forward_input.shape()));
    }
    Tensor g = grad_out;
    auto gd = g.data();
    auto fi = forward_input.data();
    for (std::size_t i = 0; i < gd.size(); ++i) {
        if (!(fi[i] > 0.0)) gd[i] = 0.0;
    }
    return g;
}

namespace {

void check_logits(const Tensor& logits, std::span<const int> labels) {
    require_rank2(logits, "softmax_cross_entropy");
    if (labels.size() != logits.dim(0)) {
        throw ShapeMismatch("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                            std::to_string(logits.dim(0)) + " rows");
    }
    const auto classes = static_cast<int>(logits.dim(1));
    for (int y : labels) {
        if (y < 0 || y >= classes) {
            throw InvalidArgument("softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(classes) + ")");
        }
    }
}

// log-sum-exp of one row, shifted by its max for stability.
double row_log_partition(const double* row, std::size_t classes, double& max_out) {
    double mx = row[0];
    for (std::size_t j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < classes; ++j) z += std::exp(row[j] - mx);
    max_out = mx;
    return mx + std::log(z);
}

}  // namespace

LossAndGrad softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
    check_logits(logits, labels);
    const std::size_t n = logits.dim(0), classes = logits.dim(1);
    LossAndGrad out{0.0, Tensor(logits.shape())};
    const double inv_n = 1.0 / static_cast<double>(n);
    const double* pl = logits.data().data();
    double* pg = out.grad.data().data();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = pl + i * classes;
        double mx = 0.0;
        const double log_z = row_log_partition(row, classes, mx);
        total += log_z - row[labels[i]];
        for (std::size_t j = 0; j < classes; ++j) pg[i * classes + j] = std::exp(row[j] - log_z) * inv_n;
        pg[i * classes + static_cast<std::size_t>(labels[i])] -= inv_n;
    }
    out.loss = total / static_cast<double>(n);
    if (!std::isfinite(out.loss)) throw NumericError("softmax_cross_entropy: non-finite loss");
    require_finite(out.grad, "softmax_cross_entropy");
    return out;
}

double softmax_cross_entropy_loss(const Tensor& logits, std::span<const int> labels) {
    check_logits(logits, labels);
    const std::size_t n = logits.dim(0), classes = logits.dim(1);
    const double* pl = logits.data().data();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = pl + i * classes;
        double mx = 0.0;
        total += row_log_partition(row, classes, mx) - row[labels[i]];
    }
    const double loss = total / static_cast<double>(n);
    if (!std::isfinite(loss)) throw NumericError("softmax_cross_entropy: non-finite loss");
    return loss;
}

}  // namespace weedout
