#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace weedout {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles with an explicit shape.
///
/// A default-constructed tensor is a rank-0 scalar holding 0.0, so that
/// `data().size() == shape_size(shape())` holds for every instance.
class Tensor {
public:
    Tensor();
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor filled(Shape shape, double value);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    // Same data, new shape of equal total size.
    Tensor reshaped(Shape shape) const;

    bool all_finite() const noexcept;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Throws NumericError naming `context` if any entry is NaN or infinite.
void require_finite(const Tensor& t, std::string_view context);

/// Counter-based splittable random stream.
///
/// Draw n of a stream with seed s is a pure function of (s, n), and
/// `split(label)` depends only on the seed and the label, never on how many
/// draws the parent has made. That makes per-candidate and per-layer
/// streams independent of evaluation order and thread count.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) noexcept;

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t draws() const noexcept { return counter_; }

    RngStream split(std::string_view label) const noexcept;
    RngStream split(std::uint64_t index) const noexcept;

    std::uint64_t next_u64() noexcept;
    // Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    // Standard normal via Box-Muller; consumes two draws.
    double normal() noexcept;
    // Uniform integer in [0, n); unbiased. n must be positive.
    std::uint64_t uniform_index(std::uint64_t n);

private:
    std::uint64_t seed_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x) noexcept;
std::uint64_t fnv1a64(std::span<const unsigned char> bytes) noexcept;
std::uint64_t fnv1a64(std::string_view text) noexcept;

/// Weights drawn i.i.d. from Normal(0, 2 / fan_in).
Tensor he_normal(std::size_t fan_in, Shape shape, RngStream& rng);

/// Elementwise product. `b` may also be a vector matching the last axis of
/// `a`, in which case it is applied to every leading index (a node mask over
/// a batch of activations, or a channel mask over NHWC feature maps).
Tensor hadamard(const Tensor& a, const Tensor& b);
void hadamard_inplace(Tensor& a, const Tensor& b);

// Rank-2 products. Shapes: a [m,k], b [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);
// a [k,m], b [k,n] -> aᵀb [m,n]
Tensor matmul_transposed_a(const Tensor& a, const Tensor& b);
// a [m,k], b [n,k] -> abᵀ [m,n]
Tensor matmul_transposed_b(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);

/// Adds `bias` (length = last axis) to every row.
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// Sums all leading axes, leaving the last: the bias gradient.
Tensor sum_to_last_axis(const Tensor& x);

Tensor relu(const Tensor& x);
/// Gradient through relu given the forward input (or output; both have the
/// same positive support).
Tensor relu_backward(const Tensor& grad_out, const Tensor& forward_input);

struct LossAndGrad {
    double loss = 0.0;  // mean over the batch
    Tensor grad;        // d(loss)/d(logits), same shape as logits
};

/// Mean softmax cross-entropy over a batch of logits [n, classes].
LossAndGrad softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Loss only; skips building the gradient.
double softmax_cross_entropy_loss(const Tensor& logits, std::span<const int> labels);

}  // namespace weedout
