#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "weedout/errors.hpp"
#include "weedout/numerics.hpp"

using namespace weedout;

namespace {

double sample_std(const Tensor& t) {
    const double n = static_cast<double>(t.size());
    const double mean = std::accumulate(t.data().begin(), t.data().end(), 0.0) / n;
    double ss = 0.0;
    for (double v : t.data()) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / (n - 1.0));
}

Tensor random_tensor(Shape shape, RngStream& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.normal();
    return t;
}

}  // namespace

TEST_CASE("tensor construction") {
    Tensor scalar;
    CHECK(scalar.rank() == 0);
    CHECK(scalar.size() == 1);
    CHECK(scalar[0] == 0.0);

    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK(std::all_of(t.data().begin(), t.data().end(), [](double v) { return v == 0.0; }));
    CHECK_THROWS_AS(Tensor({2, 0}), InvalidArgument);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeMismatch);
    CHECK(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}).reshaped({3, 2})[5] == 6.0);
    CHECK_THROWS(t.reshaped({4, 2}));
}

TEST_CASE("require_finite rejects NaN and infinity") {
    Tensor t({3}, {1.0, NAN, 2.0});
    CHECK_FALSE(t.all_finite());
    CHECK_THROWS_AS(require_finite(t, "probe"), NumericError);
    t[1] = INFINITY;
    CHECK_THROWS_AS(require_finite(t, "probe"), NumericError);
    t[1] = 0.0;
    CHECK_NOTHROW(require_finite(t, "probe"));
}

TEST_CASE("rng streams are pure functions of seed and draw index") {
    RngStream a(42), b(42), c(43);
    std::vector<std::uint64_t> xa, xb, xc;
    for (int i = 0; i < 100; ++i) {
        xa.push_back(a.next_u64());
        xb.push_back(b.next_u64());
        xc.push_back(c.next_u64());
    }
    CHECK(xa == xb);
    CHECK(xa != xc);
    CHECK(a.draws() == 100);

    // Children do not depend on how far the parent has advanced.
    RngStream fresh(42);
    CHECK(fresh.split("x").next_u64() == a.split("x").next_u64());
    CHECK(fresh.split(7).next_u64() == a.split(7).next_u64());
    CHECK(fresh.split("x").seed() != fresh.split("y").seed());
    CHECK(fresh.split(1).seed() != fresh.split(2).seed());
}

TEST_CASE("rng distributions") {
    RngStream rng(9);
    const int n = 200000;
    double sum = 0.0, sum_sq = 0.0;
    double umin = 1.0, umax = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        umin = std::min(umin, u);
        umax = std::max(umax, u);
        const double z = rng.normal();
        sum += z;
        sum_sq += z * z;
    }
    CHECK(umin >= 0.0);
    CHECK(umax < 1.0);
    // Standard errors: mean 1/sqrt(n) ~ 0.0022, variance sqrt(2/n) ~ 0.0032.
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(std::abs(sum_sq / n - 1.0) < 0.015);

    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) ++counts[rng.uniform_index(7)];
    for (int c : counts) CHECK(std::abs(c - 10000) < 400);  // ~4 sigma
    CHECK_THROWS_AS(rng.uniform_index(0), InvalidArgument);
}

TEST_CASE("he_normal standard deviation") {
    SUBCASE("fan_in 2 gives unit sigma") {
        RngStream rng(1);
        CHECK(he_normal(2, {4}, rng).size() == 4);
        const Tensor big = he_normal(2, {1000000}, rng);
        CHECK(std::abs(sample_std(big) - 1.0) < 0.01);
    }
    SUBCASE("fan_in 50 gives sigma 0.2") {
        RngStream rng(2);
        const Tensor w = he_normal(50, {50, 10}, rng);
        CHECK(w.shape() == Shape{50, 10});
        CHECK(std::abs(sample_std(w) - 0.2) < 0.02);  // ~3 sd of the sample std at n=500
        const Tensor big = he_normal(50, {1000000}, rng);
        CHECK(std::abs(sample_std(big) - 0.2) < 0.002);
    }
    SUBCASE("fixed seed is reproducible") {
        RngStream r1(42), r2(42);
        CHECK(he_normal(3, {3}, r1) == he_normal(3, {3}, r2));
    }
    RngStream rng(0);
    CHECK_THROWS_AS(he_normal(0, {3}, rng), InvalidArgument);
}

TEST_CASE("hadamard") {
    const Tensor x({3}, {1, 2, 3});
    CHECK(hadamard(x, Tensor({3}, {1, 0, 1})) == Tensor({3}, {1, 0, 3}));
    CHECK(hadamard(x, Tensor::filled({3}, 1.0)) == x);

    const Tensor batch({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(hadamard(batch, Tensor({3}, {0, 1, 1})) == Tensor({2, 3}, {0, 2, 3, 0, 5, 6}));

    RngStream rng(3);
    const Tensor r = random_tensor({4, 5}, rng);
    Tensor m({5});
    for (std::size_t i = 0; i < 5; ++i) m[i] = static_cast<double>(rng.uniform_index(2));
    CHECK(hadamard(hadamard(r, m), m) == hadamard(r, m));

    Tensor inplace = batch;
    hadamard_inplace(inplace, Tensor({3}, {0, 1, 1}));
    CHECK(inplace == hadamard(batch, Tensor({3}, {0, 1, 1})));
    CHECK_THROWS_AS(hadamard(batch, Tensor({2})), ShapeMismatch);
}

TEST_CASE("matmul family against direct loops") {
    RngStream rng(4);
    const Tensor a = random_tensor({4, 3}, rng);
    const Tensor b = random_tensor({3, 5}, rng);
    Tensor expect({4, 5});
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 5; ++j)
            for (std::size_t k = 0; k < 3; ++k) expect[i * 5 + j] += a[i * 3 + k] * b[k * 5 + j];
    CHECK(oracle::max_abs_diff(matmul(a, b), expect) < 1e-12);
    CHECK(oracle::max_abs_diff(matmul_transposed_a(transpose(a), b), expect) < 1e-12);
    CHECK(oracle::max_abs_diff(matmul_transposed_b(a, transpose(b)), expect) < 1e-12);
    CHECK(transpose(transpose(a)) == a);
    CHECK_THROWS_AS(matmul(a, a), ShapeMismatch);
}

TEST_CASE("bias, relu and their adjoints") {
    const Tensor x({2, 3}, {-1, 0, 2, 3, -4, 5});
    const Tensor bias({3}, {10, 20, 30});
    CHECK(add_bias(x, bias) == Tensor({2, 3}, {9, 20, 32, 13, 16, 35}));
    CHECK(sum_to_last_axis(x) == Tensor({3}, {2, -4, 7}));
    CHECK(relu(x) == Tensor({2, 3}, {0, 0, 2, 3, 0, 5}));
    const Tensor g = Tensor::filled({2, 3}, 1.0);
    CHECK(relu_backward(g, x) == Tensor({2, 3}, {0, 0, 1, 1, 0, 1}));
    CHECK_THROWS_AS(add_bias(x, Tensor({2})), ShapeMismatch);
}

TEST_CASE("softmax cross-entropy values") {
    const Tensor equal = Tensor::filled({1, 10}, 0.37);
    const std::vector<int> label{4};
    CHECK(softmax_cross_entropy(equal, label).loss == doctest::Approx(std::log(10.0)).epsilon(1e-12));
    CHECK(std::abs(softmax_cross_entropy_loss(equal, label) - 2.302585092994046) < 1e-12);

    Tensor margin({1, 3}, {0.0, 800.0, 0.0});
    const std::vector<int> one{1};
    CHECK(softmax_cross_entropy(margin, one).loss < 1e-12);
    CHECK(std::isfinite(softmax_cross_entropy(margin, one).loss));

    CHECK_THROWS_AS(softmax_cross_entropy(margin, std::vector<int>{3}), InvalidArgument);
    CHECK_THROWS_AS(softmax_cross_entropy(margin, std::vector<int>{-1}), InvalidArgument);
    CHECK_THROWS_AS(softmax_cross_entropy(margin, std::vector<int>{0, 1}), ShapeMismatch);
}

TEST_CASE("softmax cross-entropy gradient matches central differences") {
    RngStream rng(5);
    const double eps = 1e-5;
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + rng.uniform_index(6), k = 2 + rng.uniform_index(9);
        Tensor logits = random_tensor({n, k}, rng);
        const auto labels = oracle::random_labels(n, k, rng);
        const LossAndGrad lg = softmax_cross_entropy(logits, labels);
        CHECK(lg.loss == softmax_cross_entropy_loss(logits, labels));
        for (std::size_t i = 0; i < logits.size(); ++i) {
            const double saved = logits[i];
            logits[i] = saved + eps;
            const double up = softmax_cross_entropy_loss(logits, labels);
            logits[i] = saved - eps;
            const double down = softmax_cross_entropy_loss(logits, labels);
            logits[i] = saved;
            worst = std::max(worst, oracle::relative_error(lg.grad[i], (up - down) / (2 * eps)));
        }
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("fnv1a64 and mix64") {
    // Published FNV-1a 64-bit test vectors.
    CHECK(fnv1a64(std::string_view("")) == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64(std::string_view("a")) == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64(std::string_view("foobar")) == 0x85944171f73967e8ULL);
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(mix64(i));
    CHECK(seen.size() == 1000);
}
