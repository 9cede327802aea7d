#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "weedout/errors.hpp"
#include "weedout/network.hpp"
#include "weedout/sparsity.hpp"

using namespace weedout;

namespace {

NetworkSpec small_dense() {
    return {{4}, {LayerSpec::dense(6), LayerSpec::relu(), LayerSpec::dense(5), LayerSpec::relu(),
                  LayerSpec::dense(3, false)}};
}

}  // namespace

TEST_CASE("spec validation") {
    CHECK_NOTHROW(small_dense().validate());
    CHECK_NOTHROW(default_architecture({28, 28, 1}, 10).validate());

    NetworkSpec no_flatten{{4, 4, 1}, {LayerSpec::conv2d(2, 3), LayerSpec::dense(3, false)}};
    CHECK_THROWS_AS(no_flatten.validate(), SpecError);
    NetworkSpec masked_logits{{4}, {LayerSpec::dense(3, true)}};
    CHECK_THROWS_AS(masked_logits.validate(), SpecError);
    NetworkSpec kernel_too_big{{2, 2, 1}, {LayerSpec::conv2d(2, 3), LayerSpec::flatten(), LayerSpec::dense(2, false)}};
    CHECK_THROWS_AS(kernel_too_big.validate(), SpecError);
    NetworkSpec empty{{4}, {}};
    CHECK_THROWS_AS(empty.validate(), SpecError);

    const NetworkSpec d = default_architecture({8, 8, 1}, 10);
    CHECK(d.output_shapes().back() == Shape{10});
    CHECK(d.output_shapes()[2] == Shape{4, 4, 32});
    CHECK(d.maskable_layers() == std::vector<std::size_t>{0, 2, 5});
    CHECK(d.parameter_count() == (9 * 16 + 16) + (9 * 16 * 32 + 32) + (512 * 128 + 128) + (128 * 10 + 10));
}

TEST_CASE("init_network") {
    const NetworkSpec spec = small_dense();
    const Network a = init_network(spec, 5), b = init_network(spec, 5), c = init_network(spec, 6);
    CHECK(a.params == b.params);
    CHECK(a.checksum() == b.checksum());
    CHECK(a.params != c.params);
    CHECK(a.checksum() != c.checksum());
    for (const auto& p : {a.params[0], a.params[2], a.params[4]}) {
        CHECK(std::all_of(p.bias.data().begin(), p.bias.data().end(), [](double v) { return v == 0.0; }));
    }

    NetworkSpec wide{{50}, {LayerSpec::dense(2000, false)}};
    const Network w = init_network(wide, 1);
    double ss = 0.0;
    for (double v : w.params[0].weights.data()) ss += v * v;
    CHECK(std::sqrt(ss / static_cast<double>(w.params[0].weights.size())) == doctest::Approx(0.2).epsilon(0.01));
}

TEST_CASE("forward matches a direct-loop reference") {
    RngStream rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const NetworkSpec spec = trial % 2 ? oracle::random_conv_spec(rng) : oracle::random_dense_spec(rng);
        const Network net = oracle::random_network(spec, 100 + trial);
        const Tensor x = oracle::random_input(spec, 3, rng);
        const MaskSet ones = MaskSet::ones(spec);
        CHECK(oracle::max_abs_diff(forward(net, ones, x), oracle::reference_logits(net, ones, x)) < 1e-12);
        const MaskSet m = sample_structured(spec, SparsityRatio(0.4), 7 + trial);
        CHECK(oracle::max_abs_diff(forward(net, m, x), oracle::reference_logits(net, m, x)) < 1e-12);
        const MaskSet u = sample_unstructured(spec, SparsityRatio(0.4), 7 + trial);
        CHECK(oracle::max_abs_diff(forward(net, u, x), oracle::reference_logits(net, u, x)) < 1e-12);
    }
}

TEST_CASE("forward masking properties") {
    const NetworkSpec spec = small_dense();
    const Network net = init_network(spec, 3);
    RngStream rng(1);
    const Tensor x = oracle::random_input(spec, 8, rng);

    SUBCASE("unstructured all-ones equals structured all-ones") {
        CHECK(forward(net, MaskSet::ones(spec, MaskMode::unstructured), x) == forward(net, MaskSet::ones(spec), x));
    }
    SUBCASE("a fully blocked layer in a bias-free relu net gives zero logits") {
        MaskSet m = MaskSet::ones(spec);
        *m.layers[2] = Tensor({5});
        const Tensor logits = forward(net, m, x);
        CHECK(std::all_of(logits.data().begin(), logits.data().end(), [](double v) { return v == 0.0; }));
    }
    SUBCASE("flattened batches are accepted") {
        CHECK(forward(net, MaskSet::ones(spec), x.reshaped({8, 4})) == forward(net, MaskSet::ones(spec), x));
    }
    SUBCASE("mask layout is checked") {
        MaskSet bad = MaskSet::ones(spec);
        bad.layers[0] = Tensor({5});
        CHECK_THROWS_AS(forward(net, bad, x), MaskMismatch);
        bad = MaskSet::ones(spec);
        (*bad.layers[0])[0] = 0.5;
        CHECK_THROWS_AS(forward(net, bad, x), MaskMismatch);
        bad = MaskSet::ones(spec);
        bad.layers[4] = Tensor({3});
        CHECK_THROWS_AS(forward(net, bad, x), MaskMismatch);
    }
    CHECK_THROWS_AS(forward(net, MaskSet::ones(spec), Tensor({2, 5})), ShapeMismatch);
}

TEST_CASE("gradients match central differences") {
    RngStream rng(21);
    double worst = 0.0;
    std::size_t instances = 0;
    for (int trial = 0; trial < 24; ++trial) {
        const bool conv = trial % 2 == 1;
        const NetworkSpec spec = conv ? oracle::random_conv_spec(rng) : oracle::random_dense_spec(rng);
        const Network net = oracle::random_network(spec, 300 + trial);
        const Tensor x = oracle::random_input(spec, 5, rng);
        const auto y = oracle::random_labels(5, spec.num_classes(), rng);
        MaskSet mask;
        switch (trial % 6 / 2) {
            case 0: mask = MaskSet::ones(spec); break;
            case 1: mask = sample_structured(spec, SparsityRatio(0.4), 50 + trial); break;
            default: mask = sample_unstructured(spec, SparsityRatio(0.4), 50 + trial); break;
        }
        const auto check = oracle::check_gradients(net, mask, x, y);
        CAPTURE(trial);
        CHECK(check.max_rel < 1e-6);
        worst = std::max(worst, check.max_rel);
        ++instances;
    }
    MESSAGE("max relative error " << worst << " over " << instances << " instances");
}

TEST_CASE("double-precision differences agree to rounding noise") {
    RngStream rng(22);
    for (int trial = 0; trial < 4; ++trial) {
        const NetworkSpec spec = trial % 2 ? oracle::random_conv_spec(rng) : oracle::random_dense_spec(rng);
        const Network net = oracle::random_network(spec, 900 + trial);
        const Tensor x = oracle::random_input(spec, 5, rng);
        const auto y = oracle::random_labels(5, spec.num_classes(), rng);
        CHECK(oracle::check_gradients_double(net, MaskSet::ones(spec), x, y).max_abs < 1e-9);
    }
}

TEST_CASE("masked-incident gradients are exactly zero") {
    const NetworkSpec spec = small_dense();
    const Network net = oracle::random_network(spec, 4);
    RngStream rng(2);
    const Tensor x = oracle::random_input(spec, 7, rng);
    const auto y = oracle::random_labels(7, 3, rng);

    MaskSet m = MaskSet::ones(spec);
    (*m.layers[2])[1] = 0.0;  // hidden node 1 of the second dense layer
    const LossGrads lg = loss_and_grads(net, m, x, y);
    for (std::size_t i = 0; i < 6; ++i) CHECK(lg.grads[2].weights[i * 5 + 1] == 0.0);  // incoming column
    CHECK(lg.grads[2].bias[1] == 0.0);
    for (std::size_t o = 0; o < 3; ++o) CHECK(lg.grads[4].weights[1 * 3 + o] == 0.0);  // outgoing row

    const MaskSet u = sample_unstructured(spec, SparsityRatio(0.5), 9);
    const LossGrads ug = loss_and_grads(net, u, x, y);
    for (std::size_t l : spec.maskable_layers()) {
        for (std::size_t i = 0; i < ug.grads[l].weights.size(); ++i) {
            if ((*u.layers[l])[i] == 0.0) CHECK(ug.grads[l].weights[i] == 0.0);
        }
    }

    const LossGrads plain = loss_and_grads(net, MaskSet::ones(spec), x, y);
    CHECK(plain.loss == softmax_cross_entropy_loss(forward(net, MaskSet::ones(spec), x), y));
    CHECK(plain.logits == forward(net, MaskSet::ones(spec), x));
}

TEST_CASE("sgd_step") {
    const NetworkSpec spec = small_dense();
    Network net = init_network(spec, 8);
    const Network before = net;
    RngStream rng(3);
    const Tensor x = oracle::random_input(spec, 4, rng);
    const auto y = oracle::random_labels(4, 3, rng);
    Gradients grads = loss_and_grads(net, MaskSet::ones(spec), x, y).grads;

    SUBCASE("zero gradients and zero velocity leave the network unchanged") {
        Gradients zero = grads;
        for (auto& g : zero) {
            for (double& v : g.weights.data()) v = 0.0;
            for (double& v : g.bias.data()) v = 0.0;
        }
        SgdState state;
        sgd_step(net, zero, 0.1, 0.9, state);
        CHECK(net.params == before.params);
    }
    SUBCASE("momentum 0 is plain gradient descent") {
        SgdState state;
        sgd_step(net, grads, 0.1, 0.0, state);
        for (std::size_t l = 0; l < net.params.size(); ++l) {
            for (std::size_t i = 0; i < net.params[l].weights.size(); ++i) {
                CHECK(net.params[l].weights[i] == before.params[l].weights[i] - 0.1 * grads[l].weights[i]);
            }
        }
    }
    SUBCASE("momentum accumulates velocity") {
        SgdState state;
        sgd_step(net, grads, 0.1, 0.5, state);
        sgd_step(net, grads, 0.1, 0.5, state);
        // v1 = g, v2 = 0.5 g + g; w2 = w0 - 0.1 (g + 1.5 g)
        const double w0 = before.params[0].weights[0], g = grads[0].weights[0];
        CHECK(net.params[0].weights[0] == doctest::Approx(w0 - 0.25 * g).epsilon(1e-14));
    }
    SUBCASE("hyperparameters are validated") {
        SgdState state;
        CHECK_THROWS_AS(sgd_step(net, grads, 0.0, 0.0, state), InvalidArgument);
        CHECK_THROWS_AS(sgd_step(net, grads, 0.1, 1.0, state), InvalidArgument);
        CHECK_THROWS_AS(sgd_step(net, Gradients{}, 0.1, 0.0, state), ShapeMismatch);
    }
}

TEST_CASE("sgd on the quadratic w^2 follows 0.8^k") {
    // One weight, loss w^2, gradient 2w: w <- w - 0.1 * 2w = 0.8 w.
    const NetworkSpec spec{{1}, {LayerSpec::dense(1, false)}};
    Network net = init_network(spec, 0);
    net.params[0].weights[0] = 1.0;
    SgdState state;
    for (int k = 1; k <= 30; ++k) {
        Gradients g(1);
        g[0].weights = Tensor({1, 1}, {2.0 * net.params[0].weights[0]});
        g[0].bias = Tensor({1});
        sgd_step(net, g, 0.1, 0.0, state);
        CHECK(net.params[0].weights[0] == doctest::Approx(std::pow(0.8, k)).epsilon(1e-12));
    }
}

TEST_CASE("masked parameters stay frozen under training") {
    const NetworkSpec spec = small_dense();
    Network net = oracle::random_network(spec, 12);
    const Network before = net;
    const MaskSet m = sample_unstructured(spec, SparsityRatio(0.6), 3);
    RngStream rng(4);
    SgdState state;
    for (int step = 0; step < 20; ++step) {
        const Tensor x = oracle::random_input(spec, 6, rng);
        const auto y = oracle::random_labels(6, 3, rng);
        sgd_step(net, loss_and_grads(net, m, x, y).grads, 0.05, 0.9, state);
    }
    std::size_t frozen = 0;
    for (std::size_t l : spec.maskable_layers()) {
        for (std::size_t i = 0; i < net.params[l].weights.size(); ++i) {
            if ((*m.layers[l])[i] != 0.0) continue;
            CHECK(net.params[l].weights[i] == before.params[l].weights[i]);
            ++frozen;
        }
    }
    CHECK(frozen > 0);
    CHECK(net.params != before.params);
}

TEST_CASE("evaluate") {
    const NetworkSpec spec{{6}, {LayerSpec::dense(8), LayerSpec::relu(), LayerSpec::dense(10, false)}};
    const Network net = oracle::random_network(spec, 2);
    RngStream rng(5);
    Dataset ds;
    ds.inputs = oracle::random_input(spec, 2000, rng);
    ds.num_classes = 10;

    SUBCASE("labels equal to the argmax give accuracy 1") {
        ds.labels = argmax_rows(forward(net, MaskSet::ones(spec), ds.inputs));
        const Metrics m = evaluate(net, MaskSet::ones(spec), ds);
        CHECK(m.accuracy == 1.0);
        CHECK(m.mean_loss == doctest::Approx(softmax_cross_entropy_loss(forward(net, MaskSet::ones(spec), ds.inputs),
                                                                         ds.labels)).epsilon(1e-12));
    }
    SUBCASE("random labels give chance accuracy") {
        ds.labels = oracle::random_labels(2000, 10, rng);
        const Metrics m = evaluate(net, MaskSet::ones(spec), ds);
        const double sigma = std::sqrt(0.1 * 0.9 / 2000.0);
        CHECK(std::abs(m.accuracy - 0.1) < 3 * sigma);
        CHECK(evaluate(net, MaskSet::ones(spec), ds) == m);
        CHECK(evaluate(net, MaskSet::ones(spec), ds, 7).accuracy == m.accuracy);
        CHECK(evaluate(net, MaskSet::ones(spec), ds, 7).mean_loss == doctest::Approx(m.mean_loss).epsilon(1e-12));
    }
}

TEST_CASE("argmax ties go to the lowest class") {
    CHECK(argmax_rows(Tensor({2, 3}, {1, 3, 3, 2, 2, 2})) == std::vector<int>{1, 0});
}

TEST_CASE("checkpoint round trip") {
    const auto dir = oracle::scratch_dir("checkpoint");
    const NetworkSpec spec = default_architecture({6, 6, 1}, 4);
    const Network net = oracle::random_network(spec, 77);
    const MaskSet mask = sample_structured(spec, SparsityRatio(0.6), 1234);

    save_checkpoint(dir / "a.wdck", net, &mask);
    const Checkpoint ck = load_checkpoint(dir / "a.wdck");
    CHECK(ck.net.spec == net.spec);
    CHECK(ck.net.params == net.params);
    CHECK(ck.net.init_seed == net.init_seed);
    REQUIRE(ck.mask.has_value());
    CHECK(*ck.mask == mask);

    save_checkpoint(dir / "b.wdck", net);
    CHECK_FALSE(load_checkpoint(dir / "b.wdck").mask.has_value());

    // Truncation is a format error.
    auto bytes = oracle::read_text(dir / "a.wdck");
    oracle::write_bytes(dir / "c.wdck", std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 40));
    CHECK_THROWS_AS(load_checkpoint(dir / "c.wdck"), FormatError);

    // Flipping one stored mask entry no longer matches the resample.
    MaskSet tampered = mask;
    for (double& v : tampered.layers[0]->data()) {
        if (v == 0.0) {
            v = 1.0;
            break;
        }
    }
    save_checkpoint(dir / "d.wdck", net, &tampered);
    CHECK_THROWS_AS(load_checkpoint(dir / "d.wdck"), ChecksumError);
}
