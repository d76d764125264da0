// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "wssl/influence.hpp"
#include "wssl/objective.hpp"
#include "wssl/rng.hpp"

using namespace wssl;

namespace {

DenseMatrix random_batch(SeededRng& rng, std::size_t n, std::size_t d) {
    DenseMatrix x(n, d);
    for (double& v : x.data()) v = rng.normal();
    return x;
}

struct Fixture {
    Mlp net;
    LabeledBatch d;
    UnlabeledBatch u;

    explicit Fixture(std::uint64_t seed, std::size_t n_u = 6) {
        SeededRng rng(seed);
        net = make_mlp({2, 8, 2}, rng);
        d.x = random_batch(rng, 4, 2);
        d.labels = {0, 1, 0, 1};
        u.x = random_batch(rng, n_u, 2);
        u.ids.resize(n_u);
        for (std::size_t i = 0; i < n_u; ++i) u.ids[i] = static_cast<int>(i);
    }
};

}  // namespace

TEST_CASE("combined loss with all-zero weights equals the supervised loss") {
    Fixture f(21);
    WeightVector w(6, 0.0, 0.0);
    CHECK(combined_loss(f.net, f.d, f.u, w) ==
          Catch::Approx(supervised_batch_loss(f.net, f.d)).margin(1e-15));
}

TEST_CASE("combined loss with an empty unlabeled batch is supervised only") {
    Fixture f(22);
    WeightVector w(0, 0.0, 0.0);
    const UnlabeledBatch empty{DenseMatrix(0, 2), {}};
    CHECK(combined_loss(f.net, f.d, empty, w) ==
          supervised_batch_loss(f.net, f.d));
}

TEST_CASE("doubling every weight doubles the unsupervised term exactly") {
    Fixture f(23);
    WeightVector w1(6, 1.0, 0.0), w2(6, 2.0, 0.0), w0(6, 0.0, 0.0);
    const double base = combined_loss(f.net, f.d, f.u, w0);
    const double l1 = combined_loss(f.net, f.d, f.u, w1);
    const double l2 = combined_loss(f.net, f.d, f.u, w2);
    CHECK(l2 - base == Catch::Approx(2.0 * (l1 - base)).margin(1e-12));
}

TEST_CASE("combined loss is affine in each weight with slope ell_U(u)") {
    Fixture f(24);
    WeightVector w(6, 0.7, 0.0);
    const double l0 = combined_loss(f.net, f.d, f.u, w);
    // Two-point evaluation per coordinate; the slope must also equal the
    // per-example pseudo loss divided by the batch size.
    auto [logits, cache] = forward(f.net, f.u.x);
    for (std::size_t i = 0; i < 6; ++i) {
        WeightVector wp = w;
        wp.values[i] += 1.0;
        const double l1 = combined_loss(f.net, f.d, f.u, wp);
        wp.values[i] += 1.0;
        const double l2 = combined_loss(f.net, f.d, f.u, wp);
        const double slope1 = l1 - l0;
        const double slope2 = l2 - l1;
        CHECK(slope1 == Catch::Approx(slope2).margin(1e-12));
        const auto target = pseudo_label(logits.row(i), 0.0);
        const auto [lu, g] = softmax_ce(logits.row(i), *target);
        CHECK(slope1 == Catch::Approx(lu / 6.0).margin(1e-12));
    }
}

TEST_CASE("combined loss rejects unknown weight ids") {
    Fixture f(25);
    WeightVector w(3, 1.0, 0.0);  // too small for ids 0..5
    CHECK_THROWS_AS(combined_loss(f.net, f.d, f.u, w), std::invalid_argument);
}

TEST_CASE("reparam: equal halves give probability one half everywhere") {
    SeededRng rng(26);
    Mlp net = make_mlp({2, 5, 2}, rng);
    Layer& last = net.layers.back();
    for (std::size_t j = 0; j < last.w.rows(); ++j) last.w(j, 1) = last.w(j, 0);
    last.b[1] = last.b[0];
    const Mlp rp = reparam_binary(net);
    const DenseMatrix x = random_batch(rng, 10, 2);
    const auto [logits, cache] = forward(rp, x);
    for (std::size_t r = 0; r < 10; ++r) {
        const std::vector<double> p = softmax(logits.row(r));
        CHECK(p[0] == Catch::Approx(0.5).margin(1e-15));
    }
}

TEST_CASE("reparam preserves class probabilities on random inputs") {
    SeededRng rng(27);
    const Mlp net = make_mlp({2, 12, 2}, rng);
    const Mlp rp = reparam_binary(net);
    const DenseMatrix x = random_batch(rng, 50, 2);
    const auto [l0, c0] = forward(net, x);
    const auto [l1, c1] = forward(rp, x);
    for (std::size_t r = 0; r < 50; ++r) {
        const std::vector<double> p0 = softmax(l0.row(r));
        const std::vector<double> p1 = softmax(l1.row(r));
        CHECK(p0[0] == Catch::Approx(p1[0]).margin(1e-12));
        CHECK(p0[1] == Catch::Approx(p1[1]).margin(1e-12));
    }
}

TEST_CASE("reparam leaves the training loss unchanged on a fixed batch") {
    Fixture f(28);
    WeightVector w(6, 1.3, 0.0);
    const double before = combined_loss(f.net, f.d, f.u, w);
    const Mlp rp = reparam_binary(f.net);
    const double after = combined_loss(rp, f.d, f.u, w);
    CHECK(before == Catch::Approx(after).margin(1e-12));
}

TEST_CASE("reparam halves the last-layer dimension") {
    SeededRng rng(29);
    const Mlp net = make_mlp({2, 10, 2}, rng);
    const Mlp rp = reparam_binary(net);
    CHECK(net.last_layer_dim() == 22);
    CHECK(rp.last_layer_dim() == 11);
    CHECK(rp.num_classes() == 2);
}

TEST_CASE("reparam rejects more than two classes") {
    SeededRng rng(30);
    const Mlp net = make_mlp({2, 6, 3}, rng);
    CHECK_THROWS_AS(reparam_binary(net), std::invalid_argument);
}

TEST_CASE("reparam makes the damped Hessian positive definite (Cholesky succeeds)") {
    Fixture f(31);
    WeightVector w(6, 1.0, 0.0);
    const Mlp rp = reparam_binary(f.net);
    const DenseMatrix h = assemble_hessian(rp, f.d, f.u, w, 1e-3);
    CHECK_NOTHROW(cholesky(h));
}
