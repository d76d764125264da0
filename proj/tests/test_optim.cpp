// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "wssl/optim.hpp"
#include "wssl/rng.hpp"

using namespace wssl;

namespace {

// Independent scalar Adam used as the masked-update oracle: one optimizer
// per coordinate, all sharing the global step counter for bias correction.
struct ScalarAdamOracle {
    double m = 0.0, v = 0.0;
    void apply(double& p, double g, long global_t, double alpha, double b1, double b2,
               double eps) {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        const double mhat = m / (1.0 - std::pow(b1, static_cast<double>(global_t)));
        const double vhat = v / (1.0 - std::pow(b2, static_cast<double>(global_t)));
        p -= alpha * mhat / (std::sqrt(vhat) + eps);
    }
};

}  // namespace

TEST_CASE("sgd fixed point and degenerate momentum") {
    SgdState s(3, 0.1, 0.9);
    std::vector<double> p{1.0, 2.0, 3.0};
    const std::vector<double> zero(3, 0.0);
    sgd_step(s, p, zero);
    CHECK(p == std::vector<double>{1.0, 2.0, 3.0});

    SgdState plain(2, 0.5, 0.0);
    std::vector<double> q{1.0, -1.0};
    sgd_step(plain, q, std::vector<double>{2.0, 4.0});
    CHECK(q[0] == Catch::Approx(1.0 - 0.5 * 2.0).margin(1e-15));
    CHECK(q[1] == Catch::Approx(-1.0 - 0.5 * 4.0).margin(1e-15));
}

TEST_CASE("sgd momentum matches hand-unrolled recurrence") {
    const double alpha = 0.1, mu = 0.9;
    const std::vector<double> g1{0.5, -1.0}, g2{0.25, 0.25};
    SgdState s(2, alpha, mu);
    std::vector<double> p{1.0, 2.0};
    sgd_step(s, p, g1);
    sgd_step(s, p, g2);
    // Unrolled: p2 = p0 - alpha*g1 - alpha*(mu*g1 + g2)
    for (int i = 0; i < 2; ++i) {
        const double expected =
            (i == 0 ? 1.0 : 2.0) - alpha * g1[i] - alpha * (mu * g1[i] + g2[i]);
        CHECK(p[i] == Catch::Approx(expected).margin(1e-15));
    }
}

TEST_CASE("adam first step moves by about step_size in gradient sign") {
    AdamState s(3, 0.01);
    std::vector<double> p{0.0, 0.0, 0.0};
    adam_step(s, p, std::vector<double>{0.5, -2.0, 1e-3});
    for (int i = 0; i < 3; ++i) {
        // With bias correction the first step is alpha * g/(|g| + eps').
        CHECK(std::abs(p[i]) <= 0.01 * 1.0001);
        CHECK(std::abs(p[i]) >= 0.01 * 0.99);
    }
    CHECK(p[0] < 0.0);
    CHECK(p[1] > 0.0);
    CHECK(p[2] < 0.0);
}

TEST_CASE("adam zero gradient is a fixed point") {
    AdamState s(2, 0.1);
    std::vector<double> p{1.5, -0.5};
    const std::vector<double> zero(2, 0.0);
    for (int i = 0; i < 10; ++i) adam_step(s, p, zero);
    CHECK(p == std::vector<double>{1.5, -0.5});
}

TEST_CASE("adam three-step trace matches hand-computed recurrence") {
    const double alpha = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const std::vector<std::vector<double>> gs{{0.5, -1.0}, {-0.25, 0.5}, {1.5, 0.0}};

    AdamState s(2, alpha);
    std::vector<double> p{1.0, -2.0};
    std::vector<double> expected{1.0, -2.0};
    double m[2] = {0.0, 0.0}, v[2] = {0.0, 0.0};
    for (int t = 1; t <= 3; ++t) {
        adam_step(s, p, gs[t - 1]);
        for (int i = 0; i < 2; ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * gs[t - 1][i];
            v[i] = b2 * v[i] + (1.0 - b2) * gs[t - 1][i] * gs[t - 1][i];
            const double mhat = m[i] / (1.0 - std::pow(b1, t));
            const double vhat = v[i] / (1.0 - std::pow(b2, t));
            expected[i] -= alpha * mhat / (std::sqrt(vhat) + eps);
            CHECK(p[i] == Catch::Approx(expected[i]).margin(1e-12));
        }
    }
}

TEST_CASE("madam all-ones mask equals vanilla adam") {
    SeededRng rng(3);
    AdamState a(5, 0.05), b(5, 0.05);
    std::vector<double> pa(5, 1.0), pb(5, 1.0);
    const std::vector<std::uint8_t> ones(5, 1);
    for (int t = 0; t < 7; ++t) {
        std::vector<double> g(5);
        for (double& x : g) x = rng.normal();
        adam_step(a, pa, g);
        madam_step(b, pb, g, ones);
        CHECK(pa == pb);
    }
    CHECK(a.m == b.m);
    CHECK(a.v == b.v);
}

TEST_CASE("madam all-false mask leaves everything bit-identical") {
    AdamState s(4, 0.1);
    s.m = {0.1, 0.2, 0.3, 0.4};
    s.v = {0.01, 0.02, 0.03, 0.04};
    std::vector<double> p{1.0, 2.0, 3.0, 4.0};
    const std::vector<double> p_before = p;
    const AdamState s_before = s;
    const std::vector<std::uint8_t> none(4, 0);
    madam_step(s, p, std::vector<double>{9.0, 9.0, 9.0, 9.0}, none);
    CHECK(p == p_before);
    CHECK(s.m == s_before.m);
    CHECK(s.v == s_before.v);
    CHECK(s.t == s_before.t + 1);  // the global counter still advances
}

TEST_CASE("madam interleaved masks match per-coordinate scalar adam oracle") {
    const double alpha = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const std::size_t n = 7;
    SeededRng rng(99);

    AdamState s(n, alpha);
    std::vector<double> p(n, 1.0);
    std::vector<double> oracle_p(n, 1.0);
    std::vector<ScalarAdamOracle> oracle(n);

    for (int t = 1; t <= 5; ++t) {
        std::vector<double> g(n, 0.0);
        std::vector<std::uint8_t> mask(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            if (rng.uniform() < 0.5) {
                mask[i] = 1;
                g[i] = rng.normal();
                while (g[i] == 0.0) g[i] = rng.normal();
            }
        }
        std::vector<double> p_before = p;
        AdamState s_before = s;
        madam_step(s, p, g, mask);
        for (std::size_t i = 0; i < n; ++i) {
            if (mask[i]) {
                oracle[i].apply(oracle_p[i], g[i], t, alpha, b1, b2, eps);
                CHECK(p[i] == Catch::Approx(oracle_p[i]).margin(1e-12));
            } else {
                // Snapshot comparison: masked-out coordinates untouched.
                CHECK(p[i] == p_before[i]);
                CHECK(s.m[i] == s_before.m[i]);
                CHECK(s.v[i] == s_before.v[i]);
            }
        }
    }
}

TEST_CASE("adam per-step magnitude stays bounded by step size") {
    SeededRng rng(123);
    AdamState s(3, 0.01);
    std::vector<double> p(3, 0.0);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> g(3);
        for (double& x : g) x = 100.0 * rng.normal();
        const std::vector<double> before = p;
        adam_step(s, p, g);
        for (int i = 0; i < 3; ++i)
            CHECK(std::abs(p[i] - before[i]) <= 0.01 * (1.0 + 1e-6) / (1.0 - 0.9));
    }
}

TEST_CASE("optimizers reject shape mismatches") {
    AdamState s(3, 0.1);
    std::vector<double> p{1.0, 2.0};
    CHECK_THROWS_AS(adam_step(s, p, std::vector<double>{1.0, 2.0}), std::invalid_argument);
    SgdState sg(3, 0.1, 0.0);
    CHECK_THROWS_AS(sgd_step(sg, p, std::vector<double>{1.0, 2.0, 3.0}),
                    std::invalid_argument);
}

TEST_CASE("nonzero mask follows the literal gradient rule") {
    const std::vector<double> g{0.0, 1e-300, -2.0, 0.0};
    const std::vector<std::uint8_t> m = nonzero_mask(g);
    CHECK(m == std::vector<std::uint8_t>{0, 1, 1, 0});
}
