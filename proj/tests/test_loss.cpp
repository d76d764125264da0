// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "wssl/loss.hpp"
#include "wssl/rng.hpp"

using namespace wssl;

TEST_CASE("softmax sums to one and survives huge logits") {
    SeededRng rng(2);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> z(4);
        for (double& v : z) v = 1e4 * rng.normal();
        const std::vector<double> p = softmax(z);
        double sum = 0.0;
        for (double v : p) {
            CHECK(std::isfinite(v));
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(sum == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("softmax_ce uniform two-class loss is ln 2") {
    const auto [loss, grad] = softmax_ce(std::vector<double>{0.3, 0.3},
                                         std::vector<double>{1.0, 0.0});
    CHECK(loss == Catch::Approx(std::log(2.0)).margin(1e-12));
    CHECK(grad[0] == Catch::Approx(-0.5).margin(1e-12));
    CHECK(grad[1] == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("softmax_ce saturated correct prediction has tiny loss") {
    const auto [loss, grad] = softmax_ce(std::vector<double>{50.0, -50.0},
                                         std::vector<double>{1.0, 0.0});
    CHECK(loss >= 0.0);
    CHECK(loss <= 1e-20);
}

TEST_CASE("softmax_ce gradient matches central finite differences") {
    SeededRng rng(5);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> z(3);
        for (double& v : z) v = 2.0 * rng.normal();
        const std::vector<double> target{0.0, 1.0, 0.0};
        const auto [loss, grad] = softmax_ce(z, target);
        const double h = 1e-6;
        for (std::size_t k = 0; k < z.size(); ++k) {
            std::vector<double> zp = z, zm = z;
            zp[k] += h;
            zm[k] -= h;
            const double fd =
                (softmax_ce(zp, target).first - softmax_ce(zm, target).first) / (2.0 * h);
            CHECK(grad[k] == Catch::Approx(fd).epsilon(1e-6).margin(1e-9));
        }
    }
}

TEST_CASE("softmax_ce rejects non-one-hot targets") {
    CHECK_THROWS_AS(softmax_ce(std::vector<double>{1.0, 2.0}, std::vector<double>{0.5, 0.5}),
                    std::invalid_argument);
    CHECK_THROWS_AS(softmax_ce(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0, 1.0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(softmax_ce(std::vector<double>{1.0, 2.0}, std::vector<double>{0.0, 0.0}),
                    std::invalid_argument);
}

TEST_CASE("pseudo_label clear argmax") {
    // probs (0.2, 0.8) up to the softmax of these logits
    const std::vector<double> z{std::log(0.2), std::log(0.8)};
    const auto t = pseudo_label(z, 0.0);
    REQUIRE(t.has_value());
    CHECK((*t)[0] == 0.0);
    CHECK((*t)[1] == 1.0);
}

TEST_CASE("pseudo_label tie breaks to the lowest class index") {
    const auto t = pseudo_label(std::vector<double>{1.25, 1.25}, 0.0);
    REQUIRE(t.has_value());
    CHECK((*t)[0] == 1.0);
    CHECK((*t)[1] == 0.0);
}

TEST_CASE("pseudo_label below threshold is absent") {
    // probs (0.6, 0.4)
    const std::vector<double> z{std::log(0.6), std::log(0.4)};
    CHECK_FALSE(pseudo_label(z, 0.9).has_value());
    CHECK(pseudo_label(z, 0.5).has_value());
}

TEST_CASE("pseudo_label invariant to constant logit shifts") {
    SeededRng rng(8);
    for (int rep = 0; rep < 30; ++rep) {
        std::vector<double> z(3);
        for (double& v : z) v = rng.normal();
        std::vector<double> shifted = z;
        const double c = 10.0 * rng.normal();
        for (double& v : shifted) v += c;
        CHECK(*pseudo_label(z, 0.0) == *pseudo_label(shifted, 0.0));
    }
}
