// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <set>

#include "wssl/data.hpp"
#include "wssl/trainer.hpp"

using namespace wssl;

namespace {

std::size_t count_label(const RawDataset& raw, int label) {
    std::size_t n = 0;
    for (const RawPoint& p : raw)
        if (p.label == label) ++n;
    return n;
}

}  // namespace

TEST_CASE("gen_linear: large margin is perfectly separable by sign(x0)") {
    const RawDataset raw = gen_linear(1240, 10.0, 3);
    for (const RawPoint& p : raw) {
        const int pred = p.x0 >= 0.0 ? 1 : 0;
        CHECK(pred == p.label);
    }
}

TEST_CASE("generators balance classes within one") {
    for (std::size_t n : {10u, 11u, 1240u}) {
        const RawDataset lin = gen_linear(n, 1.0, 4);
        CHECK(std::abs(static_cast<long>(count_label(lin, 0)) -
                       static_cast<long>(count_label(lin, 1))) <= 1);
        const RawDataset cir = gen_circles(n, 0.1, 4);
        CHECK(std::abs(static_cast<long>(count_label(cir, 0)) -
                       static_cast<long>(count_label(cir, 1))) <= 1);
    }
}

TEST_CASE("generators are pure functions of their arguments") {
    const RawDataset a = gen_moons(64, 0.1, 9);
    const RawDataset b = gen_moons(64, 0.1, 9);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].x0 == b[i].x0);
        CHECK(a[i].x1 == b[i].x1);
        CHECK(a[i].label == b[i].label);
    }
    const RawDataset c = gen_moons(64, 0.1, 10);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].x0 != c[i].x0) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("noiseless circles put class 1 on radius one") {
    const RawDataset raw = gen_circles(200, 0.0, 6);
    for (const RawPoint& p : raw) {
        const double r = std::hypot(p.x0, p.x1);
        if (p.label == 1)
            CHECK(std::abs(r - 1.0) < 1e-12);
        else
            CHECK(std::abs(r - 0.5) < 1e-12);
    }
}

TEST_CASE("noiseless moons lie on their defining half-circles") {
    const RawDataset raw = gen_moons(200, 0.0, 7);
    for (const RawPoint& p : raw) {
        if (p.label == 0) {
            CHECK(std::abs(std::hypot(p.x0, p.x1) - 1.0) < 1e-12);
            CHECK(p.x1 >= -1e-12);
        } else {
            CHECK(std::abs(std::hypot(p.x0 - 1.0, p.x1 - 0.5) - 1.0) < 1e-12);
            CHECK(p.x1 <= 0.5 + 1e-12);
        }
    }
}

TEST_CASE("split produces the documented sizes and balance") {
    const RawDataset raw = gen_moons(1240, 0.1, 8);
    const SplitDataset ds = split(raw, 10, 30, 1000, 8);
    CHECK(ds.labeled.size() == 10);
    CHECK(ds.validation.size() == 30);
    CHECK(ds.unlabeled_size() == 1000);
    CHECK(ds.test.size() == 200);

    std::size_t l0 = 0;
    for (const LabeledPoint& p : ds.labeled)
        if (p.label == 0) ++l0;
    CHECK(l0 == 5);
    std::size_t v0 = 0;
    for (const LabeledPoint& p : ds.validation)
        if (p.label == 0) ++v0;
    CHECK(v0 == 15);
}

TEST_CASE("split is deterministic per seed and disjoint") {
    const RawDataset raw = gen_circles(1240, 0.1, 12);
    const SplitDataset a = split(raw, 10, 30, 1000, 5);
    const SplitDataset b = split(raw, 10, 30, 1000, 5);
    CHECK(a.labeled.size() == b.labeled.size());
    for (std::size_t i = 0; i < a.labeled.size(); ++i)
        CHECK(a.labeled[i].x0 == b.labeled[i].x0);
    CHECK(a.unlabeled_x.data() == b.unlabeled_x.data());

    const SplitDataset c = split(raw, 10, 30, 1000, 6);
    CHECK(a.unlabeled_x.data() != c.unlabeled_x.data());

    // Disjointness: every generated point is used at most once.
    std::set<std::pair<double, double>> seen;
    auto add = [&](double x0, double x1) {
        const bool fresh = seen.emplace(x0, x1).second;
        CHECK(fresh);
    };
    for (const LabeledPoint& p : a.labeled) add(p.x0, p.x1);
    for (const LabeledPoint& p : a.validation) add(p.x0, p.x1);
    for (const LabeledPoint& p : a.test) add(p.x0, p.x1);
    for (std::size_t i = 0; i < a.unlabeled_size(); ++i)
        add(a.unlabeled_x(i, 0), a.unlabeled_x(i, 1));
    CHECK(seen.size() == 1240);
}

TEST_CASE("split rejects insufficient raw data") {
    const RawDataset raw = gen_moons(100, 0.1, 1);
    CHECK_THROWS_AS(split(raw, 10, 30, 1000, 1), std::invalid_argument);
}

TEST_CASE("dataset CSV round-trips exactly, hidden labels included") {
    const RawDataset raw = gen_moons(300, 0.1, 17);
    const SplitDataset ds = split(raw, 10, 30, 200, 17);
    const std::filesystem::path path =
        std::filesystem::temp_directory_path() / "wssl_test_roundtrip.csv";
    write_dataset_csv(path.string(), ds);
    const SplitDataset back = read_dataset_csv(path.string());
    std::filesystem::remove(path);

    REQUIRE(back.labeled.size() == ds.labeled.size());
    REQUIRE(back.unlabeled_size() == ds.unlabeled_size());
    REQUIRE(back.test.size() == ds.test.size());
    for (std::size_t i = 0; i < ds.labeled.size(); ++i) {
        CHECK(back.labeled[i].x0 == ds.labeled[i].x0);
        CHECK(back.labeled[i].x1 == ds.labeled[i].x1);
        CHECK(back.labeled[i].label == ds.labeled[i].label);
    }
    CHECK(back.unlabeled_x.data() == ds.unlabeled_x.data());
    CHECK(back.unlabeled_hidden == ds.unlabeled_hidden);
}

TEST_CASE("dataset CSV parser rejects malformed input") {
    CHECK_THROWS_AS(parse_dataset_csv("bogus header\n"), IoError);
    CHECK_THROWS_AS(parse_dataset_csv("split,id,x0,x1,label\nlabeled,0,1.0\n"), IoError);
    CHECK_THROWS_AS(parse_dataset_csv("split,id,x0,x1,label\nweird,0,1.0,2.0,0\n"), IoError);
    // Unlabeled ids must form 0..n-1.
    CHECK_THROWS_AS(parse_dataset_csv("split,id,x0,x1,label\nunlabeled,5,1.0,2.0,0\n"), IoError);
}

TEST_CASE("a supervised net on full labels can realize moons and circles") {
    for (const bool moons : {true, false}) {
        const RawDataset raw =
            moons ? gen_moons(1040, 0.1, 21) : gen_circles(1040, 0.1, 21);
        // Train on every point with labels to check the architecture fits.
        std::vector<LabeledPoint> all;
        for (const RawPoint& p : raw) all.push_back({p.x0, p.x1, p.label});
        const LabeledBatch batch = to_batch(all);

        SeededRng rng(33);
        Mlp net = make_mlp({2, 100, 2}, rng);
        AdamState ws[4] = {AdamState(net.layers[0].w.data().size(), 0.01),
                           AdamState(net.layers[0].b.size(), 0.01),
                           AdamState(net.layers[1].w.data().size(), 0.01),
                           AdamState(net.layers[1].b.size(), 0.01)};
        for (int step = 0; step < 400; ++step) {
            const BatchLossGrad lg = loss_and_grad(net, batch.x, batch.labels,
                                                   LossSpec::supervised());
            adam_step(ws[0], net.layers[0].w.data(), lg.grads[0].w.data());
            adam_step(ws[1], net.layers[0].b, lg.grads[0].b);
            adam_step(ws[2], net.layers[1].w.data(), lg.grads[1].w.data());
            adam_step(ws[3], net.layers[1].b, lg.grads[1].b);
        }
        const EvalResult ev = evaluate(net, all);
        INFO((moons ? "moons" : "circles") << " accuracy " << 1.0 - ev.error_rate);
        CHECK(1.0 - ev.error_rate >= 0.97);
    }
}
