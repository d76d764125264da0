// SPDX-License-Identifier: Apache-2.0
#ifndef WSSL_OBJECTIVE_HPP
#define WSSL_OBJECTIVE_HPP

// The weighted semi-supervised objective: supervised cross-entropy on a
// labeled batch plus per-example-weighted pseudo-label cross-entropy on an
// unlabeled batch. Each term is divided by its own batch size, so weight
// magnitudes are independent of the batch-size ratio.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "wssl/network.hpp"
#include "wssl/optim.hpp"

namespace wssl {

// Per-example weights for the unlabeled set, indexed by example id, together
// with the masked-Adam moment state that updates them.
struct WeightVector {
    std::vector<double> values;
    AdamState opt;

    WeightVector() = default;
    WeightVector(std::size_t n, double init, double step)
        : values(n, init), opt(n, step) {}

    double at(std::size_t id) const {
        if (id >= values.size())
            throw std::invalid_argument("WeightVector: unknown example id " + std::to_string(id));
        return values[id];
    }

    void clamp_non_negative() {
        for (double& v : values)
            if (v < 0.0) v = 0.0;
    }
};

struct LabeledBatch {
    DenseMatrix x;
    std::vector<int> labels;
};

struct UnlabeledBatch {
    DenseMatrix x;
    std::vector<int> ids;  // indices into WeightVector
};

inline double supervised_batch_loss(const Mlp& net, const LabeledBatch& batch) {
    auto [logits, cache] = forward(net, batch.x);
    double sum = 0.0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto [l, g] = softmax_ce(logits.row(r), one_hot(logits.cols(),
                                 static_cast<std::size_t>(batch.labels[r])));
        sum += l;
    }
    return sum / static_cast<double>(logits.rows());
}

// mean_D ce + (1/|U'|) sum_u lambda_u * ce_pseudo(u). An empty unlabeled
// batch degenerates to the supervised loss alone.
inline double combined_loss(const Mlp& net, const LabeledBatch& d_batch,
                            const UnlabeledBatch& u_batch, const WeightVector& weights,
                            double pseudo_threshold = 0.0) {
    double total = supervised_batch_loss(net, d_batch);
    if (u_batch.x.rows() == 0) return total;
    auto [logits, cache] = forward(net, u_batch.x);
    double usum = 0.0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto target = pseudo_label(logits.row(r), pseudo_threshold);
        if (!target) continue;
        auto [l, g] = softmax_ce(logits.row(r), *target);
        usum += weights.at(static_cast<std::size_t>(u_batch.ids[r])) * l;
    }
    return total + usum / static_cast<double>(logits.rows());
}

struct CombinedLossGrad {
    double loss = 0.0;
    Gradients grads;
};

// Loss and full-network gradient of the combined objective in one pass pair.
// Pseudo-label targets are rebuilt from the current logits and treated as
// constants in the backward pass.
inline CombinedLossGrad combined_loss_and_grad(const Mlp& net, const LabeledBatch& d_batch,
                                               const UnlabeledBatch& u_batch,
                                               const WeightVector& weights,
                                               double pseudo_threshold = 0.0) {
    if (d_batch.x.rows() == 0)
        throw std::invalid_argument("combined_loss_and_grad: empty labeled batch");
    auto [logits_d, cache_d] = forward(net, d_batch.x);
    const double inv_d = 1.0 / static_cast<double>(logits_d.rows());
    double loss = 0.0;
    DenseMatrix gz_d(logits_d.rows(), logits_d.cols());
    for (std::size_t r = 0; r < logits_d.rows(); ++r) {
        auto [l, g] = softmax_ce(logits_d.row(r), one_hot(logits_d.cols(),
                                 static_cast<std::size_t>(d_batch.labels[r])));
        loss += l * inv_d;
        for (std::size_t c = 0; c < logits_d.cols(); ++c) gz_d(r, c) = g[c] * inv_d;
    }
    Gradients grads = backprop_from_logit_grads(net, cache_d, gz_d);

    if (u_batch.x.rows() > 0) {
        auto [logits_u, cache_u] = forward(net, u_batch.x);
        const double inv_u = 1.0 / static_cast<double>(logits_u.rows());
        DenseMatrix gz_u(logits_u.rows(), logits_u.cols());
        for (std::size_t r = 0; r < logits_u.rows(); ++r) {
            auto target = pseudo_label(logits_u.row(r), pseudo_threshold);
            if (!target) continue;
            auto [l, g] = softmax_ce(logits_u.row(r), *target);
            const double wu = weights.at(static_cast<std::size_t>(u_batch.ids[r]));
            loss += wu * l * inv_u;
            for (std::size_t c = 0; c < logits_u.cols(); ++c) gz_u(r, c) = wu * g[c] * inv_u;
        }
        const Gradients ugrads = backprop_from_logit_grads(net, cache_u, gz_u);
        for (std::size_t i = 0; i < grads.size(); ++i) {
            for (std::size_t k = 0; k < grads[i].w.data().size(); ++k)
                grads[i].w.data()[k] += ugrads[i].w.data()[k];
            for (std::size_t k = 0; k < grads[i].b.size(); ++k)
                grads[i].b[k] += ugrads[i].b[k];
        }
    }
    return {loss, std::move(grads)};
}

// Binary reparameterization: replaces the two-column last layer
// (theta_1, theta_2) by the single column theta' = (theta_1 - theta_2) / 2
// and flags the net so forward presents logits (f, -f). These are exactly
// the original logits shifted by their common mean, so class probabilities
// are unchanged for every input while the redundant direction disappears.
inline Mlp reparam_binary(const Mlp& net) {
    if (net.binary_reparam)
        throw std::invalid_argument("reparam_binary: network is already reparameterized");
    if (net.output_units() != 2)
        throw std::invalid_argument("reparam_binary: requires exactly 2 output classes, got " +
                                    std::to_string(net.output_units()));
    Mlp out = net;
    const Layer& last = net.layers.back();
    Layer merged;
    merged.w = DenseMatrix(last.w.rows(), 1);
    for (std::size_t j = 0; j < last.w.rows(); ++j)
        merged.w(j, 0) = 0.5 * (last.w(j, 0) - last.w(j, 1));
    merged.b = {0.5 * (last.b[0] - last.b[1])};
    out.layers.back() = std::move(merged);
    out.binary_reparam = true;
    return out;
}

}  // namespace wssl

#endif  // WSSL_OBJECTIVE_HPP
