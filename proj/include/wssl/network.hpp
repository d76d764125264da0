// SPDX-License-Identifier: Apache-2.0
#ifndef WSSL_NETWORK_HPP
#define WSSL_NETWORK_HPP

// Fully-connected network with rectifier activations between layers and an
// identity output. Besides batched forward/backward this provides the
// batched per-example gradient of the last layer: one forward pass yields
// every example's logit gradient, and the per-example parameter gradients
// follow from outer products with the cached input activations of the last
// layer. No backpropagation through the earlier layers is needed for that.
//
// The batched entry points come in two flavors: a convenience form that
// allocates its result, and an _into form that reuses caller-owned buffers
// so tight loops do not churn multi-hundred-kilobyte allocations.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wssl/linalg.hpp"
#include "wssl/loss.hpp"
#include "wssl/rng.hpp"

namespace wssl {

struct Layer {
    DenseMatrix w;          // (in x out)
    std::vector<double> b;  // (out)
};

using Gradients = std::vector<Layer>;  // same shapes as the parameters

// When binary_reparam is set the last layer has a single output column
// theta' and the two presented logits are (f, -f) with f = x . theta'. This
// halves the last-layer dimension and removes the redundant direction that
// makes the plain two-logit Hessian singular.
struct Mlp {
    std::vector<Layer> layers;
    bool binary_reparam = false;

    std::size_t input_dim() const { return layers.front().w.rows(); }
    std::size_t output_units() const { return layers.back().w.cols(); }
    std::size_t num_classes() const { return binary_reparam ? 2 : output_units(); }
    std::size_t last_in_dim() const { return layers.back().w.rows(); }

    // Dimension of theta-hat, the flattened last layer including its bias.
    std::size_t last_layer_dim() const { return (last_in_dim() + 1) * output_units(); }

    // Flat view of the last layer: index (j, k) -> j * out + k, with j equal
    // to last_in_dim() addressing the bias row.
    std::vector<double> last_layer_flat() const {
        const Layer& l = layers.back();
        std::vector<double> out(last_layer_dim());
        const std::size_t c = l.w.cols();
        for (std::size_t j = 0; j < l.w.rows(); ++j)
            for (std::size_t k = 0; k < c; ++k) out[j * c + k] = l.w(j, k);
        for (std::size_t k = 0; k < c; ++k) out[l.w.rows() * c + k] = l.b[k];
        return out;
    }

    void set_last_layer_flat(std::span<const double> theta) {
        Layer& l = layers.back();
        if (theta.size() != last_layer_dim())
            throw std::invalid_argument("set_last_layer_flat: length mismatch");
        const std::size_t c = l.w.cols();
        for (std::size_t j = 0; j < l.w.rows(); ++j)
            for (std::size_t k = 0; k < c; ++k) l.w(j, k) = theta[j * c + k];
        for (std::size_t k = 0; k < c; ++k) l.b[k] = theta[l.w.rows() * c + k];
    }
};

// Weights N(0, 1/sqrt(fan_in)), biases zero.
inline Mlp make_mlp(const std::vector<std::size_t>& dims, SeededRng& rng) {
    if (dims.size() < 2) throw std::invalid_argument("make_mlp: need at least two dims");
    Mlp net;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        Layer layer;
        layer.w = DenseMatrix(dims[i], dims[i + 1]);
        const double std = 1.0 / std::sqrt(static_cast<double>(dims[i]));
        for (double& x : layer.w.data()) x = rng.normal(0.0, std);
        layer.b.assign(dims[i + 1], 0.0);
        net.layers.push_back(std::move(layer));
    }
    return net;
}

inline Gradients zero_gradients(const Mlp& net) {
    Gradients g;
    for (const Layer& l : net.layers)
        g.push_back({DenseMatrix(l.w.rows(), l.w.cols()), std::vector<double>(l.b.size(), 0.0)});
    return g;
}

// Activations needed for backward: inputs[i] feeds layer i (inputs[0] is the
// batch, later entries the rectified activations). A rectified activation of
// exactly zero marks a blocked unit, which doubles as the rectifier-mask in
// the backward pass (the derivative at zero is defined as zero).
struct ForwardCache {
    std::vector<DenseMatrix> inputs;
    DenseMatrix reparam_raw;  // single-column output, reparameterized nets only
};

namespace detail {

// out = x w + b, reusing out's storage. Narrow inputs (the 2-feature first
// layer) take a fused single-pass path.
inline void affine_into(const DenseMatrix& x, const DenseMatrix& w,
                        const std::vector<double>& b, DenseMatrix& out) {
    out.resize(x.rows(), w.cols());
    const std::size_t in = x.cols();
    const std::size_t cols = w.cols();
    if (in == 2) {
        const double* w0 = w.row(0).data();
        const double* w1 = w.row(1).data();
        for (std::size_t i = 0; i < x.rows(); ++i) {
            const double x0 = x(i, 0);
            const double x1 = x(i, 1);
            double* orow = out.row(i).data();
            for (std::size_t j = 0; j < cols; ++j) orow[j] = b[j] + x0 * w0[j] + x1 * w1[j];
        }
        return;
    }
    if (cols <= 2) {
        for (std::size_t i = 0; i < x.rows(); ++i) {
            const double* xrow = x.row(i).data();
            double* orow = out.row(i).data();
            double s0 = b[0];
            double s1 = cols == 2 ? b[1] : 0.0;
            const double* wd = w.data().data();
            if (cols == 2) {
                for (std::size_t k = 0; k < in; ++k) {
                    s0 += xrow[k] * wd[2 * k];
                    s1 += xrow[k] * wd[2 * k + 1];
                }
                orow[0] = s0;
                orow[1] = s1;
            } else {
                for (std::size_t k = 0; k < in; ++k) s0 += xrow[k] * wd[k];
                orow[0] = s0;
            }
        }
        return;
    }
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* xrow = x.row(i).data();
        double* orow = out.row(i).data();
        for (std::size_t j = 0; j < cols; ++j) orow[j] = b[j];
        for (std::size_t k = 0; k < in; ++k) {
            const double xik = xrow[k];
            const double* wrow = w.row(k).data();
            for (std::size_t j = 0; j < cols; ++j) orow[j] += xik * wrow[j];
        }
    }
}

}  // namespace detail

// Batched forward pass into caller-owned buffers. logits has one column per
// presented class: (f, -f) for reparameterized nets.
inline void forward_into(const Mlp& net, const DenseMatrix& x_batch, ForwardCache& cache,
                         DenseMatrix& logits) {
    if (x_batch.cols() != net.input_dim())
        throw std::invalid_argument("forward: input is " + shape_str(x_batch) +
                                    " but the network expects " +
                                    std::to_string(net.input_dim()) + " features");
    const std::size_t n_layers = net.layers.size();
    cache.inputs.resize(n_layers);
    cache.inputs[0] = x_batch;
    for (std::size_t i = 0; i + 1 < n_layers; ++i) {
        detail::affine_into(cache.inputs[i], net.layers[i].w, net.layers[i].b,
                            cache.inputs[i + 1]);
        for (double& v : cache.inputs[i + 1].data())
            if (v <= 0.0) v = 0.0;  // rectifier; derivative at 0 defined as 0
    }
    const Layer& last = net.layers.back();
    if (!net.binary_reparam) {
        detail::affine_into(cache.inputs.back(), last.w, last.b, logits);
        return;
    }
    if (last.w.cols() != 1)
        throw std::invalid_argument("forward: reparameterized net must have one output unit");
    detail::affine_into(cache.inputs.back(), last.w, last.b, cache.reparam_raw);
    logits.resize(x_batch.rows(), 2);
    for (std::size_t r = 0; r < x_batch.rows(); ++r) {
        logits(r, 0) = cache.reparam_raw(r, 0);
        logits(r, 1) = -cache.reparam_raw(r, 0);
    }
}

// Returns logits (batch x num_classes) and the cache needed for backward.
inline std::pair<DenseMatrix, ForwardCache> forward(const Mlp& net, const DenseMatrix& x_batch) {
    ForwardCache cache;
    DenseMatrix logits;
    forward_into(net, x_batch, cache, logits);
    return {std::move(logits), std::move(cache)};
}

// Full-network gradients from per-example logit gradients (batch x classes).
inline Gradients backprop_from_logit_grads(const Mlp& net, const ForwardCache& cache,
                                           const DenseMatrix& dlogits) {
    Gradients grads = zero_gradients(net);
    DenseMatrix delta;
    if (net.binary_reparam) {
        delta = DenseMatrix(dlogits.rows(), 1);
        for (std::size_t r = 0; r < dlogits.rows(); ++r)
            delta(r, 0) = dlogits(r, 0) - dlogits(r, 1);
    } else {
        delta = dlogits;
    }
    for (std::size_t i = net.layers.size(); i-- > 0;) {
        const Layer& l = net.layers[i];
        grads[i].w = matmul(cache.inputs[i].transposed(), delta);
        for (std::size_t r = 0; r < delta.rows(); ++r)
            for (std::size_t c = 0; c < delta.cols(); ++c) grads[i].b[c] += delta(r, c);
        if (i == 0) break;
        DenseMatrix dprev = matmul(delta, l.w.transposed());
        const DenseMatrix& acts = cache.inputs[i];
        for (std::size_t r = 0; r < dprev.rows(); ++r)
            for (std::size_t c = 0; c < dprev.cols(); ++c)
                if (acts(r, c) == 0.0) dprev(r, c) = 0.0;  // blocked rectifier unit
        delta = std::move(dprev);
    }
    return grads;
}

inline std::vector<double> one_hot(std::size_t num_classes, std::size_t k) {
    std::vector<double> v(num_classes, 0.0);
    v.at(k) = 1.0;
    return v;
}

// Per-example logit gradients of the unweighted per-example loss. A row is
// zero when a pseudo-label falls below the confidence threshold. fixed_targets
// overrides target construction (supervised labels or frozen pseudo-labels).
inline void per_example_logit_grads_into(const DenseMatrix& logits, const LossSpec& spec,
                                         const std::vector<int>* fixed_targets, DenseMatrix& gz,
                                         double* total_loss = nullptr) {
    const std::size_t batch = logits.rows();
    const std::size_t classes = logits.cols();
    if (!fixed_targets && spec.kind != LossSpec::Kind::pseudo_label_ce)
        throw std::invalid_argument("per_example_logit_grads: supervised loss needs targets");
    gz.resize(batch, classes);
    double loss_sum = 0.0;
    // Allocation-free row loop: grad = softmax - one_hot(target), written in
    // place, with the softmax computed once per row.
    for (std::size_t r = 0; r < batch; ++r) {
        const std::span<const double> z = logits.row(r);
        double m = z[0];
        for (double v : z) m = std::max(m, v);
        double* grow = gz.row(r).data();
        double sum = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            grow[c] = std::exp(z[c] - m);
            sum += grow[c];
        }
        std::size_t target;
        if (fixed_targets) {
            target = static_cast<std::size_t>((*fixed_targets)[r]);
            if (target >= classes)
                throw std::invalid_argument("per_example_logit_grads: target out of range");
        } else {
            target = argmax_lowest_tie(z);  // softmax is monotone in the logits
            if (spec.pseudo_label_threshold > 0.0 &&
                grow[target] / sum < spec.pseudo_label_threshold) {
                for (std::size_t c = 0; c < classes; ++c) grow[c] = 0.0;
                continue;  // below threshold: zero loss, zero gradient
            }
        }
        for (std::size_t c = 0; c < classes; ++c) grow[c] /= sum;
        grow[target] -= 1.0;
        loss_sum += std::max(0.0, m + std::log(sum) - z[target]);
    }
    if (total_loss) *total_loss = loss_sum;
}

inline DenseMatrix per_example_logit_grads(const DenseMatrix& logits, const LossSpec& spec,
                                           const std::vector<int>* fixed_targets,
                                           double* total_loss = nullptr) {
    DenseMatrix gz;
    per_example_logit_grads_into(logits, spec, fixed_targets, gz, total_loss);
    return gz;
}

struct BatchLossGrad {
    double loss = 0.0;
    Gradients grads;
};

// Mean loss over the batch and its gradient in parameter shapes.
// supervised_ce requires labels; pseudo_label_ce builds targets from the
// current logits (constants under differentiation).
inline BatchLossGrad loss_and_grad(const Mlp& net, const DenseMatrix& x_batch,
                                   const std::vector<int>& labels, const LossSpec& spec) {
    if (x_batch.rows() == 0) throw std::invalid_argument("loss_and_grad: empty batch");
    if (spec.kind == LossSpec::Kind::combined)
        throw std::invalid_argument("loss_and_grad: combined loss needs weights; see combined_loss");
    const bool supervised = spec.kind == LossSpec::Kind::supervised_ce;
    if (supervised && labels.size() != x_batch.rows())
        throw std::invalid_argument("loss_and_grad: labels/batch size mismatch");
    auto [logits, cache] = forward(net, x_batch);
    double loss_sum = 0.0;
    DenseMatrix gz = per_example_logit_grads(logits, spec, supervised ? &labels : nullptr,
                                             &loss_sum);
    const double inv_b = 1.0 / static_cast<double>(x_batch.rows());
    for (double& v : gz.data()) v *= inv_b;
    return {loss_sum * inv_b, backprop_from_logit_grads(net, cache, gz)};
}

// Summed theta-hat gradient from already-scaled logit gradients.
inline std::vector<double> last_layer_grad_from_logit_grads(const Mlp& net,
                                                            const ForwardCache& cache,
                                                            const DenseMatrix& dlogits) {
    const std::size_t h = net.last_in_dim();
    const std::size_t c = net.output_units();
    const DenseMatrix& acts = cache.inputs.back();
    std::vector<double> g((h + 1) * c, 0.0);
    for (std::size_t r = 0; r < dlogits.rows(); ++r) {
        double fbuf[1];
        std::span<const double> gz;
        if (net.binary_reparam) {
            fbuf[0] = dlogits(r, 0) - dlogits(r, 1);
            gz = {fbuf, 1};
        } else {
            gz = dlogits.row(r);
        }
        std::span<const double> a = acts.row(r);
        for (std::size_t j = 0; j < h; ++j)
            for (std::size_t k = 0; k < c; ++k) g[j * c + k] += a[j] * gz[k];
        for (std::size_t k = 0; k < c; ++k) g[h * c + k] += gz[k];
    }
    return g;
}

// Reusable buffers for the batched per-example gradient computation.
struct PerExampleWorkspace {
    ForwardCache cache;
    DenseMatrix logits;
    DenseMatrix logit_grads;
};

// Row u is the gradient of the unweighted per-example loss w.r.t. theta-hat,
// computed for the whole batch from a single forward pass. Rows sum (with
// per-example weights applied) to the batched weighted gradient.
inline void per_example_last_layer_grads_into(const Mlp& net, const DenseMatrix& u_batch,
                                              const LossSpec& spec,
                                              const std::vector<int>* fixed_targets,
                                              PerExampleWorkspace& ws, DenseMatrix& rows) {
    if (u_batch.rows() == 0)
        throw std::invalid_argument("per_example_last_layer_grads: empty batch");
    forward_into(net, u_batch, ws.cache, ws.logits);
    per_example_logit_grads_into(ws.logits, spec, fixed_targets, ws.logit_grads);
    const std::size_t h = net.last_in_dim();
    const std::size_t c = net.output_units();
    const DenseMatrix& acts = ws.cache.inputs.back();
    rows.resize(u_batch.rows(), (h + 1) * c);
    for (std::size_t r = 0; r < u_batch.rows(); ++r) {
        const double* a = acts.row(r).data();
        double* out = rows.row(r).data();
        if (net.binary_reparam) {
            const double gf = ws.logit_grads(r, 0) - ws.logit_grads(r, 1);
            for (std::size_t j = 0; j < h; ++j) out[j] = a[j] * gf;
            out[h] = gf;
        } else if (c == 2) {
            const double g0 = ws.logit_grads(r, 0);
            const double g1 = ws.logit_grads(r, 1);
            for (std::size_t j = 0; j < h; ++j) {
                out[2 * j] = a[j] * g0;
                out[2 * j + 1] = a[j] * g1;
            }
            out[2 * h] = g0;
            out[2 * h + 1] = g1;
        } else {
            const double* g = ws.logit_grads.row(r).data();
            for (std::size_t j = 0; j < h; ++j)
                for (std::size_t k = 0; k < c; ++k) out[j * c + k] = a[j] * g[k];
            for (std::size_t k = 0; k < c; ++k) out[h * c + k] = g[k];
        }
    }
}

inline DenseMatrix per_example_last_layer_grads(const Mlp& net, const DenseMatrix& u_batch,
                                                const LossSpec& spec,
                                                const std::vector<int>* fixed_targets = nullptr) {
    PerExampleWorkspace ws;
    DenseMatrix rows;
    per_example_last_layer_grads_into(net, u_batch, spec, fixed_targets, ws, rows);
    return rows;
}

}  // namespace wssl

#endif  // WSSL_NETWORK_HPP
