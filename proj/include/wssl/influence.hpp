// SPDX-License-Identifier: Apache-2.0
#ifndef WSSL_INFLUENCE_HPP
#define WSSL_INFLUENCE_HPP

// Influence of per-example weights on the validation loss, restricted to the
// last layer. The damped Hessian of the combined loss w.r.t. theta-hat is
// assembled analytically from the softmax curvature (a a^T) (x) (diag(p) -
// p p^T), inverse-Hessian-vector products come in exact / identity / Neumann
// flavors, and a score for example u is -g_V^T H^{-1} grad l_U(u). One IHVP
// of the validation gradient is shared across the whole batch; by symmetry
// of H this equals applying the inverse to each per-example gradient.
//
// A retraining oracle is provided for convex instances: perturb one weight
// by epsilon, re-solve to optimality with Newton, and finite-difference the
// validation loss.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wssl/linalg.hpp"
#include "wssl/objective.hpp"

namespace wssl {

class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

struct IhvpMode {
    enum class Variant { exact, identity, neumann };
    Variant variant = Variant::exact;
    int neumann_terms = 10;
    double neumann_scale = 1.0;

    static IhvpMode exact() { return {Variant::exact, 0, 0.0}; }
    static IhvpMode identity() { return {Variant::identity, 0, 0.0}; }
    static IhvpMode neumann(int terms, double scale) {
        if (terms < 1) throw std::invalid_argument("IhvpMode: neumann terms must be >= 1");
        if (scale <= 0.0) throw std::invalid_argument("IhvpMode: neumann scale must be positive");
        return {Variant::neumann, terms, scale};
    }

    std::string name() const {
        switch (variant) {
            case Variant::exact: return "exact";
            case Variant::identity: return "identity";
            default: return "neumann";
        }
    }
};

namespace detail {

// Adds scale * (a_aug a_aug^T) (x) S to H, where a_aug is the last layer's
// input activation augmented with 1 and S is the logit curvature block.
inline void accumulate_example_curvature(DenseMatrix& h, std::span<const double> acts,
                                         std::span<const double> probs, bool reparam,
                                         double scale) {
    const std::size_t hdim = acts.size();
    if (reparam) {
        const double d = probs[0] - probs[1];
        const double s = scale * (1.0 - d * d);  // = 4 p0 p1
        for (std::size_t j = 0; j <= hdim; ++j) {
            const double aj = j < hdim ? acts[j] : 1.0;
            for (std::size_t j2 = 0; j2 <= hdim; ++j2) {
                const double aj2 = j2 < hdim ? acts[j2] : 1.0;
                h(j, j2) += s * aj * aj2;
            }
        }
        return;
    }
    const std::size_t c = probs.size();
    for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t k2 = 0; k2 < c; ++k2) {
            const double skk = scale * ((k == k2 ? probs[k] : 0.0) - probs[k] * probs[k2]);
            if (skk == 0.0) continue;
            for (std::size_t j = 0; j <= hdim; ++j) {
                const double aj = j < hdim ? acts[j] : 1.0;
                for (std::size_t j2 = 0; j2 <= hdim; ++j2) {
                    const double aj2 = j2 < hdim ? acts[j2] : 1.0;
                    h(j * c + k, j2 * c + k2) += skk * aj * aj2;
                }
            }
        }
    }
}

}  // namespace detail

// Damped Hessian of the combined loss w.r.t. theta-hat on the given batches:
// (1/|D'|) sum_D S_x + (1/|U'|) sum_U lambda_u S_u + damping I. Softmax
// cross-entropy curvature does not depend on the target, so pseudo-label
// targets never enter; examples gated out by the confidence threshold
// contribute nothing.
inline DenseMatrix assemble_hessian(const Mlp& net, const LabeledBatch& d_batch,
                                    const UnlabeledBatch& u_batch, const WeightVector& weights,
                                    double damping, double pseudo_threshold = 0.0) {
    if (damping <= 0.0) throw std::invalid_argument("assemble_hessian: damping must be positive");
    if (d_batch.x.rows() == 0) throw std::invalid_argument("assemble_hessian: empty labeled batch");
    const std::size_t dim = net.last_layer_dim();
    DenseMatrix h(dim, dim);

    auto accumulate_batch = [&](const DenseMatrix& x, const char* which, bool unsup) {
        if (x.rows() == 0) return;
        auto [logits, cache] = forward(net, x);
        if (!logits.all_finite())
            throw NumericalError(std::string("assemble_hessian: non-finite logits in the ") +
                                 which + " batch");
        const DenseMatrix& acts = cache.inputs.back();
        const double inv_b = 1.0 / static_cast<double>(x.rows());
        for (std::size_t r = 0; r < x.rows(); ++r) {
            const std::vector<double> p = softmax(logits.row(r));
            double scale = inv_b;
            if (unsup) {
                if (pseudo_threshold > 0.0) {
                    const std::size_t k = argmax_lowest_tie(p);
                    if (p[k] < pseudo_threshold) continue;
                }
                scale *= weights.at(static_cast<std::size_t>(u_batch.ids[r]));
                if (scale == 0.0) continue;
            }
            detail::accumulate_example_curvature(h, acts.row(r), p, net.binary_reparam, scale);
        }
    };
    accumulate_batch(d_batch.x, "labeled", false);
    accumulate_batch(u_batch.x, "unlabeled", true);

    for (std::size_t i = 0; i < dim; ++i) h(i, i) += damping;
    if (!h.all_finite())
        throw NumericalError("assemble_hessian: non-finite entries after accumulation");
    return h;
}

// Largest-eigenvalue estimate by power iteration with a fixed start vector.
inline double estimate_lambda_max(const DenseMatrix& h, int iters = 60) {
    std::vector<double> x(h.rows(), 1.0 / std::sqrt(static_cast<double>(h.rows())));
    double lam = 0.0;
    for (int it = 0; it < iters; ++it) {
        std::vector<double> y = matvec(h, x);
        const double n = l2_norm(y);
        if (n == 0.0) return 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] /= n;
        lam = dot(matvec(h, y), y);
        x = std::move(y);
    }
    return lam;
}

// Inverse-Hessian-vector product in the requested mode. The exact mode is a
// Cholesky solve; identity returns v; Neumann returns the scaled k-term
// partial geometric series, which requires spectral_radius(I - scale H) < 1.
inline std::vector<double> ihvp(const DenseMatrix& h, std::span<const double> v,
                                const IhvpMode& mode) {
    switch (mode.variant) {
        case IhvpMode::Variant::identity:
            return std::vector<double>(v.begin(), v.end());
        case IhvpMode::Variant::exact:
            return solve_spd(h, v);
        case IhvpMode::Variant::neumann: {
            if (mode.neumann_terms < 1)
                throw std::invalid_argument("ihvp: neumann terms must be >= 1");
            if (mode.neumann_scale <= 0.0)
                throw std::invalid_argument("ihvp: neumann scale must be positive");
            std::vector<double> p(v.begin(), v.end());
            std::vector<double> acc(v.begin(), v.end());
            for (int j = 1; j < mode.neumann_terms; ++j) {
                const std::vector<double> hp = matvec(h, p);
                for (std::size_t i = 0; i < p.size(); ++i) {
                    p[i] -= mode.neumann_scale * hp[i];
                    acc[i] += p[i];
                }
            }
            for (double& x : acc) x *= mode.neumann_scale;
            return acc;
        }
    }
    throw std::logic_error("ihvp: unreachable");
}

struct InfluenceReport {
    std::vector<int> batch_ids;
    std::vector<double> scores;  // d L_S(V') / d lambda_u, up to the mode's approximation
    IhvpMode mode;
    std::optional<double> hessian_condition;  // exact mode only
};

// Condition estimate for an already-factorized SPD matrix: power iteration
// for the largest eigenvalue, inverse iteration through the factor for the
// smallest.
inline double estimate_condition(const DenseMatrix& h, const DenseMatrix& chol_factor,
                                 int iters = 40) {
    const double lam_max = estimate_lambda_max(h, iters);
    std::vector<double> x(h.rows(), 1.0 / std::sqrt(static_cast<double>(h.rows())));
    double inv_lam = 0.0;
    for (int it = 0; it < iters; ++it) {
        std::vector<double> y = cholesky_solve(chol_factor, x);
        const double n = l2_norm(y);
        if (n == 0.0) break;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] /= n;
        inv_lam = dot(cholesky_solve(chol_factor, y), y);
        x = std::move(y);
    }
    return inv_lam > 0.0 ? lam_max * inv_lam : std::numeric_limits<double>::infinity();
}

// Influence score of every example in u_batch on the validation loss:
// score_u = -g_V^T ihvp(H, grad l_U(u)). g_V is the mean supervised gradient
// over v_batch; H comes from (d_batch, u_batch, weights, damping). With
// fixed_u_targets the per-example losses use frozen targets instead of live
// pseudo-labels (used by the convex probes).
inline InfluenceReport influence_scores(const Mlp& net, const LabeledBatch& v_batch,
                                        const UnlabeledBatch& u_batch,
                                        const LabeledBatch& d_batch, const WeightVector& weights,
                                        const IhvpMode& mode, double damping,
                                        double pseudo_threshold = 0.0,
                                        const std::vector<int>* fixed_u_targets = nullptr) {
    if (v_batch.x.rows() == 0)
        throw std::invalid_argument("influence_scores: empty validation batch");
    if (u_batch.x.rows() == 0)
        throw std::invalid_argument("influence_scores: empty unlabeled batch");

    // Validation gradient g_V w.r.t. theta-hat.
    auto [logits_v, cache_v] = forward(net, v_batch.x);
    DenseMatrix gz_v(logits_v.rows(), logits_v.cols());
    const double inv_v = 1.0 / static_cast<double>(logits_v.rows());
    for (std::size_t r = 0; r < logits_v.rows(); ++r) {
        auto [l, g] = softmax_ce(logits_v.row(r), one_hot(logits_v.cols(),
                                 static_cast<std::size_t>(v_batch.labels[r])));
        for (std::size_t c = 0; c < logits_v.cols(); ++c) gz_v(r, c) = g[c] * inv_v;
    }
    const std::vector<double> g_v = last_layer_grad_from_logit_grads(net, cache_v, gz_v);

    InfluenceReport report;
    report.batch_ids = u_batch.ids;
    report.mode = mode;

    std::vector<double> w;
    if (mode.variant == IhvpMode::Variant::identity) {
        w = g_v;
    } else {
        const DenseMatrix h = assemble_hessian(net, d_batch, u_batch, weights, damping,
                                               pseudo_threshold);
        if (mode.variant == IhvpMode::Variant::exact) {
            const DenseMatrix factor = cholesky(h);
            w = cholesky_solve(factor, g_v);
            report.hessian_condition = estimate_condition(h, factor);
        } else {
            w = ihvp(h, g_v, mode);
        }
    }

    const LossSpec spec = LossSpec::pseudo(pseudo_threshold);
    const DenseMatrix pe = per_example_last_layer_grads(net, u_batch.x, spec, fixed_u_targets);
    report.scores.resize(pe.rows());
    for (std::size_t r = 0; r < pe.rows(); ++r) report.scores[r] = -dot(w, pe.row(r));
    for (double s : report.scores)
        if (!std::isfinite(s)) throw NumericalError("influence_scores: non-finite score");
    return report;
}

// ---------------------------------------------------------------------------
// Retraining oracle for convex instances.

// A twice-differentiable inner problem that is strictly convex in theta for
// any fixed non-negative lambda, together with the validation objective.
class ConvexInnerProblem {
public:
    virtual ~ConvexInnerProblem() = default;
    virtual std::size_t dim() const = 0;
    virtual double value(std::span<const double> theta, std::span<const double> lambda) const = 0;
    virtual std::vector<double> grad(std::span<const double> theta,
                                     std::span<const double> lambda) const = 0;
    virtual DenseMatrix hessian(std::span<const double> theta,
                                std::span<const double> lambda) const = 0;
    virtual double validation_loss(std::span<const double> theta) const = 0;
};

struct NewtonOptions {
    double grad_tol = 1e-8;
    int max_iters = 200;
};

// Damped-Newton minimization with backtracking; hard error when the gradient
// tolerance is not reached within the iteration budget.
inline std::vector<double> newton_minimize(const ConvexInnerProblem& prob,
                                           std::span<const double> lambda,
                                           std::vector<double> theta,
                                           const NewtonOptions& opts = {}) {
    double f = prob.value(theta, lambda);
    for (int it = 0; it < opts.max_iters; ++it) {
        const std::vector<double> g = prob.grad(theta, lambda);
        if (l2_norm(g) <= opts.grad_tol) return theta;
        const DenseMatrix h = prob.hessian(theta, lambda);
        std::vector<double> step = solve_spd(h, g);
        double t = 1.0;
        for (int bt = 0; bt < 60; ++bt) {
            std::vector<double> cand(theta.size());
            for (std::size_t i = 0; i < theta.size(); ++i) cand[i] = theta[i] - t * step[i];
            const double fc = prob.value(cand, lambda);
            if (fc <= f) {
                theta = std::move(cand);
                f = fc;
                break;
            }
            t *= 0.5;
        }
    }
    const double gnorm = l2_norm(prob.grad(theta, lambda));
    if (gnorm <= opts.grad_tol) return theta;
    throw NumericalError("newton_minimize: gradient norm " + std::to_string(gnorm) +
                         " did not reach tolerance");
}

// Ground-truth influence by retraining: bump lambda_u by epsilon, re-solve to
// optimality, and finite-difference the validation loss.
inline double retraining_oracle(const ConvexInnerProblem& prob, std::span<const double> lambda,
                                std::size_t u, double epsilon,
                                const std::vector<double>* theta_star_hint = nullptr,
                                const NewtonOptions& opts = {}) {
    if (u >= lambda.size()) throw std::invalid_argument("retraining_oracle: bad example index");
    std::vector<double> base(lambda.begin(), lambda.end());
    std::vector<double> theta0 = theta_star_hint ? *theta_star_hint
                                                 : std::vector<double>(prob.dim(), 0.0);
    const std::vector<double> theta_star = newton_minimize(prob, base, theta0, opts);
    const double l0 = prob.validation_loss(theta_star);
    std::vector<double> bumped = base;
    bumped[u] += epsilon;
    const std::vector<double> theta_eps = newton_minimize(prob, bumped, theta_star, opts);
    return (prob.validation_loss(theta_eps) - l0) / epsilon;
}

// ---------------------------------------------------------------------------
// Last-layer probe: the network body is frozen, pseudo-label targets are
// frozen at construction time, and a ridge of damping/2 ||theta||^2 makes the
// problem strictly convex with Hessian exactly equal to assemble_hessian's.

class LastLayerProbe : public ConvexInnerProblem {
public:
    LastLayerProbe(const Mlp& net, LabeledBatch d_batch, DenseMatrix probe_x,
                   std::vector<int> frozen_targets, LabeledBatch v_batch, double damping)
        : net_(net),
          d_batch_(std::move(d_batch)),
          v_batch_(std::move(v_batch)),
          damping_(damping) {
        u_batch_.x = std::move(probe_x);
        u_batch_.ids.resize(u_batch_.x.rows());
        for (std::size_t i = 0; i < u_batch_.ids.size(); ++i)
            u_batch_.ids[i] = static_cast<int>(i);
        targets_ = std::move(frozen_targets);
        if (targets_.size() != u_batch_.x.rows())
            throw std::invalid_argument("LastLayerProbe: targets/probe size mismatch");
    }

    std::size_t dim() const override { return net_.last_layer_dim(); }
    std::size_t probe_size() const { return u_batch_.x.rows(); }
    const UnlabeledBatch& probe_batch() const { return u_batch_; }
    const std::vector<int>& frozen_targets() const { return targets_; }
    const LabeledBatch& labeled_batch() const { return d_batch_; }
    const LabeledBatch& validation_batch() const { return v_batch_; }
    double damping() const { return damping_; }

    Mlp net_at(std::span<const double> theta) const {
        Mlp net = net_;
        net.set_last_layer_flat(theta);
        return net;
    }

    double value(std::span<const double> theta, std::span<const double> lambda) const override {
        const Mlp net = net_at(theta);
        double total = supervised_batch_loss(net, d_batch_);
        auto [logits, cache] = forward(net, u_batch_.x);
        double usum = 0.0;
        for (std::size_t r = 0; r < logits.rows(); ++r) {
            auto [l, g] = softmax_ce(logits.row(r), one_hot(logits.cols(),
                                     static_cast<std::size_t>(targets_[r])));
            usum += lambda[r] * l;
        }
        total += usum / static_cast<double>(logits.rows());
        total += 0.5 * damping_ * dot(theta, theta);
        return total;
    }

    std::vector<double> grad(std::span<const double> theta,
                             std::span<const double> lambda) const override {
        const Mlp net = net_at(theta);
        const LossSpec sup = LossSpec::supervised();
        const DenseMatrix rows_d = per_example_last_layer_grads(net, d_batch_.x, sup,
                                                                &d_batch_.labels);
        const DenseMatrix rows_u = per_example_last_layer_grads(net, u_batch_.x, sup, &targets_);
        std::vector<double> g(dim(), 0.0);
        const double inv_d = 1.0 / static_cast<double>(rows_d.rows());
        for (std::size_t r = 0; r < rows_d.rows(); ++r)
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += inv_d * rows_d(r, i);
        const double inv_u = 1.0 / static_cast<double>(rows_u.rows());
        for (std::size_t r = 0; r < rows_u.rows(); ++r)
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += inv_u * lambda[r] * rows_u(r, i);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += damping_ * theta[i];
        return g;
    }

    DenseMatrix hessian(std::span<const double> theta,
                        std::span<const double> lambda) const override {
        WeightVector w(lambda.size(), 0.0, 0.0);
        w.values.assign(lambda.begin(), lambda.end());
        return assemble_hessian(net_at(theta), d_batch_, u_batch_, w, damping_);
    }

    double validation_loss(std::span<const double> theta) const override {
        return supervised_batch_loss(net_at(theta), v_batch_);
    }

private:
    Mlp net_;
    LabeledBatch d_batch_;
    UnlabeledBatch u_batch_;
    std::vector<int> targets_;
    LabeledBatch v_batch_;
    double damping_;
};

inline double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("pearson: need equal nonempty inputs");
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) return 0.0;
    return cov / std::sqrt(va * vb);
}

// Fraction of positions whose signs match. Magnitudes below deadband_rel
// times the series' own largest magnitude count as zero: the retraining
// oracle resolves a perturbation only down to its solve tolerance, so
// influences that are numerically negligible on both sides agree as
// "no effect" rather than flipping on sub-resolution noise.
inline double sign_agreement(std::span<const double> a, std::span<const double> b,
                             double deadband_rel = 0.0) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("sign_agreement: need equal nonempty inputs");
    double max_a = 0.0, max_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        max_a = std::max(max_a, std::abs(a[i]));
        max_b = std::max(max_b, std::abs(b[i]));
    }
    auto sign_of = [deadband_rel](double x, double scale) {
        if (std::abs(x) <= deadband_rel * scale) return 0;
        return x > 0.0 ? 1 : -1;
    };
    std::size_t agree = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (sign_of(a[i], max_a) == sign_of(b[i], max_b)) ++agree;
    return static_cast<double>(agree) / static_cast<double>(a.size());
}

struct ProbeResult {
    std::vector<int> ids;
    std::vector<double> influence;
    std::vector<double> oracle;
    double pearson = 0.0;
    double sign_agreement = 0.0;
};

// Full probe harness: freeze pseudo-labels at the incoming net, solve the
// convex last-layer problem to optimality, score every probe example with
// the requested IHVP mode, and compare against the retraining oracle.
inline ProbeResult run_influence_probe(const Mlp& net, const LabeledBatch& d_batch,
                                       const LabeledBatch& v_batch, const DenseMatrix& probe_x,
                                       double lambda_init, double epsilon, const IhvpMode& mode,
                                       double damping) {
    auto [logits, cache] = forward(net, probe_x);
    std::vector<int> targets(probe_x.rows());
    for (std::size_t r = 0; r < probe_x.rows(); ++r) {
        auto t = pseudo_label(logits.row(r), 0.0);
        targets[r] = static_cast<int>(argmax_lowest_tie(*t));
    }
    LastLayerProbe probe(net, d_batch, probe_x, targets, v_batch, damping);
    const std::vector<double> lambda(probe.probe_size(), lambda_init);
    const std::vector<double> theta_star =
        newton_minimize(probe, lambda, net.last_layer_flat());

    const Mlp net_star = probe.net_at(theta_star);
    WeightVector weights(lambda.size(), lambda_init, 0.0);
    IhvpMode resolved = mode;
    if (mode.variant == IhvpMode::Variant::neumann && mode.neumann_scale <= 0.0) {
        const DenseMatrix h = probe.hessian(theta_star, lambda);
        resolved.neumann_scale = 1.0 / (1.01 * estimate_lambda_max(h));
    }
    const InfluenceReport report = influence_scores(net_star, v_batch, probe.probe_batch(),
                                                    d_batch, weights, resolved, damping, 0.0,
                                                    &targets);

    ProbeResult result;
    result.ids = report.batch_ids;
    result.influence = report.scores;
    result.oracle.resize(probe.probe_size());
    for (std::size_t u = 0; u < probe.probe_size(); ++u)
        result.oracle[u] = retraining_oracle(probe, lambda, u, epsilon, &theta_star);
    result.pearson = pearson(result.influence, result.oracle);
    result.sign_agreement = sign_agreement(result.influence, result.oracle, 1e-4);
    return result;
}

}  // namespace wssl

#endif  // WSSL_INFLUENCE_HPP
