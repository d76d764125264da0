// SPDX-License-Identifier: Apache-2.0
#ifndef WSSL_TRAINER_HPP
#define WSSL_TRAINER_HPP

// The alternating training loop: a warm-up of model-only steps, then outer
// iterations of N inner model updates followed by one per-example-weight
// update driven by influence scores through masked Adam. Weights are clamped
// to stay non-negative after every update. Runs are bit-reproducible for a
// fixed config: all randomness flows from per-purpose child streams of the
// run seed, so optional consumers never perturb unrelated streams.

#include <chrono>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "wssl/data.hpp"
#include "wssl/influence.hpp"
#include "wssl/objective.hpp"
#include "wssl/optim.hpp"

namespace wssl {

enum class RunMode { per_example, single_lambda, fixed_lambda, supervised_only };

inline std::string run_mode_name(RunMode m) {
    switch (m) {
        case RunMode::per_example: return "per_example";
        case RunMode::single_lambda: return "single_lambda";
        case RunMode::fixed_lambda: return "fixed_lambda";
        case RunMode::supervised_only: return "supervised_only";
    }
    return "?";
}

inline RunMode parse_run_mode(const std::string& s) {
    if (s == "per_example") return RunMode::per_example;
    if (s == "single_lambda") return RunMode::single_lambda;
    if (s == "fixed_lambda") return RunMode::fixed_lambda;
    if (s == "supervised_only") return RunMode::supervised_only;
    throw std::invalid_argument("unknown mode '" + s + "'");
}

struct TrainConfig {
    RunMode mode = RunMode::per_example;
    int inner_steps = 10;        // N
    int outer_iters = 30;
    int warmup_iters = 0;        // model-only steps before the outer loop
    double theta_step = 0.01;    // alpha
    double lambda_step = 0.01;   // eta; 0 disables the outer loop entirely
    int batch_labeled = 10;
    int batch_unlabeled = 250;
    int batch_validation = 256;  // used only when |V| > validation_full_limit
    int validation_full_limit = 1024;
    double lambda_init = 1.0;
    double damping = 1e-3;
    double pseudo_threshold = 0.0;
    std::string ihvp = "exact";  // exact | identity | neumann
    int neumann_terms = 10;
    double neumann_scale = 0.0;  // <= 0: set per step to 1 / lambda_max(H)
    std::string theta_opt = "adam";  // adam | sgd
    double sgd_momentum = 0.9;
    int hidden_dim = 100;
    bool binary_reparam = false;
    std::uint64_t seed = 1;
    int weights_log_stride = 1;        // 0 disables the weight trajectory log
    std::vector<int> snapshot_iters;   // empty: {0, outer/2, outer}

    std::vector<int> resolved_snapshot_iters() const {
        if (!snapshot_iters.empty()) return snapshot_iters;
        return {0, outer_iters / 2, outer_iters};
    }
};

// Collects every violation instead of stopping at the first.
inline std::vector<std::string> validate_config(const TrainConfig& c, const SplitDataset& data) {
    std::vector<std::string> errs;
    if (c.inner_steps < 1) errs.push_back("inner_steps must be >= 1");
    if (c.outer_iters < 1) errs.push_back("outer_iters must be >= 1");
    if (c.warmup_iters < 0) errs.push_back("warmup_iters must be >= 0");
    if (c.theta_step <= 0.0) errs.push_back("theta_step must be > 0");
    if (c.lambda_step < 0.0) errs.push_back("lambda_step must be >= 0");
    if (c.lambda_init < 0.0) errs.push_back("lambda_init must be >= 0");
    if (c.damping <= 0.0) errs.push_back("damping must be > 0");
    if (c.pseudo_threshold < 0.0 || c.pseudo_threshold > 1.0)
        errs.push_back("pseudo_threshold must be in [0,1]");
    if (c.hidden_dim < 1) errs.push_back("hidden_dim must be >= 1");
    if (c.batch_labeled < 1) errs.push_back("batch_labeled must be >= 1");
    if (c.batch_unlabeled < 1) errs.push_back("batch_unlabeled must be >= 1");
    if (c.batch_validation < 1) errs.push_back("batch_validation must be >= 1");
    if (c.ihvp != "exact" && c.ihvp != "identity" && c.ihvp != "neumann")
        errs.push_back("ihvp must be one of exact|identity|neumann");
    if (c.neumann_terms < 1) errs.push_back("neumann_terms must be >= 1");
    if (c.theta_opt != "adam" && c.theta_opt != "sgd")
        errs.push_back("theta_opt must be adam or sgd");
    if (c.weights_log_stride < 0) errs.push_back("weights_log_stride must be >= 0");
    if (static_cast<std::size_t>(c.batch_labeled) > data.labeled.size())
        errs.push_back("batch_labeled exceeds labeled set size " +
                       std::to_string(data.labeled.size()));
    if (static_cast<std::size_t>(c.batch_unlabeled) > data.unlabeled_size())
        errs.push_back("batch_unlabeled exceeds unlabeled set size " +
                       std::to_string(data.unlabeled_size()));
    if (data.validation.size() > static_cast<std::size_t>(c.validation_full_limit) &&
        static_cast<std::size_t>(c.batch_validation) > data.validation.size())
        errs.push_back("batch_validation exceeds validation set size " +
                       std::to_string(data.validation.size()));
    if (data.validation.empty()) errs.push_back("dataset has no validation split");
    if (data.test.empty()) errs.push_back("dataset has no test split");
    if (data.labeled.empty()) errs.push_back("dataset has no labeled split");
    if (data.unlabeled_size() == 0) errs.push_back("dataset has no unlabeled split");
    return errs;
}

// Without-replacement batches within an epoch, reshuffled per epoch.
class BatchSampler {
public:
    BatchSampler(std::size_t n, std::size_t batch, SeededRng rng)
        : n_(n), batch_(batch), rng_(rng), perm_(n), pos_(n) {
        std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    }

    std::vector<std::size_t> next() {
        if (pos_ + batch_ > n_) {
            shuffle(rng_, perm_);
            pos_ = 0;
        }
        std::vector<std::size_t> out(perm_.begin() + pos_, perm_.begin() + pos_ + batch_);
        pos_ += batch_;
        return out;
    }

private:
    std::size_t n_;
    std::size_t batch_;
    SeededRng rng_;
    std::vector<std::size_t> perm_;
    std::size_t pos_;
};

struct EvalResult {
    double loss = 0.0;
    double error_rate = 0.0;
};

inline EvalResult evaluate(const Mlp& net, const std::vector<LabeledPoint>& points) {
    if (points.empty()) throw std::invalid_argument("evaluate: empty dataset");
    const LabeledBatch batch = to_batch(points);
    auto [logits, cache] = forward(net, batch.x);
    double loss = 0.0;
    std::size_t wrong = 0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto [l, g] = softmax_ce(logits.row(r), one_hot(logits.cols(),
                                 static_cast<std::size_t>(batch.labels[r])));
        loss += l;
        if (argmax_lowest_tie(logits.row(r)) != static_cast<std::size_t>(batch.labels[r]))
            ++wrong;
    }
    return {loss / static_cast<double>(points.size()),
            static_cast<double>(wrong) / static_cast<double>(points.size())};
}

struct LogRow {
    int iter = 0;
    double val_loss = 0.0;
    double val_err = 0.0;
    double test_err = 0.0;
    double lambda_mean = 0.0;
    double lambda_min = 0.0;
    double lambda_max = 0.0;
};

struct TrainResult {
    Mlp params;
    WeightVector weights;
    std::vector<LogRow> log;
    double wall_seconds = 0.0;
    std::vector<std::pair<int, Mlp>> snapshots;                      // boundary params
    std::vector<std::pair<int, std::vector<double>>> weight_log;     // lambda trajectories
};

namespace detail {

// One Adam or momentum-SGD state per parameter tensor.
struct ThetaOptimizer {
    bool use_adam = true;
    std::vector<AdamState> adam;
    std::vector<SgdState> sgd;

    ThetaOptimizer(const Mlp& net, const TrainConfig& cfg) {
        use_adam = cfg.theta_opt == "adam";
        for (const Layer& l : net.layers) {
            if (use_adam) {
                adam.emplace_back(l.w.data().size(), cfg.theta_step);
                adam.emplace_back(l.b.size(), cfg.theta_step);
            } else {
                sgd.emplace_back(l.w.data().size(), cfg.theta_step, cfg.sgd_momentum);
                sgd.emplace_back(l.b.size(), cfg.theta_step, cfg.sgd_momentum);
            }
        }
    }

    void step(Mlp& net, const Gradients& grads) {
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            Layer& l = net.layers[i];
            if (use_adam) {
                adam_step(adam[2 * i], l.w.data(), grads[i].w.data());
                adam_step(adam[2 * i + 1], l.b, grads[i].b);
            } else {
                sgd_step(sgd[2 * i], l.w.data(), grads[i].w.data());
                sgd_step(sgd[2 * i + 1], l.b, grads[i].b);
            }
        }
    }
};

inline LabeledBatch gather_labeled(const std::vector<LabeledPoint>& pts,
                                   const std::vector<std::size_t>& idx) {
    LabeledBatch b;
    b.x = DenseMatrix(idx.size(), 2);
    b.labels.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        b.x(i, 0) = pts[idx[i]].x0;
        b.x(i, 1) = pts[idx[i]].x1;
        b.labels[i] = pts[idx[i]].label;
    }
    return b;
}

inline UnlabeledBatch gather_unlabeled(const DenseMatrix& ux,
                                       const std::vector<std::size_t>& idx) {
    UnlabeledBatch b;
    b.x = DenseMatrix(idx.size(), 2);
    b.ids.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        b.x(i, 0) = ux(idx[i], 0);
        b.x(i, 1) = ux(idx[i], 1);
        b.ids[i] = static_cast<int>(idx[i]);
    }
    return b;
}

}  // namespace detail

// Algorithm: warm-up; then per outer iteration, N inner steps
// theta <- theta - alpha grad L(D', U', theta, Lambda), a fresh batch triple,
// influence scores for the sampled unlabeled batch, and a masked-Adam update
// lambda_u <- lambda_u - eta * score followed by a clamp to >= 0.
inline TrainResult train(const TrainConfig& config, const SplitDataset& data) {
    {
        const std::vector<std::string> errs = validate_config(config, data);
        if (!errs.empty()) {
            std::string msg = "invalid config:";
            for (const std::string& e : errs) msg += "\n  - " + e;
            throw std::invalid_argument(msg);
        }
    }
    const auto t_start = std::chrono::steady_clock::now();

    const bool outer_enabled = (config.mode == RunMode::per_example ||
                                config.mode == RunMode::single_lambda) &&
                               config.lambda_step > 0.0;
    const bool single = config.mode == RunMode::single_lambda;
    const double lambda_init =
        config.mode == RunMode::supervised_only ? 0.0 : config.lambda_init;

    SeededRng master(config.seed);
    SeededRng rng_init = master.fork();
    SeededRng rng_d = master.fork();
    SeededRng rng_u = master.fork();
    SeededRng rng_v = master.fork();

    Mlp net = make_mlp({2, static_cast<std::size_t>(config.hidden_dim), 2}, rng_init);
    if (config.binary_reparam) net = reparam_binary(net);
    detail::ThetaOptimizer theta_opt(net, config);

    const std::size_t n_u = data.unlabeled_size();
    WeightVector weights(n_u, lambda_init, config.lambda_step);
    AdamState single_state(1, config.lambda_step);
    std::vector<double> single_lambda_value(1, lambda_init);

    BatchSampler sampler_d(data.labeled.size(), config.batch_labeled, rng_d);
    BatchSampler sampler_u(n_u, config.batch_unlabeled, rng_u);

    const bool full_validation =
        data.validation.size() <= static_cast<std::size_t>(config.validation_full_limit);
    const LabeledBatch full_v = to_batch(data.validation);

    TrainResult result;
    const std::vector<int> snap_iters = config.resolved_snapshot_iters();
    auto maybe_snapshot = [&](int iter) {
        for (int s : snap_iters)
            if (s == iter) {
                result.snapshots.emplace_back(iter, net);
                break;
            }
    };
    auto maybe_log_weights = [&](int iter) {
        if (config.weights_log_stride <= 0) return;
        if (iter % config.weights_log_stride == 0 || iter == config.outer_iters)
            result.weight_log.emplace_back(iter, weights.values);
    };

    auto inner_step = [&](int outer_iter, int step_idx) {
        const LabeledBatch d = detail::gather_labeled(data.labeled, sampler_d.next());
        const UnlabeledBatch u = detail::gather_unlabeled(data.unlabeled_x, sampler_u.next());
        CombinedLossGrad lg =
            combined_loss_and_grad(net, d, u, weights, config.pseudo_threshold);
        if (!std::isfinite(lg.loss))
            throw NumericalError("non-finite training loss at outer iteration " +
                                 std::to_string(outer_iter) + ", inner step " +
                                 std::to_string(step_idx));
        theta_opt.step(net, lg.grads);
    };

    for (int w = 0; w < config.warmup_iters; ++w) inner_step(0, w);
    maybe_snapshot(0);
    maybe_log_weights(0);

    for (int it = 1; it <= config.outer_iters; ++it) {
        for (int s = 0; s < config.inner_steps; ++s) inner_step(it, s);

        if (outer_enabled) {
            const LabeledBatch d2 = detail::gather_labeled(data.labeled, sampler_d.next());
            const UnlabeledBatch u2 = detail::gather_unlabeled(data.unlabeled_x,
                                                               sampler_u.next());
            LabeledBatch v2;
            if (full_validation) {
                v2 = full_v;
            } else {
                std::vector<std::size_t> all(data.validation.size());
                std::iota(all.begin(), all.end(), std::size_t{0});
                shuffle(rng_v, all);
                all.resize(static_cast<std::size_t>(config.batch_validation));
                v2 = detail::gather_labeled(data.validation, all);
            }

            IhvpMode mode = IhvpMode::exact();
            if (config.ihvp == "identity") mode = IhvpMode::identity();
            if (config.ihvp == "neumann") {
                double scale = config.neumann_scale;
                if (scale <= 0.0) {
                    const DenseMatrix h = assemble_hessian(net, d2, u2, weights, config.damping,
                                                           config.pseudo_threshold);
                    scale = 1.0 / (1.01 * estimate_lambda_max(h));
                }
                mode = IhvpMode::neumann(config.neumann_terms, scale);
            }

            InfluenceReport report;
            try {
                report = influence_scores(net, v2, u2, d2, weights, mode, config.damping,
                                          config.pseudo_threshold);
            } catch (const NotPositiveDefinite& e) {
                throw NotPositiveDefinite("outer iteration " + std::to_string(it) + ": " +
                                          e.what());
            } catch (const NumericalError& e) {
                throw NumericalError("outer iteration " + std::to_string(it) + ": " + e.what());
            }

            if (single) {
                // Shared weight: its hypergradient is the sum of the
                // per-example scores in the sampled batch.
                double total = 0.0;
                for (double s : report.scores) total += s;
                const std::vector<double> g{total};
                madam_step(single_state, single_lambda_value, g, nonzero_mask(g));
                if (single_lambda_value[0] < 0.0) single_lambda_value[0] = 0.0;
                weights.values.assign(n_u, single_lambda_value[0]);
            } else {
                std::vector<double> g(n_u, 0.0);
                for (std::size_t i = 0; i < report.batch_ids.size(); ++i)
                    g[static_cast<std::size_t>(report.batch_ids[i])] = report.scores[i];
                madam_step(weights.opt, weights.values, g, nonzero_mask(g));
                weights.clamp_non_negative();
            }
        }

        const EvalResult val = evaluate(net, data.validation);
        const EvalResult test = evaluate(net, data.test);
        double lmin = weights.values[0], lmax = weights.values[0], lsum = 0.0;
        for (double v : weights.values) {
            lmin = std::min(lmin, v);
            lmax = std::max(lmax, v);
            lsum += v;
        }
        result.log.push_back({it, val.loss, val.error_rate, test.error_rate,
                              lsum / static_cast<double>(n_u), lmin, lmax});
        maybe_snapshot(it);
        maybe_log_weights(it);
    }

    result.params = std::move(net);
    result.weights = std::move(weights);
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

inline TrainResult train_single_lambda(const TrainConfig& config, const SplitDataset& data) {
    if (config.mode != RunMode::single_lambda)
        throw std::invalid_argument("train_single_lambda: config.mode must be single_lambda");
    return train(config, data);
}

struct LambdaAgreement {
    double mean_correct = 0.0;    // mean lambda where pseudo-label == hidden label
    double mean_incorrect = 0.0;  // mean lambda where they disagree
    std::size_t n_correct = 0;
    std::size_t n_incorrect = 0;
};

// Analysis-only: compares the model's current pseudo-labels on the unlabeled
// set against the hidden ground truth. This is the one place the hidden
// labels are read.
inline LambdaAgreement pseudo_label_agreement(const Mlp& net, const SplitDataset& data,
                                              const WeightVector& weights) {
    if (data.unlabeled_size() == 0)
        throw std::invalid_argument("pseudo_label_agreement: no unlabeled data");
    auto [logits, cache] = forward(net, data.unlabeled_x);
    LambdaAgreement out;
    double sum_c = 0.0, sum_i = 0.0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const bool correct = argmax_lowest_tie(logits.row(r)) ==
                             static_cast<std::size_t>(data.unlabeled_hidden[r]);
        if (correct) {
            sum_c += weights.values[r];
            ++out.n_correct;
        } else {
            sum_i += weights.values[r];
            ++out.n_incorrect;
        }
    }
    out.mean_correct = out.n_correct ? sum_c / static_cast<double>(out.n_correct) : 0.0;
    out.mean_incorrect = out.n_incorrect ? sum_i / static_cast<double>(out.n_incorrect) : 0.0;
    return out;
}

}  // namespace wssl

#endif  // WSSL_TRAINER_HPP
