// SPDX-License-Identifier: Apache-2.0
#ifndef WSSL_LOSS_HPP
#define WSSL_LOSS_HPP

// Softmax cross-entropy and pseudo-label target construction. Pseudo-labels
// are one-hot argmax targets of the current model and are treated as
// constants during differentiation (no gradient flows through them).

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace wssl {

struct LossSpec {
    enum class Kind { supervised_ce, pseudo_label_ce, combined };
    Kind kind = Kind::supervised_ce;
    double pseudo_label_threshold = 0.0;  // 0 disables the confidence gate

    static LossSpec supervised() { return {Kind::supervised_ce, 0.0}; }
    static LossSpec pseudo(double threshold = 0.0) { return {Kind::pseudo_label_ce, threshold}; }
};

// Max-subtracted softmax; survives logits of magnitude ~1e4 without overflow.
inline std::vector<double> softmax(std::span<const double> logits) {
    double m = logits[0];
    for (double z : logits) m = std::max(m, z);
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        p[k] = std::exp(logits[k] - m);
        sum += p[k];
    }
    for (double& x : p) x /= sum;
    return p;
}

inline std::size_t argmax_lowest_tie(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < v.size(); ++k)
        if (v[k] > v[best]) best = k;
    return best;
}

inline void check_one_hot(std::span<const double> target) {
    std::size_t ones = 0;
    for (double t : target) {
        if (t == 1.0)
            ++ones;
        else if (t != 0.0)
            throw std::invalid_argument("softmax_ce: target is not one-hot");
    }
    if (ones != 1) throw std::invalid_argument("softmax_ce: target is not one-hot");
}

// Returns (loss, gradient w.r.t. logits). grad = softmax(logits) - target.
inline std::pair<double, std::vector<double>> softmax_ce(std::span<const double> logits,
                                                         std::span<const double> target_onehot) {
    if (logits.size() != target_onehot.size())
        throw std::invalid_argument("softmax_ce: logits/target length mismatch");
    check_one_hot(target_onehot);
    double m = logits[0];
    for (double z : logits) m = std::max(m, z);
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - m);
    const double lse = m + std::log(sum);
    double loss = 0.0;
    std::vector<double> grad(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) {
        const double p = std::exp(logits[k] - m) / sum;
        grad[k] = p - target_onehot[k];
        if (target_onehot[k] == 1.0) loss = lse - logits[k];
    }
    if (loss < 0.0) loss = 0.0;  // guard against -0 style roundoff
    return {loss, std::move(grad)};
}

// One-hot target at the argmax of softmax(logits); ties break to the lowest
// class index. Absent when the winning probability is below the threshold.
inline std::optional<std::vector<double>> pseudo_label(std::span<const double> logits,
                                                       double threshold) {
    const std::vector<double> p = softmax(logits);
    const std::size_t k = argmax_lowest_tie(p);
    if (p[k] < threshold) return std::nullopt;
    std::vector<double> onehot(logits.size(), 0.0);
    onehot[k] = 1.0;
    return onehot;
}

}  // namespace wssl

#endif  // WSSL_LOSS_HPP
