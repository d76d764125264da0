// SPDX-License-Identifier: Apache-2.0
#ifndef WSSL_OPTIM_HPP
#define WSSL_OPTIM_HPP

// SGD with momentum, Adam, and masked Adam. The masked variant applies
// moment and parameter updates only where the mask is set while keeping a
// single global step counter for bias correction; coordinates outside the
// mask stay bit-identical, state included.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wssl {

struct AdamState {
    std::vector<double> m;  // first moment
    std::vector<double> v;  // second moment
    long t = 0;             // global step counter
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double step_size = 0.001;

    AdamState() = default;
    AdamState(std::size_t n, double step)
        : m(n, 0.0), v(n, 0.0), step_size(step) {}
};

struct SgdState {
    std::vector<double> buf;  // momentum buffer
    double step_size = 0.01;
    double momentum = 0.0;

    SgdState() = default;
    SgdState(std::size_t n, double step, double mom)
        : buf(n, 0.0), step_size(step), momentum(mom) {}
};

inline void check_same_size(std::size_t a, std::size_t b, const char* who) {
    if (a != b)
        throw std::invalid_argument(std::string(who) + ": size mismatch " +
                                    std::to_string(a) + " vs " + std::to_string(b));
}

inline void sgd_step(SgdState& state, std::span<double> params,
                     std::span<const double> grads) {
    check_same_size(params.size(), grads.size(), "sgd_step");
    check_same_size(params.size(), state.buf.size(), "sgd_step");
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.buf[i] = state.momentum * state.buf[i] + grads[i];
        params[i] -= state.step_size * state.buf[i];
    }
}

// Masked Adam. mask[i] == 0 freezes coordinate i entirely for this step;
// the bias corrections still use the shared counter t.
inline void madam_step(AdamState& state, std::span<double> params,
                       std::span<const double> grads,
                       std::span<const std::uint8_t> mask) {
    check_same_size(params.size(), grads.size(), "madam_step");
    check_same_size(params.size(), state.m.size(), "madam_step");
    check_same_size(params.size(), mask.size(), "madam_step");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!mask[i]) continue;
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= state.step_size * mhat / (std::sqrt(vhat) + state.eps);
    }
}

inline void adam_step(AdamState& state, std::span<double> params,
                      std::span<const double> grads) {
    const std::vector<std::uint8_t> all(params.size(), std::uint8_t{1});
    madam_step(state, params, grads, all);
}

// The mask rule from the lambda update: a coordinate participates exactly
// when its current gradient is nonzero.
inline std::vector<std::uint8_t> nonzero_mask(std::span<const double> grads) {
    std::vector<std::uint8_t> mask(grads.size());
    for (std::size_t i = 0; i < grads.size(); ++i) mask[i] = grads[i] != 0.0 ? 1 : 0;
    return mask;
}

}  // namespace wssl

#endif  // WSSL_OPTIM_HPP
