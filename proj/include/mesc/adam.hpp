#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "mesc/errors.hpp"
#include "mesc/matrix.hpp"

namespace mesc {

/// ADAM hyperparameters. The reference defaults are used throughout.
struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Moment accumulators for one parameter block. Accumulators start at zero and
/// the step counter advances by exactly one per update.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long long step = 0;
    AdamConfig cfg;

    explicit AdamState(std::size_t size = 0, AdamConfig c = {})
        : m(size, 0.0), v(size, 0.0), cfg(c) {}
};

/// One bias-corrected ADAM update, applied elementwise in place. Deterministic:
/// the result is a pure function of (params, grads, state, learning_rate).
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
                      double learning_rate) {
    if (params.size() != grads.size()) {
        throw DimensionError("adam_step: params and grads sizes differ (" +
                             std::to_string(params.size()) + " vs " +
                             std::to_string(grads.size()) + ")");
    }
    if (state.m.size() != params.size()) {
        if (state.step != 0) {
            throw DimensionError("adam_step: state size does not match params");
        }
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (!(learning_rate > 0.0)) throw ValueError("adam_step: learning_rate must be positive");

    state.step += 1;
    const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        const double mhat = state.m[i] / corr1;
        const double vhat = state.v[i] / corr2;
        params[i] -= learning_rate * mhat / (std::sqrt(vhat) + state.cfg.epsilon);
    }
}

inline void adam_step(Matrix& params, const Matrix& grads, AdamState& state,
                      double learning_rate) {
    params.require_same_shape(grads, "adam_step");
    adam_step(std::span<double>(params.data()), std::span<const double>(grads.data()), state,
              learning_rate);
}

}  // namespace mesc
