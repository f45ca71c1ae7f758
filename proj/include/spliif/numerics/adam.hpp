#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "spliif/error.hpp"
#include "spliif/numerics/tensor.hpp"

namespace spliif {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment estimates, one pair per parameter tensor.
template <class T>
struct AdamState {
    std::uint64_t step = 0;
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;
    AdamConfig config;

    AdamState() = default;
    AdamState(const std::vector<Tensor<T>>& params, AdamConfig cfg) : config(cfg) {
        for (const auto& p : params) {
            m.emplace_back(p.shape());
            v.emplace_back(p.shape());
        }
    }
};

/// One bias-corrected Adam update applied in place.
template <class T>
void adam_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads,
               AdamState<T>& state) {
    if (params.size() != grads.size() || params.size() != state.m.size() ||
        params.size() != state.v.size()) {
        throw ContractError("adam_step: parameter, gradient and moment counts differ");
    }
    const AdamConfig& c = state.config;
    if (!(c.lr > 0.0) || !(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0) ||
        !(c.eps > 0.0)) {
        throw ContractError("adam_step: invalid hyperparameters");
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const T bc1 = static_cast<T>(1.0 - std::pow(c.beta1, t));
    const T bc2 = static_cast<T>(1.0 - std::pow(c.beta2, t));
    const T b1 = static_cast<T>(c.beta1);
    const T b2 = static_cast<T>(c.beta2);
    const T lr = static_cast<T>(c.lr);
    const T eps = static_cast<T>(c.eps);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k];
        const auto& g = grads[k];
        auto& m = state.m[k];
        auto& v = state.v[k];
        if (p.shape() != g.shape() || p.shape() != m.shape() || p.shape() != v.shape()) {
            throw DimensionError("adam_step: shape mismatch for parameter " + std::to_string(k) +
                                 ": " + to_string(p.shape()) + " vs gradient " + to_string(g.shape()));
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * g[i];
            v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            const T mhat = m[i] / bc1;
            const T vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

} // namespace spliif
