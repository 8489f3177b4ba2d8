#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "acnn/errors.hpp"
#include "acnn/tensor.hpp"

namespace acnn {

// Named tensor table; std::map keeps iteration order deterministic.
template <typename Scalar>
using ParamTable = std::map<std::string, Tensor<Scalar>>;

template <typename Scalar>
struct OptimizerState {
    ParamTable<Scalar> m;  // first moments
    ParamTable<Scalar> v;  // second moments
    std::int64_t step = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One bias-corrected Adam update across the whole parameter table.
template <typename Scalar>
void adam_step(ParamTable<Scalar>& params, const ParamTable<Scalar>& grads,
               OptimizerState<Scalar>& state) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (auto& [name, p] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) throw InvalidArgument("adam_step: missing gradient for " + name);
        const Tensor<Scalar>& g = git->second;
        if (!g.same_shape(p)) throw ShapeError("adam_step: gradient shape mismatch for " + name);
        Tensor<Scalar>& m = state.m.try_emplace(name, Tensor<Scalar>::zeros_like(p)).first->second;
        Tensor<Scalar>& v = state.v.try_emplace(name, Tensor<Scalar>::zeros_like(p)).first->second;
        for (std::int64_t i = 0; i < p.numel(); ++i) {
            const double gi = static_cast<double>(g[i]);
            const double mi = state.beta1 * static_cast<double>(m[i]) + (1.0 - state.beta1) * gi;
            const double vi = state.beta2 * static_cast<double>(v[i]) + (1.0 - state.beta2) * gi * gi;
            m[i] = static_cast<Scalar>(mi);
            v[i] = static_cast<Scalar>(vi);
            const double update = state.learning_rate * (mi / bc1) / (std::sqrt(vi / bc2) + state.eps);
            p[i] = static_cast<Scalar>(static_cast<double>(p[i]) - update);
        }
    }
}

// Step-decayed learning rate: lr * decay^(epoch / interval).
inline double decayed_learning_rate(double base_lr, double decay_rate, int decay_every,
                                    int epoch) {
    if (decay_every <= 0) return base_lr;
    return base_lr * std::pow(decay_rate, static_cast<double>(epoch / decay_every));
}

}  // namespace acnn
