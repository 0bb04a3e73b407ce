#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "tempofit/params.hpp"
#include "tempofit/tensor.hpp"

namespace tempofit {

// Adam with bias correction. First/second moments are kept per parameter in
// registration order; non-trainable parameters are never touched.
template <typename S>
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    std::vector<Tensor<S>> m, v;

    static AdamState init(const std::vector<ParamRef<S>>& params) {
        AdamState s;
        s.m.reserve(params.size());
        s.v.reserve(params.size());
        for (const auto& p : params) {
            s.m.emplace_back(p.value->shape());
            s.v.emplace_back(p.value->shape());
        }
        return s;
    }
};

template <typename S>
void adam_step(std::vector<ParamRef<S>>& params, AdamState<S>& state, double lr) {
    if (state.m.size() != params.size()) {
        throw std::invalid_argument("adam state does not match parameter list");
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        ParamRef<S>& p = params[pi];
        if (!p.trainable) continue;
        if (!p.grad->same_shape(*p.value)) {
            throw std::invalid_argument("gradient shape mismatch for " + p.name);
        }
        Tensor<S>& m = state.m[pi];
        Tensor<S>& v = state.v[pi];
        for (std::size_t i = 0; i < p.value->size(); ++i) {
            const S g = (*p.grad)[i];
            m[i] = S(state.beta1) * m[i] + S(1.0 - state.beta1) * g;
            v[i] = S(state.beta2) * v[i] + S(1.0 - state.beta2) * g * g;
            const S mhat = m[i] / S(bc1);
            const S vhat = v[i] / S(bc2);
            (*p.value)[i] -= S(lr) * mhat / (std::sqrt(vhat) + S(state.epsilon));
        }
    }
}

}  // namespace tempofit
