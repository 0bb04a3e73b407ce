#pragma once

#include <string>
#include <vector>

#include "tempofit/rng.hpp"
#include "tempofit/tensor.hpp"

namespace tempofit {

// Non-owning view of one named parameter tensor and its gradient buffer.
// Registration order is the canonical order for initialization, optimizer
// state, and checkpoints.
template <typename S>
struct ParamRef {
    std::string name;
    Tensor<S>* value = nullptr;
    Tensor<S>* grad = nullptr;
    bool trainable = true;
};

template <typename S>
void register_param(std::vector<ParamRef<S>>& out, std::string name, Tensor<S>& value,
                    Tensor<S>& grad, bool trainable) {
    out.push_back(ParamRef<S>{std::move(name), &value, &grad, trainable});
}

// Uniform in [-s, s] with s = 1 / sqrt(fan_in).
template <typename S>
void init_uniform_fan_in(Tensor<S>& t, std::size_t fan_in, Rng& rng) {
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<S>(rng.uniform(-s, s));
}

}  // namespace tempofit
