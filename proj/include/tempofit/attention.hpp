#pragma once

#include <stdexcept>

#include "tempofit/nn.hpp"
#include "tempofit/tensor.hpp"

namespace tempofit {

// Temporal attention over LSTM outputs H (T, d):
//   A = softmax_t( w_a . relu(W_h h_t + b_h) + b_a )
template <typename S>
struct AttentionParams {
    Tensor<S> wh;  // (d_a, d)
    Tensor<S> bh;  // (d_a)
    Tensor<S> wa;  // (d_a)
    Tensor<S> ba;  // (1)

    std::size_t attn_dim() const { return bh.size(); }
    std::size_t feature_dim() const { return wh.dim(1); }

    static AttentionParams zeros(std::size_t d, std::size_t d_a) {
        return {Tensor<S>({d_a, d}), Tensor<S>({d_a}), Tensor<S>({d_a}), Tensor<S>({1})};
    }
};

template <typename S>
struct AttentionOut {
    Tensor<S> a;       // (T) weights, positive, summing to 1
    Tensor<S> pre;     // (T, d_a) pre-activation W_h h_t + b_h
    Tensor<S> hidden;  // (T, d_a) relu(pre)
};

template <typename S>
AttentionOut<S> temporal_attention(const Tensor<S>& h_all, const AttentionParams<S>& p) {
    if (h_all.rank() != 2) throw std::invalid_argument("temporal_attention expects (T, d)");
    const std::size_t t_len = h_all.dim(0), d = h_all.dim(1);
    const std::size_t d_a = p.attn_dim();
    if (p.feature_dim() != d) throw std::invalid_argument("temporal_attention dimension mismatch");

    AttentionOut<S> out{Tensor<S>({t_len}), Tensor<S>({t_len, d_a}), Tensor<S>({t_len, d_a})};
    Tensor<S> scores({t_len});
    for (std::size_t t = 0; t < t_len; ++t) {
        S score = p.ba[0];
        for (std::size_t r = 0; r < d_a; ++r) {
            S acc = p.bh[r];
            for (std::size_t j = 0; j < d; ++j) acc += p.wh(r, j) * h_all(t, j);
            out.pre(t, r) = acc;
            const S hid = acc > S(0) ? acc : S(0);
            out.hidden(t, r) = hid;
            score += p.wa[r] * hid;
        }
        scores[t] = score;
    }
    out.a = softmax(scores);
    return out;
}

template <typename S>
struct AttentionGrads {
    Tensor<S> dh;  // (T, d)
    AttentionParams<S> dp;
};

template <typename S>
AttentionGrads<S> temporal_attention_backward(const Tensor<S>& h_all, const AttentionParams<S>& p,
                                              const AttentionOut<S>& fwd, const Tensor<S>& da) {
    const std::size_t t_len = h_all.dim(0), d = h_all.dim(1);
    const std::size_t d_a = p.attn_dim();
    AttentionGrads<S> out{Tensor<S>({t_len, d}),
                          AttentionParams<S>::zeros(d, d_a)};

    const Tensor<S> dscores = softmax_backward(fwd.a, da);
    for (std::size_t t = 0; t < t_len; ++t) {
        const S ds = dscores[t];
        out.dp.ba[0] += ds;
        for (std::size_t r = 0; r < d_a; ++r) {
            out.dp.wa[r] += ds * fwd.hidden(t, r);
            const S dhid = ds * p.wa[r];
            const S dpre = fwd.pre(t, r) > S(0) ? dhid : S(0);
            out.dp.bh[r] += dpre;
            for (std::size_t j = 0; j < d; ++j) {
                out.dp.wh(r, j) += dpre * h_all(t, j);
                out.dh(t, j) += p.wh(r, j) * dpre;
            }
        }
    }
    return out;
}

enum class PoolMode { weighted_sum, mean_of_attended };

// weighted_sum: sum_t A_t H_t. mean_of_attended: the same divided by T; the
// downstream dense layer absorbs the constant, so the two are equivalent up
// to reparameterization.
template <typename S>
Tensor<S> attention_pool(const Tensor<S>& h_all, const Tensor<S>& a, PoolMode mode) {
    if (h_all.rank() != 2) throw std::invalid_argument("attention_pool expects (T, d)");
    const std::size_t t_len = h_all.dim(0), d = h_all.dim(1);
    if (a.size() != t_len) throw std::invalid_argument("attention_pool weight length mismatch");
    Tensor<S> ctx({d});
    for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t j = 0; j < d; ++j) ctx[j] += a[t] * h_all(t, j);
    }
    if (mode == PoolMode::mean_of_attended) {
        for (std::size_t j = 0; j < d; ++j) ctx[j] /= S(t_len);
    }
    return ctx;
}

template <typename S>
struct AttentionPoolGrads {
    Tensor<S> dh;  // (T, d)
    Tensor<S> da;  // (T)
};

template <typename S>
AttentionPoolGrads<S> attention_pool_backward(const Tensor<S>& h_all, const Tensor<S>& a,
                                              PoolMode mode, const Tensor<S>& dctx) {
    const std::size_t t_len = h_all.dim(0), d = h_all.dim(1);
    const S scale = mode == PoolMode::mean_of_attended ? S(1) / S(t_len) : S(1);
    AttentionPoolGrads<S> out{Tensor<S>({t_len, d}), Tensor<S>({t_len})};
    for (std::size_t t = 0; t < t_len; ++t) {
        S da_t = S(0);
        for (std::size_t j = 0; j < d; ++j) {
            const S g = dctx[j] * scale;
            out.dh(t, j) = a[t] * g;
            da_t += g * h_all(t, j);
        }
        out.da[t] = da_t;
    }
    return out;
}

}  // namespace tempofit
