#pragma once

#include <stdexcept>
#include <vector>

#include "tempofit/nn.hpp"
#include "tempofit/tensor.hpp"

namespace tempofit {

// Per-gate weights over the concatenated [x_t; h_{t-1}] vector.
// Each W is (d, d_in + d) with the x block first, each b is (d).
template <typename S>
struct LstmParams {
    Tensor<S> wi, wf, wg, wo;
    Tensor<S> bi, bf, bg, bo;

    std::size_t hidden_dim() const { return bi.size(); }
    std::size_t input_dim() const { return wi.dim(1) - hidden_dim(); }

    static LstmParams zeros(std::size_t d_in, std::size_t d) {
        LstmParams p;
        const Shape wshape{d, d_in + d};
        p.wi = Tensor<S>(wshape);
        p.wf = Tensor<S>(wshape);
        p.wg = Tensor<S>(wshape);
        p.wo = Tensor<S>(wshape);
        p.bi = Tensor<S>({d});
        p.bf = Tensor<S>({d});
        p.bg = Tensor<S>({d});
        p.bo = Tensor<S>({d});
        return p;
    }
};

template <typename S>
struct LstmState {
    Tensor<S> h, c;

    static LstmState zeros(std::size_t d) { return {Tensor<S>({d}), Tensor<S>({d})}; }
};

template <typename S>
struct LstmStepCache {
    Tensor<S> x, h_prev, c_prev;
    Tensor<S> i, f, g, o;   // post-activation gates
    Tensor<S> c, tanh_c;
};

template <typename S>
struct LstmStepOut {
    LstmState<S> state;
    LstmStepCache<S> cache;
};

// i,f,o = sigmoid(W [x; h] + b); g = tanh(W_g [x; h] + b_g);
// c_t = f * c_{t-1} + i * g; h_t = o * tanh(c_t).
template <typename S>
LstmStepOut<S> lstm_step(const Tensor<S>& x, const LstmState<S>& state, const LstmParams<S>& p) {
    const std::size_t d = p.hidden_dim();
    const std::size_t d_in = p.input_dim();
    if (x.size() != d_in) throw std::invalid_argument("lstm_step input dimension mismatch");
    if (state.h.size() != d || state.c.size() != d) {
        throw std::invalid_argument("lstm_step state dimension mismatch");
    }

    Tensor<S> z({d_in + d});
    for (std::size_t j = 0; j < d_in; ++j) z[j] = x[j];
    for (std::size_t j = 0; j < d; ++j) z[d_in + j] = state.h[j];

    auto gate = [&](const Tensor<S>& w, const Tensor<S>& b, std::size_t row) {
        S acc = b[row];
        for (std::size_t j = 0; j < d_in + d; ++j) acc += w(row, j) * z[j];
        return acc;
    };

    LstmStepOut<S> out;
    out.cache.x = x;
    out.cache.h_prev = state.h;
    out.cache.c_prev = state.c;
    out.cache.i = Tensor<S>({d});
    out.cache.f = Tensor<S>({d});
    out.cache.g = Tensor<S>({d});
    out.cache.o = Tensor<S>({d});
    out.cache.c = Tensor<S>({d});
    out.cache.tanh_c = Tensor<S>({d});
    out.state = LstmState<S>::zeros(d);

    for (std::size_t r = 0; r < d; ++r) {
        const S iv = sigmoid(gate(p.wi, p.bi, r));
        const S fv = sigmoid(gate(p.wf, p.bf, r));
        const S gv = std::tanh(gate(p.wg, p.bg, r));
        const S ov = sigmoid(gate(p.wo, p.bo, r));
        const S cv = fv * state.c[r] + iv * gv;
        const S tc = std::tanh(cv);
        out.cache.i[r] = iv;
        out.cache.f[r] = fv;
        out.cache.g[r] = gv;
        out.cache.o[r] = ov;
        out.cache.c[r] = cv;
        out.cache.tanh_c[r] = tc;
        out.state.c[r] = cv;
        out.state.h[r] = ov * tc;
    }
    return out;
}

template <typename S>
struct LstmSeqOut {
    Tensor<S> h_all;                        // (T, d), hidden state at every step
    std::vector<LstmStepCache<S>> caches;
};

// Runs lstm_step from a zero initial state, emitting h_t for every t.
template <typename S>
LstmSeqOut<S> lstm_sequence(const Tensor<S>& xs, const LstmParams<S>& p) {
    if (xs.rank() != 2) throw std::invalid_argument("lstm_sequence expects (T, d_in)");
    const std::size_t t_len = xs.dim(0);
    const std::size_t d_in = xs.dim(1);
    const std::size_t d = p.hidden_dim();
    if (d_in != p.input_dim()) throw std::invalid_argument("lstm_sequence input dimension mismatch");

    LstmSeqOut<S> out;
    out.h_all = Tensor<S>({t_len, d});
    out.caches.reserve(t_len);
    LstmState<S> state = LstmState<S>::zeros(d);
    for (std::size_t t = 0; t < t_len; ++t) {
        Tensor<S> x({d_in});
        for (std::size_t j = 0; j < d_in; ++j) x[j] = xs(t, j);
        LstmStepOut<S> step = lstm_step(x, state, p);
        state = step.state;
        for (std::size_t j = 0; j < d; ++j) out.h_all(t, j) = state.h[j];
        out.caches.push_back(std::move(step.cache));
    }
    return out;
}

template <typename S>
struct LstmGrads {
    Tensor<S> dxs;  // (T, d_in)
    LstmParams<S> dp;
};

// Backpropagation through time. dh_all is the upstream gradient on every
// emitted hidden state (the attention head consumes the full sequence).
template <typename S>
LstmGrads<S> lstm_sequence_backward(const LstmSeqOut<S>& fwd, const LstmParams<S>& p,
                                    const Tensor<S>& dh_all) {
    const std::size_t t_len = fwd.caches.size();
    const std::size_t d = p.hidden_dim();
    const std::size_t d_in = p.input_dim();
    if (!dh_all.same_shape(fwd.h_all)) throw std::invalid_argument("lstm backward gradient shape mismatch");

    LstmGrads<S> out{Tensor<S>({t_len, d_in}), LstmParams<S>::zeros(d_in, d)};
    Tensor<S> dh_next({d}), dc_next({d});

    for (std::size_t ti = t_len; ti-- > 0;) {
        const LstmStepCache<S>& cc = fwd.caches[ti];
        Tensor<S> z({d_in + d});
        for (std::size_t j = 0; j < d_in; ++j) z[j] = cc.x[j];
        for (std::size_t j = 0; j < d; ++j) z[d_in + j] = cc.h_prev[j];

        Tensor<S> dz({d_in + d});
        Tensor<S> dc_prev({d});
        for (std::size_t r = 0; r < d; ++r) {
            const S dh = dh_all(ti, r) + dh_next[r];
            const S dov = dh * cc.tanh_c[r];
            S dcv = dh * cc.o[r] * (S(1) - cc.tanh_c[r] * cc.tanh_c[r]) + dc_next[r];
            const S dfv = dcv * cc.c_prev[r];
            const S div = dcv * cc.g[r];
            const S dgv = dcv * cc.i[r];
            dc_prev[r] = dcv * cc.f[r];

            // pre-activation gradients
            const S dzi = div * cc.i[r] * (S(1) - cc.i[r]);
            const S dzf = dfv * cc.f[r] * (S(1) - cc.f[r]);
            const S dzg = dgv * (S(1) - cc.g[r] * cc.g[r]);
            const S dzo = dov * cc.o[r] * (S(1) - cc.o[r]);

            out.dp.bi[r] += dzi;
            out.dp.bf[r] += dzf;
            out.dp.bg[r] += dzg;
            out.dp.bo[r] += dzo;
            for (std::size_t j = 0; j < d_in + d; ++j) {
                out.dp.wi(r, j) += dzi * z[j];
                out.dp.wf(r, j) += dzf * z[j];
                out.dp.wg(r, j) += dzg * z[j];
                out.dp.wo(r, j) += dzo * z[j];
                dz[j] += p.wi(r, j) * dzi + p.wf(r, j) * dzf + p.wg(r, j) * dzg + p.wo(r, j) * dzo;
            }
        }
        for (std::size_t j = 0; j < d_in; ++j) out.dxs(ti, j) = dz[j];
        for (std::size_t j = 0; j < d; ++j) dh_next[j] = dz[d_in + j];
        dc_next = dc_prev;
    }
    return out;
}

// Parameter count of the gate matrices and biases: 4 * (d * (d_in + d) + d).
inline std::size_t lstm_param_count(std::size_t d_in, std::size_t d) {
    return 4 * (d * (d_in + d) + d);
}

}  // namespace tempofit
