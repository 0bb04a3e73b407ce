#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "tempofit/nn.hpp"
#include "tempofit/tensor.hpp"

namespace tempofit {

// Splits an (H,W,C) frame into non-overlapping p x p patches, row-major patch
// order, each patch flattened row-major to a row of the result.
template <typename S>
Tensor<S> patchify(const Tensor<S>& x, std::size_t p) {
    if (x.rank() != 3) throw std::invalid_argument("patchify expects (H,W,C)");
    const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    if (p == 0 || h % p != 0 || w % p != 0) {
        throw std::invalid_argument("image sides must be divisible by the patch size");
    }
    const std::size_t rows = h / p, cols = w / p;
    Tensor<S> out({rows * cols, p * p * c});
    for (std::size_t py = 0; py < rows; ++py) {
        for (std::size_t px = 0; px < cols; ++px) {
            const std::size_t n = py * cols + px;
            std::size_t k = 0;
            for (std::size_t dy = 0; dy < p; ++dy) {
                for (std::size_t dx = 0; dx < p; ++dx) {
                    for (std::size_t ci = 0; ci < c; ++ci) {
                        out(n, k++) = x(py * p + dy, px * p + dx, ci);
                    }
                }
            }
        }
    }
    return out;
}

template <typename S>
struct MhsaParams {
    Tensor<S> wq, bq, wk, bk, wv, bv, wo, bo;  // (d,d) weights, (d) biases

    static MhsaParams zeros(std::size_t d) {
        return {Tensor<S>({d, d}), Tensor<S>({d}), Tensor<S>({d, d}), Tensor<S>({d}),
                Tensor<S>({d, d}), Tensor<S>({d}), Tensor<S>({d, d}), Tensor<S>({d})};
    }
};

template <typename S>
struct MhsaCache {
    Tensor<S> q, k, v;                 // (N, d)
    std::vector<Tensor<S>> probs;      // per head, (N, N) softmaxed attention rows
    Tensor<S> concat;                  // (N, d) heads side by side
};

template <typename S>
struct MhsaOut {
    Tensor<S> y;  // (N, d)
    MhsaCache<S> cache;
};

// Scaled dot-product self-attention with learned Q,K,V projections; heads
// are column blocks of width d/heads, concatenated then output-projected.
template <typename S>
MhsaOut<S> multi_head_self_attention(const Tensor<S>& x, const MhsaParams<S>& p, std::size_t heads) {
    if (x.rank() != 2) throw std::invalid_argument("self-attention expects (N, d)");
    const std::size_t n = x.dim(0), d = x.dim(1);
    if (heads == 0 || d % heads != 0) {
        throw std::invalid_argument("embedding width must be divisible by head count");
    }
    const std::size_t dh = d / heads;
    const S scale = S(1) / std::sqrt(static_cast<S>(dh));

    MhsaOut<S> out;
    out.cache.q = linear_rows(x, p.wq, p.bq);
    out.cache.k = linear_rows(x, p.wk, p.bk);
    out.cache.v = linear_rows(x, p.wv, p.bv);
    out.cache.concat = Tensor<S>({n, d});
    out.cache.probs.reserve(heads);

    for (std::size_t hd = 0; hd < heads; ++hd) {
        const std::size_t off = hd * dh;
        Tensor<S> prob({n, n});
        for (std::size_t i = 0; i < n; ++i) {
            Tensor<S> row({n});
            for (std::size_t j = 0; j < n; ++j) {
                S acc = S(0);
                for (std::size_t e = 0; e < dh; ++e) {
                    acc += out.cache.q(i, off + e) * out.cache.k(j, off + e);
                }
                row[j] = acc * scale;
            }
            const Tensor<S> soft = softmax(row);
            for (std::size_t j = 0; j < n; ++j) prob(i, j) = soft[j];
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t e = 0; e < dh; ++e) {
                S acc = S(0);
                for (std::size_t j = 0; j < n; ++j) acc += prob(i, j) * out.cache.v(j, off + e);
                out.cache.concat(i, off + e) = acc;
            }
        }
        out.cache.probs.push_back(std::move(prob));
    }
    out.y = linear_rows(out.cache.concat, p.wo, p.bo);
    return out;
}

template <typename S>
struct MhsaGrads {
    Tensor<S> dx;
    MhsaParams<S> dp;
};

template <typename S>
MhsaGrads<S> multi_head_self_attention_backward(const Tensor<S>& x, const MhsaParams<S>& p,
                                                std::size_t heads, const MhsaCache<S>& cache,
                                                const Tensor<S>& dy) {
    const std::size_t n = x.dim(0), d = x.dim(1);
    const std::size_t dh = d / heads;
    const S scale = S(1) / std::sqrt(static_cast<S>(dh));

    MhsaGrads<S> out{Tensor<S>({n, d}), MhsaParams<S>::zeros(d)};

    auto oproj = linear_rows_backward(cache.concat, p.wo, dy);
    out.dp.wo = std::move(oproj.dw);
    out.dp.bo = std::move(oproj.db);
    const Tensor<S>& dconcat = oproj.dx;

    Tensor<S> dq({n, d}), dk({n, d}), dv({n, d});
    for (std::size_t hd = 0; hd < heads; ++hd) {
        const std::size_t off = hd * dh;
        const Tensor<S>& prob = cache.probs[hd];
        Tensor<S> dprob({n, n});
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                S acc = S(0);
                for (std::size_t e = 0; e < dh; ++e) acc += dconcat(i, off + e) * cache.v(j, off + e);
                dprob(i, j) = acc;
            }
            for (std::size_t j = 0; j < n; ++j) {
                for (std::size_t e = 0; e < dh; ++e) {
                    dv(j, off + e) += prob(i, j) * dconcat(i, off + e);
                }
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            // softmax row pullback
            S dot = S(0);
            for (std::size_t j = 0; j < n; ++j) dot += dprob(i, j) * prob(i, j);
            for (std::size_t j = 0; j < n; ++j) {
                const S dscore = prob(i, j) * (dprob(i, j) - dot) * scale;
                for (std::size_t e = 0; e < dh; ++e) {
                    dq(i, off + e) += dscore * cache.k(j, off + e);
                    dk(j, off + e) += dscore * cache.q(i, off + e);
                }
            }
        }
    }

    auto qproj = linear_rows_backward(x, p.wq, dq);
    auto kproj = linear_rows_backward(x, p.wk, dk);
    auto vproj = linear_rows_backward(x, p.wv, dv);
    out.dp.wq = std::move(qproj.dw);
    out.dp.bq = std::move(qproj.db);
    out.dp.wk = std::move(kproj.dw);
    out.dp.bk = std::move(kproj.db);
    out.dp.wv = std::move(vproj.dw);
    out.dp.bv = std::move(vproj.db);
    for (std::size_t i = 0; i < n * d; ++i) {
        out.dx[i] = qproj.dx[i] + kproj.dx[i] + vproj.dx[i];
    }
    return out;
}

// Pre-norm transformer encoder block:
//   a = x + MHSA(LN1(x));  y = a + FF(LN2(a)),  FF = W2 relu(W1 . + b1) + b2
template <typename S>
struct VitBlockParams {
    Tensor<S> ln1_g, ln1_b, ln2_g, ln2_b;
    MhsaParams<S> attn;
    Tensor<S> ff_w1, ff_b1, ff_w2, ff_b2;  // (m,d),(m),(d,m),(d)

    static VitBlockParams zeros(std::size_t d, std::size_t ff) {
        VitBlockParams p;
        p.ln1_g = Tensor<S>({d});
        p.ln1_b = Tensor<S>({d});
        p.ln2_g = Tensor<S>({d});
        p.ln2_b = Tensor<S>({d});
        p.attn = MhsaParams<S>::zeros(d);
        p.ff_w1 = Tensor<S>({ff, d});
        p.ff_b1 = Tensor<S>({ff});
        p.ff_w2 = Tensor<S>({d, ff});
        p.ff_b2 = Tensor<S>({d});
        return p;
    }
};

template <typename S>
struct VitBlockCache {
    Tensor<S> x;                                // block input (N, d)
    std::vector<LayerNormOut<S>> ln1, ln2;      // per token row
    Tensor<S> ln1_out, ln2_out;
    MhsaCache<S> attn;
    Tensor<S> after_attn;                       // a = x + attn (N, d)
    Tensor<S> ff_pre;                           // (N, m) before relu
    Tensor<S> ff_hidden;                        // (N, m) after relu
};

template <typename S>
struct VitBlockOut {
    Tensor<S> y;
    VitBlockCache<S> cache;
};

namespace detail {

template <typename S>
Tensor<S> layer_norm_rows(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                          std::vector<LayerNormOut<S>>& caches) {
    const std::size_t rows = x.dim(0), d = x.dim(1);
    Tensor<S> y({rows, d});
    caches.clear();
    caches.reserve(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        Tensor<S> row({d});
        for (std::size_t j = 0; j < d; ++j) row[j] = x(r, j);
        LayerNormOut<S> ln = layer_norm(row, gamma, beta);
        for (std::size_t j = 0; j < d; ++j) y(r, j) = ln.y[j];
        caches.push_back(std::move(ln));
    }
    return y;
}

template <typename S>
Tensor<S> layer_norm_rows_backward(const std::vector<LayerNormOut<S>>& caches, const Tensor<S>& gamma,
                                   const Tensor<S>& dy, Tensor<S>& dgamma, Tensor<S>& dbeta) {
    const std::size_t rows = dy.dim(0), d = dy.dim(1);
    Tensor<S> dx({rows, d});
    for (std::size_t r = 0; r < rows; ++r) {
        Tensor<S> row({d});
        for (std::size_t j = 0; j < d; ++j) row[j] = dy(r, j);
        LayerNormGrads<S> g = layer_norm_backward(caches[r], gamma, row);
        for (std::size_t j = 0; j < d; ++j) {
            dx(r, j) = g.dx[j];
            dgamma[j] += g.dgamma[j];
            dbeta[j] += g.dbeta[j];
        }
    }
    return dx;
}

}  // namespace detail

template <typename S>
VitBlockOut<S> vit_block(const Tensor<S>& x, const VitBlockParams<S>& p, std::size_t heads) {
    const std::size_t n = x.dim(0), d = x.dim(1);
    VitBlockOut<S> out;
    out.cache.x = x;
    out.cache.ln1_out = detail::layer_norm_rows(x, p.ln1_g, p.ln1_b, out.cache.ln1);
    MhsaOut<S> attn = multi_head_self_attention(out.cache.ln1_out, p.attn, heads);
    out.cache.attn = std::move(attn.cache);
    out.cache.after_attn = Tensor<S>({n, d});
    for (std::size_t i = 0; i < n * d; ++i) out.cache.after_attn[i] = x[i] + attn.y[i];

    out.cache.ln2_out = detail::layer_norm_rows(out.cache.after_attn, p.ln2_g, p.ln2_b, out.cache.ln2);
    out.cache.ff_pre = linear_rows(out.cache.ln2_out, p.ff_w1, p.ff_b1);
    out.cache.ff_hidden = relu(out.cache.ff_pre);
    Tensor<S> ff_out = linear_rows(out.cache.ff_hidden, p.ff_w2, p.ff_b2);

    out.y = Tensor<S>({n, d});
    for (std::size_t i = 0; i < n * d; ++i) out.y[i] = out.cache.after_attn[i] + ff_out[i];
    return out;
}

template <typename S>
struct VitBlockGrads {
    Tensor<S> dx;
    VitBlockParams<S> dp;
};

template <typename S>
VitBlockGrads<S> vit_block_backward(const VitBlockParams<S>& p, std::size_t heads,
                                    const VitBlockCache<S>& cache, const Tensor<S>& dy) {
    const std::size_t n = dy.dim(0), d = dy.dim(1);
    const std::size_t ff = p.ff_b1.size();
    VitBlockGrads<S> out{Tensor<S>({n, d}), VitBlockParams<S>::zeros(d, ff)};

    // y = after_attn + ff_out
    auto ff2 = linear_rows_backward(cache.ff_hidden, p.ff_w2, dy);
    out.dp.ff_w2 = std::move(ff2.dw);
    out.dp.ff_b2 = std::move(ff2.db);
    const Tensor<S> dff_pre = relu_backward(cache.ff_pre, ff2.dx);
    auto ff1 = linear_rows_backward(cache.ln2_out, p.ff_w1, dff_pre);
    out.dp.ff_w1 = std::move(ff1.dw);
    out.dp.ff_b1 = std::move(ff1.db);

    Tensor<S> dafter = detail::layer_norm_rows_backward(cache.ln2, p.ln2_g, ff1.dx, out.dp.ln2_g,
                                                        out.dp.ln2_b);
    for (std::size_t i = 0; i < n * d; ++i) dafter[i] += dy[i];  // residual branch

    // after_attn = x + attn_out
    MhsaGrads<S> attn = multi_head_self_attention_backward(cache.ln1_out, p.attn, heads, cache.attn,
                                                           dafter);
    out.dp.attn = std::move(attn.dp);
    Tensor<S> dx_ln1 = detail::layer_norm_rows_backward(cache.ln1, p.ln1_g, attn.dx, out.dp.ln1_g,
                                                        out.dp.ln1_b);
    for (std::size_t i = 0; i < n * d; ++i) out.dx[i] = dafter[i] + dx_ln1[i];
    return out;
}

}  // namespace tempofit
