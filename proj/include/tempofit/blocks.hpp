#pragma once

#include <stdexcept>

#include "tempofit/nn.hpp"
#include "tempofit/tensor.hpp"

namespace tempofit {

// Residual bottleneck: out = relu(F(x) + x) with
// F = conv1x1 (C -> mid) -> relu -> conv3x3 same (mid -> mid) -> relu -> conv1x1 (mid -> C).
template <typename S>
struct BottleneckParams {
    Tensor<S> w1, b1;  // (1,1,C,mid), (mid)
    Tensor<S> w2, b2;  // (3,3,mid,mid), (mid)
    Tensor<S> w3, b3;  // (1,1,mid,C), (C)

    static BottleneckParams zeros(std::size_t c, std::size_t mid) {
        return {Tensor<S>({1, 1, c, mid}),   Tensor<S>({mid}), Tensor<S>({3, 3, mid, mid}),
                Tensor<S>({mid}),            Tensor<S>({1, 1, mid, c}), Tensor<S>({c})};
    }
};

template <typename S>
struct BottleneckCache {
    Tensor<S> x, f1, r1, f2, r2, sum;
};

template <typename S>
struct BottleneckOut {
    Tensor<S> y;
    BottleneckCache<S> cache;
};

template <typename S>
BottleneckOut<S> bottleneck_block(const Tensor<S>& x, const BottleneckParams<S>& p) {
    if (x.dim(2) != p.w1.dim(2)) throw std::invalid_argument("bottleneck channel mismatch");
    BottleneckOut<S> out;
    out.cache.x = x;
    out.cache.f1 = conv2d(x, p.w1, p.b1, 1, Padding::valid);
    out.cache.r1 = relu(out.cache.f1);
    out.cache.f2 = conv2d(out.cache.r1, p.w2, p.b2, 1, Padding::same);
    out.cache.r2 = relu(out.cache.f2);
    Tensor<S> f3 = conv2d(out.cache.r2, p.w3, p.b3, 1, Padding::valid);
    if (!f3.same_shape(x)) throw std::invalid_argument("bottleneck residual shape mismatch");
    out.cache.sum = Tensor<S>(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out.cache.sum[i] = f3[i] + x[i];
    out.y = relu(out.cache.sum);
    return out;
}

template <typename S>
struct BottleneckGrads {
    Tensor<S> dx;
    BottleneckParams<S> dp;
};

template <typename S>
BottleneckGrads<S> bottleneck_block_backward(const BottleneckParams<S>& p,
                                             const BottleneckCache<S>& cache, const Tensor<S>& dy) {
    const Tensor<S> dsum = relu_backward(cache.sum, dy);
    auto c3 = conv2d_backward(cache.r2, p.w3, dsum, 1, Padding::valid);
    const Tensor<S> df2 = relu_backward(cache.f2, c3.dx);
    auto c2 = conv2d_backward(cache.r1, p.w2, df2, 1, Padding::same);
    const Tensor<S> df1 = relu_backward(cache.f1, c2.dx);
    auto c1 = conv2d_backward(cache.x, p.w1, df1, 1, Padding::valid);

    BottleneckGrads<S> out;
    out.dp.w1 = std::move(c1.dw);
    out.dp.b1 = std::move(c1.db);
    out.dp.w2 = std::move(c2.dw);
    out.dp.b2 = std::move(c2.db);
    out.dp.w3 = std::move(c3.dw);
    out.dp.b3 = std::move(c3.db);
    out.dx = std::move(c1.dx);
    for (std::size_t i = 0; i < out.dx.size(); ++i) out.dx[i] += dsum[i];  // skip path
    return out;
}

// Depthwise k x k convolution, same padding, stride 1, no bias: each input
// channel is filtered independently with its own kernel slice.
template <typename S>
Tensor<S> depthwise_conv2d(const Tensor<S>& x, const Tensor<S>& w) {
    if (x.rank() != 3 || w.rank() != 3) throw std::invalid_argument("depthwise expects (H,W,C), (k,k,C)");
    if (x.dim(2) != w.dim(2)) throw std::invalid_argument("depthwise channel mismatch");
    const std::size_t h = x.dim(0), wd = x.dim(1), c = x.dim(2);
    const std::size_t kh = w.dim(0), kw = w.dim(1);
    const std::size_t pt = (kh - 1) / 2, pl = (kw - 1) / 2;
    Tensor<S> y({h, wd, c});
    for (std::size_t oy = 0; oy < h; ++oy) {
        for (std::size_t ox = 0; ox < wd; ++ox) {
            for (std::size_t ci = 0; ci < c; ++ci) {
                S acc = S(0);
                for (std::size_t ky = 0; ky < kh; ++ky) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(pt);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(pl);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                        acc += x(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), ci) * w(ky, kx, ci);
                    }
                }
                y(oy, ox, ci) = acc;
            }
        }
    }
    return y;
}

template <typename S>
struct DepthwiseGrads {
    Tensor<S> dx, dw;
};

template <typename S>
DepthwiseGrads<S> depthwise_conv2d_backward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& dy) {
    const std::size_t h = x.dim(0), wd = x.dim(1), c = x.dim(2);
    const std::size_t kh = w.dim(0), kw = w.dim(1);
    const std::size_t pt = (kh - 1) / 2, pl = (kw - 1) / 2;
    DepthwiseGrads<S> g{Tensor<S>(x.shape()), Tensor<S>(w.shape())};
    for (std::size_t oy = 0; oy < h; ++oy) {
        for (std::size_t ox = 0; ox < wd; ++ox) {
            for (std::size_t ci = 0; ci < c; ++ci) {
                const S gout = dy(oy, ox, ci);
                for (std::size_t ky = 0; ky < kh; ++ky) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(pt);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(pl);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                        const auto uy = static_cast<std::size_t>(iy);
                        const auto ux = static_cast<std::size_t>(ix);
                        g.dw(ky, kx, ci) += x(uy, ux, ci) * gout;
                        g.dx(uy, ux, ci) += w(ky, kx, ci) * gout;
                    }
                }
            }
        }
    }
    return g;
}

// Depthwise separable convolution: depthwise k x k (no bias) followed by a
// 1x1 pointwise mix with bias. Parameters: C*k*k + C*Cout + Cout.
template <typename S>
struct SepConvParams {
    Tensor<S> dw;       // (k,k,C)
    Tensor<S> pw, pb;   // (1,1,C,Cout), (Cout)

    static SepConvParams zeros(std::size_t k, std::size_t c, std::size_t cout) {
        return {Tensor<S>({k, k, c}), Tensor<S>({1, 1, c, cout}), Tensor<S>({cout})};
    }
};

template <typename S>
struct SepConvCache {
    Tensor<S> x, mid;
};

template <typename S>
struct SepConvOut {
    Tensor<S> y;
    SepConvCache<S> cache;
};

template <typename S>
SepConvOut<S> depthwise_separable_conv(const Tensor<S>& x, const SepConvParams<S>& p) {
    SepConvOut<S> out;
    out.cache.x = x;
    out.cache.mid = depthwise_conv2d(x, p.dw);
    out.y = conv2d(out.cache.mid, p.pw, p.pb, 1, Padding::valid);
    return out;
}

template <typename S>
struct SepConvGrads {
    Tensor<S> dx;
    SepConvParams<S> dp;
};

template <typename S>
SepConvGrads<S> depthwise_separable_conv_backward(const SepConvParams<S>& p, const SepConvCache<S>& cache,
                                                  const Tensor<S>& dy) {
    auto pw = conv2d_backward(cache.mid, p.pw, dy, 1, Padding::valid);
    auto dwg = depthwise_conv2d_backward(cache.x, p.dw, pw.dx);
    SepConvGrads<S> out;
    out.dp.dw = std::move(dwg.dw);
    out.dp.pw = std::move(pw.dw);
    out.dp.pb = std::move(pw.db);
    out.dx = std::move(dwg.dx);
    return out;
}

inline std::size_t sepconv_param_count(std::size_t k, std::size_t c, std::size_t cout) {
    return c * k * k + c * cout + cout;
}

// Squeeze-and-excitation: channel gates from globally pooled statistics.
//   s = sigmoid(W2 relu(W1 gap(x) + b1) + b2);  out_{hwc} = s_c * x_{hwc}
template <typename S>
struct SqueezeExciteParams {
    Tensor<S> w1, b1;  // (C/r, C), (C/r)
    Tensor<S> w2, b2;  // (C, C/r), (C)

    static SqueezeExciteParams zeros(std::size_t c, std::size_t r) {
        if (r == 0 || c % r != 0) throw std::invalid_argument("channels must be divisible by the SE reduction");
        const std::size_t m = c / r;
        return {Tensor<S>({m, c}), Tensor<S>({m}), Tensor<S>({c, m}), Tensor<S>({c})};
    }
};

template <typename S>
struct SqueezeExciteCache {
    Tensor<S> x;
    Tensor<S> pooled;   // (C)
    Tensor<S> hidden_pre, hidden;  // (C/r)
    Tensor<S> gates;    // (C), sigmoid outputs
};

template <typename S>
struct SqueezeExciteOut {
    Tensor<S> y;
    SqueezeExciteCache<S> cache;
};

template <typename S>
SqueezeExciteOut<S> squeeze_excitation(const Tensor<S>& x, const SqueezeExciteParams<S>& p) {
    if (x.rank() != 3) throw std::invalid_argument("squeeze_excitation expects (H,W,C)");
    const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    if (p.w1.dim(1) != c) throw std::invalid_argument("squeeze_excitation channel mismatch");

    SqueezeExciteOut<S> out;
    out.cache.x = x;
    out.cache.pooled = Tensor<S>({c});
    for (std::size_t hy = 0; hy < h; ++hy) {
        for (std::size_t wx = 0; wx < w; ++wx) {
            for (std::size_t ci = 0; ci < c; ++ci) out.cache.pooled[ci] += x(hy, wx, ci);
        }
    }
    for (std::size_t ci = 0; ci < c; ++ci) out.cache.pooled[ci] /= S(h * w);

    out.cache.hidden_pre = dense(out.cache.pooled, p.w1, p.b1);
    out.cache.hidden = relu(out.cache.hidden_pre);
    const Tensor<S> gate_pre = dense(out.cache.hidden, p.w2, p.b2);
    out.cache.gates = Tensor<S>({c});
    for (std::size_t ci = 0; ci < c; ++ci) out.cache.gates[ci] = sigmoid(gate_pre[ci]);

    out.y = Tensor<S>(x.shape());
    for (std::size_t hy = 0; hy < h; ++hy) {
        for (std::size_t wx = 0; wx < w; ++wx) {
            for (std::size_t ci = 0; ci < c; ++ci) out.y(hy, wx, ci) = out.cache.gates[ci] * x(hy, wx, ci);
        }
    }
    return out;
}

template <typename S>
struct SqueezeExciteGrads {
    Tensor<S> dx;
    SqueezeExciteParams<S> dp;
};

template <typename S>
SqueezeExciteGrads<S> squeeze_excitation_backward(const SqueezeExciteParams<S>& p,
                                                  const SqueezeExciteCache<S>& cache,
                                                  const Tensor<S>& dy) {
    const std::size_t h = cache.x.dim(0), w = cache.x.dim(1), c = cache.x.dim(2);

    Tensor<S> dgates({c});
    SqueezeExciteGrads<S> out;
    out.dx = Tensor<S>(cache.x.shape());
    for (std::size_t hy = 0; hy < h; ++hy) {
        for (std::size_t wx = 0; wx < w; ++wx) {
            for (std::size_t ci = 0; ci < c; ++ci) {
                const S g = dy(hy, wx, ci);
                dgates[ci] += g * cache.x(hy, wx, ci);
                out.dx(hy, wx, ci) = cache.gates[ci] * g;
            }
        }
    }

    Tensor<S> dgate_pre({c});
    for (std::size_t ci = 0; ci < c; ++ci) {
        dgate_pre[ci] = dgates[ci] * cache.gates[ci] * (S(1) - cache.gates[ci]);
    }
    auto d2 = dense_backward(cache.hidden, p.w2, dgate_pre);
    const Tensor<S> dhidden_pre = relu_backward(cache.hidden_pre, d2.dx);
    auto d1 = dense_backward(cache.pooled, p.w1, dhidden_pre);

    out.dp.w1 = std::move(d1.dw);
    out.dp.b1 = std::move(d1.db);
    out.dp.w2 = std::move(d2.dw);
    out.dp.b2 = std::move(d2.db);

    const S inv_hw = S(1) / S(h * w);
    for (std::size_t hy = 0; hy < h; ++hy) {
        for (std::size_t wx = 0; wx < w; ++wx) {
            for (std::size_t ci = 0; ci < c; ++ci) out.dx(hy, wx, ci) += d1.dx[ci] * inv_hw;
        }
    }
    return out;
}

}  // namespace tempofit
