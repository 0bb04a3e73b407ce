#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "tempofit/tensor.hpp"

namespace tempofit {

enum class Padding { valid, same };

namespace detail {

struct ConvGeometry {
    std::size_t out_h, out_w, pad_top, pad_left;
};

inline ConvGeometry conv_geometry(std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
                                  std::size_t stride, Padding pad) {
    if (stride == 0) throw std::invalid_argument("stride must be >= 1");
    std::size_t ph = 0, pw = 0;
    if (pad == Padding::same) {
        ph = kh - 1;
        pw = kw - 1;
    }
    if (kh > h + ph || kw > w + pw) {
        throw std::invalid_argument("kernel larger than padded input");
    }
    ConvGeometry g;
    g.out_h = (h + ph - kh) / stride + 1;
    g.out_w = (w + pw - kw) / stride + 1;
    g.pad_top = ph / 2;
    g.pad_left = pw / 2;
    return g;
}

}  // namespace detail

// Cross-correlation convolution: x (H,W,Cin), w (kh,kw,Cin,Cout), b (Cout).
// `same` zero-pads so H,W are preserved at stride 1.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, std::size_t stride,
                 Padding pad) {
    if (x.rank() != 3 || w.rank() != 4) throw std::invalid_argument("conv2d expects (H,W,C) and (kh,kw,Cin,Cout)");
    if (x.dim(2) != w.dim(2)) throw std::invalid_argument("conv2d channel mismatch between input and kernel");
    if (b.size() != w.dim(3)) throw std::invalid_argument("conv2d bias length must equal Cout");
    const std::size_t h = x.dim(0), wd = x.dim(1), cin = x.dim(2);
    const std::size_t kh = w.dim(0), kw = w.dim(1), cout = w.dim(3);
    const auto g = detail::conv_geometry(h, wd, kh, kw, stride, pad);

    Tensor<S> y({g.out_h, g.out_w, cout});
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            for (std::size_t co = 0; co < cout; ++co) {
                S acc = b[co];
                for (std::size_t ky = 0; ky < kh; ++ky) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                              static_cast<std::ptrdiff_t>(g.pad_top);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                                  static_cast<std::ptrdiff_t>(g.pad_left);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                        for (std::size_t ci = 0; ci < cin; ++ci) {
                            acc += x(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), ci) *
                                   w(ky, kx, ci, co);
                        }
                    }
                }
                y(oy, ox, co) = acc;
            }
        }
    }
    return y;
}

template <typename S>
struct Conv2dGrads {
    Tensor<S> dx, dw, db;
};

template <typename S>
Conv2dGrads<S> conv2d_backward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& dy,
                               std::size_t stride, Padding pad) {
    const std::size_t h = x.dim(0), wd = x.dim(1), cin = x.dim(2);
    const std::size_t kh = w.dim(0), kw = w.dim(1), cout = w.dim(3);
    const auto g = detail::conv_geometry(h, wd, kh, kw, stride, pad);

    Conv2dGrads<S> grads{Tensor<S>(x.shape()), Tensor<S>(w.shape()), Tensor<S>({cout})};
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            for (std::size_t co = 0; co < cout; ++co) {
                const S gout = dy(oy, ox, co);
                grads.db[co] += gout;
                for (std::size_t ky = 0; ky < kh; ++ky) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                              static_cast<std::ptrdiff_t>(g.pad_top);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                                  static_cast<std::ptrdiff_t>(g.pad_left);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                        for (std::size_t ci = 0; ci < cin; ++ci) {
                            const auto uy = static_cast<std::size_t>(iy);
                            const auto ux = static_cast<std::size_t>(ix);
                            grads.dw(ky, kx, ci, co) += x(uy, ux, ci) * gout;
                            grads.dx(uy, ux, ci) += w(ky, kx, ci, co) * gout;
                        }
                    }
                }
            }
        }
    }
    return grads;
}

// 2x2 max pool, stride 2; odd trailing rows/columns are dropped. Ties route
// the gradient to the first maximum in scan order.
template <typename S>
struct MaxPool2Out {
    Tensor<S> y;
    std::vector<std::size_t> argmax;  // flat index into x per output element
};

template <typename S>
MaxPool2Out<S> maxpool2(const Tensor<S>& x) {
    if (x.rank() != 3) throw std::invalid_argument("maxpool2 expects (H,W,C)");
    const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    if (h < 2 || w < 2) throw std::invalid_argument("maxpool2 needs H,W >= 2");
    const std::size_t oh = h / 2, ow = w / 2;
    MaxPool2Out<S> out{Tensor<S>({oh, ow, c}), {}};
    out.argmax.resize(oh * ow * c);
    std::size_t pos = 0;
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            for (std::size_t ci = 0; ci < c; ++ci) {
                S best = x(2 * oy, 2 * ox, ci);
                std::size_t best_idx = (2 * oy * w + 2 * ox) * c + ci;
                for (std::size_t dy = 0; dy < 2; ++dy) {
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t iy = 2 * oy + dy, ix = 2 * ox + dx;
                        const S v = x(iy, ix, ci);
                        if (v > best) {
                            best = v;
                            best_idx = (iy * w + ix) * c + ci;
                        }
                    }
                }
                out.y(oy, ox, ci) = best;
                out.argmax[pos++] = best_idx;
            }
        }
    }
    return out;
}

template <typename S>
Tensor<S> maxpool2_backward(const MaxPool2Out<S>& cache, const Shape& x_shape, const Tensor<S>& dy) {
    Tensor<S> dx(x_shape);
    for (std::size_t i = 0; i < dy.size(); ++i) {
        dx[cache.argmax[i]] += dy[i];
    }
    return dx;
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
    Tensor<S> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > S(0) ? x[i] : S(0);
    return y;
}

// Subgradient at exactly 0 is 0.
template <typename S>
Tensor<S> relu_backward(const Tensor<S>& x, const Tensor<S>& dy) {
    Tensor<S> dx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > S(0) ? dy[i] : S(0);
    return dx;
}

template <typename S>
S sigmoid(S x) {
    if (x >= S(0)) {
        return S(1) / (S(1) + std::exp(-x));
    }
    const S e = std::exp(x);
    return e / (S(1) + e);
}

// y = W x + b with x (n), w (m,n), b (m).
template <typename S>
Tensor<S> dense(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
    if (x.rank() != 1 || w.rank() != 2) throw std::invalid_argument("dense expects vector input and matrix weight");
    const std::size_t m = w.dim(0), n = w.dim(1);
    if (x.size() != n || b.size() != m) throw std::invalid_argument("dense shape mismatch");
    Tensor<S> y({m});
    for (std::size_t i = 0; i < m; ++i) {
        S acc = b[i];
        for (std::size_t j = 0; j < n; ++j) acc += w(i, j) * x[j];
        y[i] = acc;
    }
    return y;
}

template <typename S>
struct DenseGrads {
    Tensor<S> dx, dw, db;
};

template <typename S>
DenseGrads<S> dense_backward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& dy) {
    const std::size_t m = w.dim(0), n = w.dim(1);
    DenseGrads<S> g{Tensor<S>({n}), Tensor<S>({m, n}), Tensor<S>({m})};
    for (std::size_t i = 0; i < m; ++i) {
        const S gy = dy[i];
        g.db[i] = gy;
        for (std::size_t j = 0; j < n; ++j) {
            g.dw(i, j) = gy * x[j];
            g.dx[j] += w(i, j) * gy;
        }
    }
    return g;
}

// Row-wise affine map for token matrices: X (N,n) -> Y (N,m), Y = X W^T + b.
template <typename S>
Tensor<S> linear_rows(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
    if (x.rank() != 2 || w.rank() != 2) throw std::invalid_argument("linear_rows expects matrices");
    const std::size_t rows = x.dim(0), n = x.dim(1), m = w.dim(0);
    if (w.dim(1) != n || b.size() != m) throw std::invalid_argument("linear_rows shape mismatch");
    Tensor<S> y({rows, m});
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < m; ++i) {
            S acc = b[i];
            for (std::size_t j = 0; j < n; ++j) acc += w(i, j) * x(r, j);
            y(r, i) = acc;
        }
    }
    return y;
}

template <typename S>
struct LinearRowsGrads {
    Tensor<S> dx, dw, db;
};

template <typename S>
LinearRowsGrads<S> linear_rows_backward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& dy) {
    const std::size_t rows = x.dim(0), n = x.dim(1), m = w.dim(0);
    LinearRowsGrads<S> g{Tensor<S>({rows, n}), Tensor<S>({m, n}), Tensor<S>({m})};
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < m; ++i) {
            const S gy = dy(r, i);
            g.db[i] += gy;
            for (std::size_t j = 0; j < n; ++j) {
                g.dw(i, j) += gy * x(r, j);
                g.dx(r, j) += w(i, j) * gy;
            }
        }
    }
    return g;
}

// Numerically stable softmax: subtracts the max logit before exponentiating.
// Exponentials are floored at the smallest normal value so outputs stay
// strictly positive even for logit gaps that underflow exp.
template <typename S>
Tensor<S> softmax(const Tensor<S>& z) {
    if (z.size() == 0) throw std::invalid_argument("softmax needs at least one logit");
    Tensor<S> p(z.shape());
    S zmax = z[0];
    for (std::size_t i = 1; i < z.size(); ++i) zmax = std::max(zmax, z[i]);
    S sum = S(0);
    for (std::size_t i = 0; i < z.size(); ++i) {
        p[i] = std::max(std::exp(z[i] - zmax), std::numeric_limits<S>::min());
        sum += p[i];
    }
    for (std::size_t i = 0; i < z.size(); ++i) p[i] /= sum;
    return p;
}

// Pullback through softmax: dz_i = p_i * (dp_i - sum_j dp_j p_j).
template <typename S>
Tensor<S> softmax_backward(const Tensor<S>& p, const Tensor<S>& dp) {
    Tensor<S> dz(p.shape());
    S dot = S(0);
    for (std::size_t i = 0; i < p.size(); ++i) dot += dp[i] * p[i];
    for (std::size_t i = 0; i < p.size(); ++i) dz[i] = p[i] * (dp[i] - dot);
    return dz;
}

inline constexpr double kCrossEntropyEpsilon = 1e-12;

template <typename S>
S cross_entropy(const Tensor<S>& p, const Tensor<S>& y_onehot) {
    if (p.size() != y_onehot.size()) throw std::invalid_argument("cross_entropy length mismatch");
    S loss = S(0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (y_onehot[i] != S(0)) {
            loss -= y_onehot[i] * std::log(std::max(p[i], S(kCrossEntropyEpsilon)));
        }
    }
    return loss;
}

template <typename S>
S cross_entropy(const Tensor<S>& p, std::size_t label) {
    if (label >= p.size()) throw std::invalid_argument("cross_entropy label out of range");
    return -std::log(std::max(p[label], S(kCrossEntropyEpsilon)));
}

// Gradient of cross_entropy(softmax(z), y) with respect to z.
template <typename S>
Tensor<S> softmax_cross_entropy_backward(const Tensor<S>& p, std::size_t label) {
    Tensor<S> dz = p;
    dz[label] -= S(1);
    return dz;
}

// Layer normalization of one feature vector with learnable gamma/beta.
inline constexpr double kLayerNormEpsilon = 1e-5;

template <typename S>
struct LayerNormOut {
    Tensor<S> y;
    Tensor<S> xhat;
    S inv_std;
};

template <typename S>
LayerNormOut<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta) {
    const std::size_t n = x.size();
    if (gamma.size() != n || beta.size() != n) throw std::invalid_argument("layer_norm shape mismatch");
    S mean = S(0);
    for (std::size_t i = 0; i < n; ++i) mean += x[i];
    mean /= S(n);
    S var = S(0);
    for (std::size_t i = 0; i < n; ++i) {
        const S d = x[i] - mean;
        var += d * d;
    }
    var /= S(n);
    LayerNormOut<S> out{Tensor<S>(x.shape()), Tensor<S>(x.shape()), S(1) / std::sqrt(var + S(kLayerNormEpsilon))};
    for (std::size_t i = 0; i < n; ++i) {
        out.xhat[i] = (x[i] - mean) * out.inv_std;
        out.y[i] = gamma[i] * out.xhat[i] + beta[i];
    }
    return out;
}

template <typename S>
struct LayerNormGrads {
    Tensor<S> dx, dgamma, dbeta;
};

template <typename S>
LayerNormGrads<S> layer_norm_backward(const LayerNormOut<S>& cache, const Tensor<S>& gamma,
                                      const Tensor<S>& dy) {
    const std::size_t n = dy.size();
    LayerNormGrads<S> g{Tensor<S>(dy.shape()), Tensor<S>(dy.shape()), Tensor<S>(dy.shape())};
    S mean_dxhat = S(0), mean_dxhat_xhat = S(0);
    for (std::size_t i = 0; i < n; ++i) {
        g.dbeta[i] = dy[i];
        g.dgamma[i] = dy[i] * cache.xhat[i];
        const S dxhat = dy[i] * gamma[i];
        mean_dxhat += dxhat;
        mean_dxhat_xhat += dxhat * cache.xhat[i];
    }
    mean_dxhat /= S(n);
    mean_dxhat_xhat /= S(n);
    for (std::size_t i = 0; i < n; ++i) {
        const S dxhat = dy[i] * gamma[i];
        g.dx[i] = cache.inv_std * (dxhat - mean_dxhat - cache.xhat[i] * mean_dxhat_xhat);
    }
    return g;
}

// Applies f independently to each leading-axis slice, parameters shared.
template <typename S, typename F>
Tensor<S> time_distributed(const Tensor<S>& xs, F&& f) {
    if (xs.rank() < 2) throw std::invalid_argument("time_distributed expects rank >= 2");
    const std::size_t t_len = xs.dim(0);
    const std::size_t frame_size = xs.size() / t_len;
    Shape frame_shape(xs.shape().begin() + 1, xs.shape().end());

    Tensor<S> out;
    for (std::size_t t = 0; t < t_len; ++t) {
        Tensor<S> frame(frame_shape);
        for (std::size_t i = 0; i < frame_size; ++i) frame[i] = xs[t * frame_size + i];
        Tensor<S> y = f(frame);
        if (t == 0) {
            Shape out_shape = {t_len};
            out_shape.insert(out_shape.end(), y.shape().begin(), y.shape().end());
            out = Tensor<S>(out_shape);
        } else if (y.size() * t_len != out.size()) {
            throw std::invalid_argument("time_distributed op produced inconsistent shapes");
        }
        for (std::size_t i = 0; i < y.size(); ++i) out[t * y.size() + i] = y[i];
    }
    return out;
}

}  // namespace tempofit
