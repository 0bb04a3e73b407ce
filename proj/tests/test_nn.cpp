#include <gtest/gtest.h>

#include <cmath>

#include "tempofit/gradcheck.hpp"
#include "tempofit/nn.hpp"
#include "tempofit/rng.hpp"

using namespace tempofit;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Central finite difference of a scalar loss with respect to one tensor.
template <typename LossFn>
Tensor<double> finite_diff(Tensor<double>& param, LossFn&& loss, double h = 1e-6) {
    Tensor<double> grad(param.shape());
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double saved = param[i];
        param[i] = saved + h;
        const double plus = loss();
        param[i] = saved - h;
        const double minus = loss();
        param[i] = saved;
        grad[i] = (plus - minus) / (2.0 * h);
    }
    return grad;
}

double max_err(const Tensor<double>& analytic, const Tensor<double>& numeric) {
    double m = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        m = std::max(m, gradient_error(analytic[i], numeric[i]));
    }
    return m;
}

}  // namespace

TEST(Conv2d, SumKernel) {
    Tensor<double> x({2, 2, 1}, {1, 2, 3, 4});
    Tensor<double> w = Tensor<double>::full({2, 2, 1, 1}, 1.0);
    Tensor<double> b({1});
    const auto y = conv2d(x, w, b, 1, Padding::valid);
    ASSERT_EQ(y.shape(), (Shape{1, 1, 1}));
    EXPECT_DOUBLE_EQ(y[0], 10.0);
}

TEST(Conv2d, OneByOneIdentitySame) {
    Rng rng(5);
    Tensor<double> x = random_tensor({5, 7, 1}, rng);
    Tensor<double> w = Tensor<double>::full({1, 1, 1, 1}, 1.0);
    Tensor<double> b({1});
    const auto y = conv2d(x, w, b, 1, Padding::same);
    ASSERT_EQ(y.shape(), x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(y[i], x[i]);
}

TEST(Conv2d, StrideTwoShape) {
    Tensor<double> x({4, 4, 1});
    Tensor<double> w({2, 2, 1, 1});
    Tensor<double> b({1});
    const auto y = conv2d(x, w, b, 2, Padding::valid);
    EXPECT_EQ(y.shape(), (Shape{2, 2, 1}));
}

TEST(Conv2d, ChannelMismatchThrows) {
    Tensor<double> x({4, 4, 2});
    Tensor<double> w({2, 2, 3, 1});
    Tensor<double> b({1});
    EXPECT_THROW(conv2d(x, w, b, 1, Padding::valid), std::invalid_argument);
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
    Rng rng(21);
    Tensor<double> x = random_tensor({5, 5, 2}, rng);
    Tensor<double> w = random_tensor({3, 3, 2, 3}, rng);
    Tensor<double> b = random_tensor({3}, rng);
    // scalar loss: weighted sum of outputs, fixed weights
    Tensor<double> mix;
    auto loss = [&]() {
        const auto y = conv2d(x, w, b, 1, Padding::same);
        double acc = 0;
        for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * mix[i];
        return acc;
    };
    {
        const auto y = conv2d(x, w, b, 1, Padding::same);
        mix = random_tensor(y.shape(), rng);
    }
    const auto g = conv2d_backward(x, w, mix, 1, Padding::same);
    EXPECT_LT(max_err(g.dw, finite_diff(w, loss)), 1e-7);
    EXPECT_LT(max_err(g.db, finite_diff(b, loss)), 1e-7);
    EXPECT_LT(max_err(g.dx, finite_diff(x, loss)), 1e-7);
}

TEST(Conv2d, StridedValidGradients) {
    Rng rng(22);
    Tensor<double> x = random_tensor({6, 6, 1}, rng);
    Tensor<double> w = random_tensor({2, 2, 1, 2}, rng);
    Tensor<double> b = random_tensor({2}, rng);
    Tensor<double> mix;
    auto loss = [&]() {
        const auto y = conv2d(x, w, b, 2, Padding::valid);
        double acc = 0;
        for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * mix[i];
        return acc;
    };
    {
        const auto y = conv2d(x, w, b, 2, Padding::valid);
        mix = random_tensor(y.shape(), rng);
    }
    const auto g = conv2d_backward(x, w, mix, 2, Padding::valid);
    EXPECT_LT(max_err(g.dw, finite_diff(w, loss)), 1e-7);
    EXPECT_LT(max_err(g.dx, finite_diff(x, loss)), 1e-7);
}

TEST(Relu, Examples) {
    Tensor<double> x({3}, {-1, 0, 2});
    const auto y = relu(x);
    EXPECT_DOUBLE_EQ(y[0], 0.0);
    EXPECT_DOUBLE_EQ(y[1], 0.0);
    EXPECT_DOUBLE_EQ(y[2], 2.0);

    Tensor<double> neg = Tensor<double>::full({4}, -3.0);
    const auto zeros = relu(neg);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(zeros[i], 0.0);
}

TEST(Relu, SubgradientConvention) {
    Tensor<double> x({3}, {2.0, -1.0, 0.0});
    Tensor<double> dy = Tensor<double>::full({3}, 1.0);
    const auto dx = relu_backward(x, dy);
    EXPECT_DOUBLE_EQ(dx[0], 1.0);
    EXPECT_DOUBLE_EQ(dx[1], 0.0);
    EXPECT_DOUBLE_EQ(dx[2], 0.0);  // defined as 0 at exactly 0
}

TEST(Dense, IdentityAndExample) {
    Tensor<double> w({2, 2}, {1, 0, 0, 1});
    Tensor<double> b({2});
    Tensor<double> x({2}, {3.5, -1.25});
    const auto y = dense(x, w, b);
    EXPECT_DOUBLE_EQ(y[0], 3.5);
    EXPECT_DOUBLE_EQ(y[1], -1.25);

    Tensor<double> w2({1, 2}, {1, 1});
    Tensor<double> b2({1}, {0.5});
    const auto y2 = dense(Tensor<double>({2}, {1, 2}), w2, b2);
    EXPECT_DOUBLE_EQ(y2[0], 3.5);
}

TEST(Dense, ShapeMismatchThrows) {
    Tensor<double> w({2, 3});
    Tensor<double> b({2});
    EXPECT_THROW(dense(Tensor<double>({2}), w, b), std::invalid_argument);
}

TEST(Dense, GradientsMatchFiniteDifferences) {
    Rng rng(33);
    Tensor<double> x = random_tensor({4}, rng);
    Tensor<double> w = random_tensor({3, 4}, rng);
    Tensor<double> b = random_tensor({3}, rng);
    Tensor<double> mix = random_tensor({3}, rng);
    auto loss = [&]() {
        const auto y = dense(x, w, b);
        double acc = 0;
        for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * mix[i];
        return acc;
    };
    const auto g = dense_backward(x, w, mix);
    EXPECT_LT(max_err(g.dw, finite_diff(w, loss)), 1e-5);
    EXPECT_LT(max_err(g.db, finite_diff(b, loss)), 1e-5);
    EXPECT_LT(max_err(g.dx, finite_diff(x, loss)), 1e-5);
}

TEST(Softmax, Examples) {
    const auto uniform = softmax(Tensor<double>({2}, {0, 0}));
    EXPECT_DOUBLE_EQ(uniform[0], 0.5);
    EXPECT_DOUBLE_EQ(uniform[1], 0.5);

    const auto twothirds = softmax(Tensor<double>({2}, {std::log(2.0), 0}));
    EXPECT_NEAR(twothirds[0], 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(twothirds[1], 1.0 / 3.0, 1e-12);

    const auto stable = softmax(Tensor<double>({2}, {1000, 0}));
    EXPECT_NEAR(stable[0], 1.0, 1e-12);
    EXPECT_NEAR(stable[1], 0.0, 1e-12);
    EXPECT_TRUE(std::isfinite(stable[0]));
}

TEST(Softmax, SumShiftAndPositivityProperty) {
    Rng rng(44);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.index(8);
        Tensor<double> z = random_tensor({n}, rng, -1e3, 1e3);
        const auto p = softmax(z);
        double sum = 0;
        for (std::size_t i = 0; i < n; ++i) {
            ASSERT_GT(p[i], 0.0);
            sum += p[i];
        }
        ASSERT_NEAR(sum, 1.0, 1e-6);

        Tensor<double> shifted = z;
        const double c = rng.uniform(-100.0, 100.0);
        for (std::size_t i = 0; i < n; ++i) shifted[i] += c;
        const auto p2 = softmax(shifted);
        for (std::size_t i = 0; i < n; ++i) ASSERT_NEAR(p[i], p2[i], 1e-6);
    }
}

TEST(CrossEntropy, Examples) {
    EXPECT_DOUBLE_EQ(cross_entropy(Tensor<double>({2}, {1.0, 0.0}), std::size_t{0}), 0.0);
    EXPECT_NEAR(cross_entropy(Tensor<double>({2}, {0.5, 0.5}), std::size_t{0}), std::log(2.0), 1e-12);
    Tensor<double> onehot({2}, {1.0, 0.0});
    EXPECT_NEAR(cross_entropy(Tensor<double>({2}, {0.5, 0.5}), onehot), std::log(2.0), 1e-12);
    EXPECT_THROW(cross_entropy(Tensor<double>({3}), onehot), std::invalid_argument);
}

TEST(CrossEntropy, SoftmaxGradientIdentity) {
    Rng rng(55);
    Tensor<double> z = random_tensor({5}, rng, -2, 2);
    const std::size_t label = 2;
    const auto p = softmax(z);
    const auto dz = softmax_cross_entropy_backward(p, label);
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_NEAR(dz[i], p[i] - (i == label ? 1.0 : 0.0), 1e-15);
    }
    auto loss = [&]() { return cross_entropy(softmax(z), label); };
    EXPECT_LT(max_err(dz, finite_diff(z, loss)), 1e-7);
}

TEST(MaxPool, ForwardAndGradient) {
    Tensor<double> x({2, 4, 1}, {1, 5, 2, 0, 3, 4, 1, 6});
    const auto out = maxpool2(x);
    ASSERT_EQ(out.y.shape(), (Shape{1, 2, 1}));
    EXPECT_DOUBLE_EQ(out.y(0, 0, 0), 5.0);
    EXPECT_DOUBLE_EQ(out.y(0, 1, 0), 6.0);

    Tensor<double> dy({1, 2, 1}, {1.0, 2.0});
    const auto dx = maxpool2_backward(out, x.shape(), dy);
    EXPECT_DOUBLE_EQ(dx[1], 1.0);  // the 5
    EXPECT_DOUBLE_EQ(dx[7], 2.0);  // the 6
    EXPECT_DOUBLE_EQ(dx[0], 0.0);
}

TEST(MaxPool, GradientMatchesFiniteDifferences) {
    Rng rng(66);
    Tensor<double> x = random_tensor({4, 6, 2}, rng);
    Tensor<double> mix = random_tensor({2, 3, 2}, rng);
    auto loss = [&]() {
        const auto out = maxpool2(x);
        double acc = 0;
        for (std::size_t i = 0; i < out.y.size(); ++i) acc += out.y[i] * mix[i];
        return acc;
    };
    const auto fwd = maxpool2(x);
    const auto dx = maxpool2_backward(fwd, x.shape(), mix);
    EXPECT_LT(max_err(dx, finite_diff(x, loss)), 1e-7);
}

TEST(LayerNorm, NormalizesAndDifferentiates) {
    Rng rng(77);
    Tensor<double> x = random_tensor({6}, rng);
    Tensor<double> gamma = random_tensor({6}, rng, 0.5, 1.5);
    Tensor<double> beta = random_tensor({6}, rng);
    const auto out = layer_norm(x, gamma, beta);

    double mean = 0;
    for (std::size_t i = 0; i < 6; ++i) mean += out.xhat[i];
    EXPECT_NEAR(mean / 6.0, 0.0, 1e-12);

    Tensor<double> mix = random_tensor({6}, rng);
    auto loss = [&]() {
        const auto o = layer_norm(x, gamma, beta);
        double acc = 0;
        for (std::size_t i = 0; i < 6; ++i) acc += o.y[i] * mix[i];
        return acc;
    };
    const auto g = layer_norm_backward(out, gamma, mix);
    EXPECT_LT(max_err(g.dx, finite_diff(x, loss)), 1e-6);
    EXPECT_LT(max_err(g.dgamma, finite_diff(gamma, loss)), 1e-6);
    EXPECT_LT(max_err(g.dbeta, finite_diff(beta, loss)), 1e-6);
}

TEST(TimeDistributed, IdentityAndRelu) {
    Rng rng(88);
    Tensor<double> xs = random_tensor({3, 2, 2}, rng);
    const auto same = time_distributed(xs, [](const Tensor<double>& f) { return f; });
    EXPECT_EQ(same.values(), xs.values());

    Tensor<double> x2({2, 1}, {-1, 2});
    const auto y = time_distributed(x2, [](const Tensor<double>& f) { return relu(f); });
    EXPECT_DOUBLE_EQ(y[0], 0.0);
    EXPECT_DOUBLE_EQ(y[1], 2.0);
}

TEST(TimeDistributed, MatchesIndependentLoopOracle) {
    Rng rng(89);
    Tensor<double> xs = random_tensor({4, 3, 3, 1}, rng);
    Tensor<double> w = random_tensor({2, 2, 1, 2}, rng);
    Tensor<double> b = random_tensor({2}, rng);
    auto op = [&](const Tensor<double>& f) { return conv2d(f, w, b, 1, Padding::valid); };

    const auto mapped = time_distributed(xs, op);

    // oracle: slice and apply by hand
    for (std::size_t t = 0; t < 4; ++t) {
        Tensor<double> frame({3, 3, 1});
        for (std::size_t i = 0; i < 9; ++i) frame[i] = xs[t * 9 + i];
        const auto y = op(frame);
        for (std::size_t i = 0; i < y.size(); ++i) {
            ASSERT_DOUBLE_EQ(mapped[t * y.size() + i], y[i]);
        }
    }
}
