#include <gtest/gtest.h>

#include <functional>

#include "earbio/model.hpp"
#include "oracles/reference.hpp"
#include "test_support.hpp"

using namespace earbio;
using namespace earbio::nn;

namespace {

Tensor4 random_tensor(int n, int c, int h, int w, Rng& rng, double lo = -1, double hi = 1) {
    Tensor4 t(n, c, h, w);
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-1, 1);
    return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Central differences of f with respect to every entry of v.
std::vector<double> numeric_grad(std::vector<double>& v, const std::function<double()>& f, double eps = 1e-4) {
    std::vector<double> g(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double s = v[i];
        v[i] = s + eps;
        const double fp = f();
        v[i] = s - eps;
        const double fm = f();
        v[i] = s;
        g[i] = (fp - fm) / (2 * eps);
    }
    return g;
}

void expect_close_rel(const std::vector<double>& analytic, const std::vector<double>& numeric, double tol) {
    ASSERT_EQ(analytic.size(), numeric.size());
    for (std::size_t i = 0; i < analytic.size(); ++i) EXPECT_LE(relative_error(analytic[i], numeric[i]), tol) << i;
}

}  // namespace

TEST(Conv2d, OnesKernelSumsNine) {
    const Tensor4 x(1, 1, 3, 3, 1.0), k(1, 1, 3, 3, 1.0);
    const std::vector<double> b{0.5};
    const Tensor4 y = conv2d_forward(x, k, b, 1, 0);
    ASSERT_EQ(y.size(), 1u);
    EXPECT_EQ(y.data[0], 9.5);
}

TEST(Conv2d, DeltaKernelIsIdentity) {
    Rng rng(1);
    const Tensor4 x = random_tensor(2, 1, 5, 6, rng);
    Tensor4 k(1, 1, 3, 3);
    k.at(0, 0, 1, 1) = 1.0;
    EXPECT_EQ(conv2d_forward(x, k, std::vector<double>{0.0}, 1, 1), x);
}

TEST(Conv2d, ForwardMatchesNestedLoops) {
    Rng rng(2);
    for (int t = 0; t < 100; ++t) {
        const int n = 1 + rng.below(2), c = 1 + rng.below(3), oc = 1 + rng.below(3);
        const int kh = 1 + rng.below(3), kw = 1 + rng.below(3);
        const int stride = 1 + rng.below(2), pad = rng.below(2);
        const int h = kh + rng.below(5), w = kw + rng.below(5);
        const Tensor4 x = random_tensor(n, c, h, w, rng), k = random_tensor(oc, c, kh, kw, rng);
        const auto b = random_vec(oc, rng);
        int oh = 0, ow = 0;
        const auto ref = oracle::conv2d(x.data, n, c, h, w, k.data, oc, kh, kw, b, stride, pad, oh, ow);
        const Tensor4 y = conv2d_forward(x, k, b, stride, pad);
        ASSERT_EQ(y.h, oh);
        ASSERT_EQ(y.w, ow);
        for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(y.data[i], ref[i], 1e-9);
    }
}

TEST(Conv2d, BackwardMatchesFiniteDifferences) {
    Rng rng(3);
    for (int t = 0; t < 10; ++t) {
        const int stride = 1 + t % 2, pad = t % 3 == 0 ? 0 : 1;
        Tensor4 x = random_tensor(2, 2, 5, 6, rng), k = random_tensor(3, 2, 3, 3, rng);
        auto b = random_vec(3, rng);
        const Tensor4 y0 = conv2d_forward(x, k, b, stride, pad);
        const auto r = random_vec(y0.size(), rng);
        auto f = [&] { return dot(conv2d_forward(x, k, b, stride, pad).data, r); };
        Tensor4 go(y0.n, y0.c, y0.h, y0.w);
        go.data = r;
        const ConvGrads g = conv2d_backward(go, x, k, stride, pad);
        expect_close_rel(g.grad_x.data, numeric_grad(x.data, f), 1e-4);
        expect_close_rel(g.grad_w.data, numeric_grad(k.data, f), 1e-4);
        expect_close_rel(g.grad_b, numeric_grad(b, f), 1e-4);
    }
}

TEST(Conv2d, ShapeErrors) {
    const Tensor4 x(1, 2, 4, 4), k(1, 3, 3, 3);
    EXPECT_THROW(conv2d_forward(x, k, std::vector<double>{0}, 1, 0), Error);
    const Tensor4 k2(1, 2, 3, 3);
    EXPECT_THROW(conv2d_forward(x, k2, std::vector<double>{0, 0}, 1, 0), Error);
    EXPECT_THROW(conv2d_forward(x, k2, std::vector<double>{0}, 0, 0), Error);
    EXPECT_THROW(conv2d_forward(x, k2, std::vector<double>{0}, 1, -1), Error);
}

TEST(MaxPool, ConstantInputRoutesToFirst) {
    const Tensor4 x(1, 1, 4, 4, 0.7);
    const PoolResult r = maxpool2x2(x);
    EXPECT_EQ(r.out.h, 2);
    for (double v : r.out.data) EXPECT_EQ(v, 0.7);
    const Tensor4 g = maxpool_backward(Tensor4(1, 1, 2, 2, 1.0), r.argmax, x);
    for (int y = 0; y < 4; ++y)
        for (int xx = 0; xx < 4; ++xx) EXPECT_EQ(g.at(0, 0, y, xx), (y % 2 == 0 && xx % 2 == 0) ? 1.0 : 0.0);
}

TEST(MaxPool, StrictMaximaScatter) {
    Tensor4 x(1, 1, 2, 4);
    x.data = {1, 2, 9, 3, 4, 0, 5, 6};
    const PoolResult r = maxpool2x2(x);
    EXPECT_EQ(r.out.data, (std::vector<double>{4, 9}));
    Tensor4 go(1, 1, 1, 2);
    go.data = {10, 20};
    EXPECT_EQ(maxpool_backward(go, r.argmax, x).data, (std::vector<double>{0, 0, 20, 0, 10, 0, 0, 0}));
    EXPECT_THROW(maxpool2x2(Tensor4(1, 1, 3, 4)), Error);
}

TEST(MaxPool, BackwardMatchesFiniteDifferences) {
    Rng rng(4);
    Tensor4 x = random_tensor(2, 3, 6, 4, rng);
    const PoolResult r0 = maxpool2x2(x);
    const auto r = random_vec(r0.out.size(), rng);
    Tensor4 go(r0.out.n, r0.out.c, r0.out.h, r0.out.w);
    go.data = r;
    const Tensor4 g = maxpool_backward(go, r0.argmax, x);
    // Uniform random inputs have no ties, and eps is far below the smallest gap.
    auto f = [&] { return dot(maxpool2x2(x).out.data, r); };
    expect_close_rel(g.data, numeric_grad(x.data, f, 1e-7), 1e-4);
}

TEST(Relu, ForwardBackward) {
    Tensor4 x(1, 1, 1, 4);
    x.data = {-1, 0, 0.5, 2};
    EXPECT_EQ(relu(x).data, (std::vector<double>{0, 0, 0.5, 2}));
    Tensor4 go(1, 1, 1, 4, 3.0);
    EXPECT_EQ(relu_backward(go, x).data, (std::vector<double>{0, 0, 3, 3}));
}

TEST(Dense, BackwardMatchesFiniteDifferences) {
    Rng rng(5);
    Tensor4 x = random_tensor(3, 2, 2, 2, rng);
    auto w = random_vec(4 * 8, rng), b = random_vec(4, rng);
    const Tensor4 y = dense_forward(x, w, b);
    ASSERT_EQ(y.c, 4);
    // Row 0, output 1 by hand.
    double manual = b[1];
    for (int j = 0; j < 8; ++j) manual += w[8 + j] * x.data[j];
    EXPECT_NEAR(y.data[1], manual, 1e-12);
    const auto r = random_vec(y.size(), rng);
    auto f = [&] { return dot(dense_forward(x, w, b).data, r); };
    Tensor4 go(3, 4, 1, 1);
    go.data = r;
    const DenseGrads g = dense_backward(go, x, w);
    expect_close_rel(g.grad_x.data, numeric_grad(x.data, f), 1e-4);
    expect_close_rel(g.grad_w, numeric_grad(w, f), 1e-4);
    expect_close_rel(g.grad_b, numeric_grad(b, f), 1e-4);
}

TEST(Softmax, RowsSumToOne) {
    Rng rng(6);
    const Tensor4 z = random_tensor(5, 7, 1, 1, rng, -30, 30);
    const Tensor4 p = softmax(z);
    for (int i = 0; i < 5; ++i) {
        double s = 0.0;
        for (int j = 0; j < 7; ++j) s += p.data[i * 7 + j];
        EXPECT_NEAR(s, 1.0, 1e-9);
    }
}

TEST(SoftmaxCrossEntropy, UniformLogitsGiveLogK) {
    for (int k : {2, 3, 10, 100}) {
        const Tensor4 z(1, k, 1, 1, 0.37);
        const std::vector<int> label{k - 1};
        EXPECT_EQ(softmax_cross_entropy(z, label).loss, std::log(static_cast<double>(k)));
    }
    const Tensor4 z(3, 5, 1, 1, -2.0);
    EXPECT_NEAR(softmax_cross_entropy(z, std::vector<int>{0, 4, 2}).loss, std::log(5.0), 1e-15);
}

TEST(SoftmaxCrossEntropy, SaturatedLogitsDoNotOverflow) {
    Tensor4 z(2, 3, 1, 1);
    z.data = {1000, 0, 0, 0, 0, 1000};
    const auto r = softmax_cross_entropy(z, std::vector<int>{0, 2});
    EXPECT_LT(r.loss, 1e-6);
    EXPECT_TRUE(std::isfinite(r.loss));
    for (double g : r.grad_logits.data) EXPECT_TRUE(std::isfinite(g));
}

TEST(SoftmaxCrossEntropy, GradientMatchesFiniteDifferences) {
    Rng rng(7);
    Tensor4 z = random_tensor(4, 6, 1, 1, rng, -3, 3);
    const std::vector<int> labels{0, 5, 2, 2};
    const auto r = softmax_cross_entropy(z, labels);
    auto f = [&] { return softmax_cross_entropy(z, labels).loss; };
    expect_close_rel(r.grad_logits.data, numeric_grad(z.data, f), 1e-4);
    EXPECT_THROW(softmax_cross_entropy(z, std::vector<int>{0, 6, 1, 1}), Error);
    EXPECT_THROW(softmax_cross_entropy(z, std::vector<int>{0, -1, 1, 1}), Error);
}

TEST(ArgmaxRow, TiesGoLow) {
    const std::vector<double> row{0.1, 0.5, 0.5, 0.2};
    EXPECT_EQ(argmax_row(row), 1);
}

TEST(CompactCnn, LayoutAndInit) {
    ArchSpec a;
    a.input_size = 16;
    a.class_count = 4;
    CompactCnn net(a);
    const auto& b = net.blocks();
    ASSERT_EQ(b.size(), 8u);
    EXPECT_EQ(b[0].name, "conv0.weight");
    EXPECT_EQ(b[0].size, 8u * 3 * 9);
    EXPECT_EQ(b[6].name, "dense.weight");
    EXPECT_EQ(b[6].size, 32u * 2 * 2 * 4);
    EXPECT_EQ(b.back().offset + b.back().size, net.parameter_count());
    net.init_he_uniform(3);
    for (const auto& blk : b) {
        const double lim = blk.fan_in ? std::sqrt(6.0 / blk.fan_in) : 0.0;
        for (std::size_t i = 0; i < blk.size; ++i) EXPECT_LE(std::abs(net.params()[blk.offset + i]), lim);
    }
    CompactCnn again(a);
    again.init_he_uniform(3);
    EXPECT_EQ(again.params(), net.params());
    a.input_size = 12;
    EXPECT_THROW(CompactCnn{a}, Error);
}

TEST(CompactCnn, RejectsWrongInputShape) {
    ArchSpec a;
    a.input_size = 8;
    CompactCnn net(a);
    EXPECT_THROW(net.logits(Tensor4(1, 3, 16, 16)), Error);
    EXPECT_THROW(net.logits(Tensor4(1, 1, 8, 8)), Error);
}

TEST(GradientCheck, LinearModelIsExactToRoundoff) {
    ArchSpec a;
    a.input_size = 8;
    a.conv_channels = {4, 4};
    a.class_count = 3;
    a.use_relu = false;
    CompactCnn net(a);
    net.init_he_uniform(11);
    Rng rng(12);
    const Tensor4 x = random_tensor(2, 3, 8, 8, rng);
    const std::vector<int> y{0, 2};
    // Softmax curvature leaves an O(eps^2) truncation term, so a step near the
    // cube root of machine epsilon is used.
    const auto rep = gradient_check(net, x, y, 1e-5, 256, 1, 1e-7);
    EXPECT_GE(rep.checked, 200u);
    EXPECT_LT(rep.max_relative_error, 1e-7);
    for (std::size_t n : rep.checked_per_block) EXPECT_GT(n, 0u);
}

TEST(GradientCheck, FullModelPasses) {
    ArchSpec a;
    a.input_size = 16;
    a.class_count = 5;
    CompactCnn net(a);
    net.init_he_uniform(13);
    Rng rng(14);
    const Tensor4 x = random_tensor(2, 3, 16, 16, rng);
    const std::vector<int> y{1, 4};
    const auto rep = gradient_check(net, x, y, 1e-4);
    EXPECT_GE(rep.checked, 200u);
    EXPECT_TRUE(rep.passed()) << rep.max_relative_error;
}

TEST(GradientCheck, TinyEpsIsWorse) {
    ArchSpec a;
    a.input_size = 8;
    a.conv_channels = {4, 4};
    a.class_count = 3;
    a.use_relu = false;
    CompactCnn net(a);
    net.init_he_uniform(15);
    Rng rng(16);
    const Tensor4 x = random_tensor(2, 3, 8, 8, rng);
    const std::vector<int> y{1, 0};
    const auto good = gradient_check(net, x, y, 1e-4, 64);
    const auto bad = gradient_check(net, x, y, 1e-12, 64);
    EXPECT_GT(bad.max_relative_error, 100 * good.max_relative_error);
    EXPECT_FALSE(bad.passed());
}
