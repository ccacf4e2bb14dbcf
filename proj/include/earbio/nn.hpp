#ifndef EARBIO_NN_HPP
#define EARBIO_NN_HPP

// Layer primitives with exact backward passes. Tensors are NCHW, row-major, double.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "earbio/error.hpp"

namespace earbio::nn {

struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<double> data;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_, double fill = 0.0)
        : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {
        if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0) throw Error(Errc::ShapeMismatch, "negative tensor dimension");
    }

    std::size_t size() const noexcept { return data.size(); }
    std::size_t sample_size() const noexcept { return static_cast<std::size_t>(c) * h * w; }
    std::size_t index(int in, int ic, int y, int x) const noexcept {
        return ((static_cast<std::size_t>(in) * c + ic) * h + y) * w + x;
    }
    double& at(int in, int ic, int y, int x) noexcept { return data[index(in, ic, y, x)]; }
    double at(int in, int ic, int y, int x) const noexcept { return data[index(in, ic, y, x)]; }

    bool same_shape(const Tensor4& o) const noexcept { return n == o.n && c == o.c && h == o.h && w == o.w; }
    friend bool operator==(const Tensor4&, const Tensor4&) = default;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

inline int conv_out_size(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

namespace detail {

// Column matrix of shape (C*kh*kw) x (oh*ow) for one sample.
inline void im2col(const double* x, int c, int h, int w, int kh, int kw, int stride, int pad, int oh, int ow,
                   RowMatrix& cols) {
    cols.resize(static_cast<Eigen::Index>(c) * kh * kw, static_cast<Eigen::Index>(oh) * ow);
    for (int ic = 0; ic < c; ++ic)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                double* row = cols.data() + ((static_cast<std::size_t>(ic) * kh + ky) * kw + kx) * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        row[oy * ow + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                                ? x[(static_cast<std::size_t>(ic) * h + iy) * w + ix]
                                                : 0.0;
                    }
                }
            }
}

inline void col2im(const RowMatrix& cols, int c, int h, int w, int kh, int kw, int stride, int pad, int oh, int ow,
                   double* gx) {
    for (int ic = 0; ic < c; ++ic)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                const double* row = cols.data() + ((static_cast<std::size_t>(ic) * kh + ky) * kw + kx) * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= w) continue;
                        gx[(static_cast<std::size_t>(ic) * h + iy) * w + ix] += row[oy * ow + ox];
                    }
                }
            }
}

inline void check_conv_shapes(const Tensor4& x, const Tensor4& weight, std::size_t bias_size, int stride, int pad) {
    if (stride < 1 || pad < 0) throw Error(Errc::ShapeMismatch, "stride must be >= 1 and pad >= 0");
    if (weight.c != x.c) {
        throw Error(Errc::ShapeMismatch, "weight expects " + std::to_string(weight.c) + " input channels, got " +
                                             std::to_string(x.c));
    }
    if (bias_size != static_cast<std::size_t>(weight.n)) throw Error(Errc::ShapeMismatch, "bias length");
    if (conv_out_size(x.h, weight.h, stride, pad) < 1 || conv_out_size(x.w, weight.w, stride, pad) < 1) {
        throw Error(Errc::ShapeMismatch, "kernel larger than padded input");
    }
}

}  // namespace detail

/// Cross-correlation with zero padding. weight is (out_c, in_c, kh, kw).
inline Tensor4 conv2d_forward(const Tensor4& x, const Tensor4& weight, std::span<const double> bias, int stride = 1,
                              int pad = 0) {
    detail::check_conv_shapes(x, weight, bias.size(), stride, pad);
    const int oh = conv_out_size(x.h, weight.h, stride, pad), ow = conv_out_size(x.w, weight.w, stride, pad);
    Tensor4 y(x.n, weight.n, oh, ow);
    const ConstMatrixMap wm(weight.data.data(), weight.n, static_cast<Eigen::Index>(weight.sample_size()));
    RowMatrix cols;
    for (int i = 0; i < x.n; ++i) {
        detail::im2col(x.data.data() + i * x.sample_size(), x.c, x.h, x.w, weight.h, weight.w, stride, pad, oh, ow,
                       cols);
        MatrixMap ym(y.data.data() + i * y.sample_size(), weight.n, static_cast<Eigen::Index>(oh) * ow);
        ym.noalias() = wm * cols;
        for (int oc = 0; oc < weight.n; ++oc) ym.row(oc).array() += bias[oc];
    }
    return y;
}

struct ConvGrads {
    Tensor4 grad_x;
    Tensor4 grad_w;
    std::vector<double> grad_b;
};

inline ConvGrads conv2d_backward(const Tensor4& grad_out, const Tensor4& x, const Tensor4& weight, int stride = 1,
                                 int pad = 0) {
    detail::check_conv_shapes(x, weight, static_cast<std::size_t>(weight.n), stride, pad);
    const int oh = conv_out_size(x.h, weight.h, stride, pad), ow = conv_out_size(x.w, weight.w, stride, pad);
    if (grad_out.n != x.n || grad_out.c != weight.n || grad_out.h != oh || grad_out.w != ow) {
        throw Error(Errc::ShapeMismatch, "conv2d_backward: grad_out shape");
    }
    ConvGrads g{Tensor4(x.n, x.c, x.h, x.w), Tensor4(weight.n, weight.c, weight.h, weight.w),
                std::vector<double>(static_cast<std::size_t>(weight.n), 0.0)};
    const auto k = static_cast<Eigen::Index>(weight.sample_size());
    const ConstMatrixMap wm(weight.data.data(), weight.n, k);
    MatrixMap gw(g.grad_w.data.data(), weight.n, k);
    RowMatrix cols, gcols;
    for (int i = 0; i < x.n; ++i) {
        const ConstMatrixMap go(grad_out.data.data() + i * grad_out.sample_size(), weight.n,
                                static_cast<Eigen::Index>(oh) * ow);
        detail::im2col(x.data.data() + i * x.sample_size(), x.c, x.h, x.w, weight.h, weight.w, stride, pad, oh, ow,
                       cols);
        gw.noalias() += go * cols.transpose();
        for (int oc = 0; oc < weight.n; ++oc) g.grad_b[oc] += go.row(oc).sum();
        gcols.noalias() = wm.transpose() * go;
        detail::col2im(gcols, x.c, x.h, x.w, weight.h, weight.w, stride, pad, oh, ow,
                       g.grad_x.data.data() + i * x.sample_size());
    }
    return g;
}

struct PoolResult {
    Tensor4 out;
    std::vector<std::size_t> argmax;  // flat input index per output element
};

/// 2x2 stride-2 max pooling. Ties resolve to the first element in row-major window order.
inline PoolResult maxpool2x2(const Tensor4& x) {
    if (x.h % 2 != 0 || x.w % 2 != 0) throw Error(Errc::OddSpatialDims, "maxpool2x2 needs even height and width");
    PoolResult r{Tensor4(x.n, x.c, x.h / 2, x.w / 2), {}};
    r.argmax.resize(r.out.size());
    std::size_t o = 0;
    for (int i = 0; i < x.n; ++i)
        for (int c = 0; c < x.c; ++c)
            for (int y = 0; y < x.h / 2; ++y)
                for (int xx = 0; xx < x.w / 2; ++xx, ++o) {
                    std::size_t best = x.index(i, c, 2 * y, 2 * xx);
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const std::size_t idx = x.index(i, c, 2 * y + dy, 2 * xx + dx);
                            if (x.data[idx] > x.data[best]) best = idx;
                        }
                    r.out.data[o] = x.data[best];
                    r.argmax[o] = best;
                }
    return r;
}

inline Tensor4 maxpool_backward(const Tensor4& grad_out, std::span<const std::size_t> argmax, const Tensor4& input) {
    if (grad_out.size() != argmax.size()) throw Error(Errc::ShapeMismatch, "maxpool_backward: argmax length");
    Tensor4 gx(input.n, input.c, input.h, input.w);
    for (std::size_t o = 0; o < argmax.size(); ++o) gx.data[argmax[o]] += grad_out.data[o];
    return gx;
}

inline Tensor4 relu(const Tensor4& x) {
    Tensor4 y = x;
    for (double& v : y.data) v = v > 0.0 ? v : 0.0;
    return y;
}

/// Gradient is passed where the pre-activation is strictly positive.
inline Tensor4 relu_backward(const Tensor4& grad_out, const Tensor4& pre) {
    if (!grad_out.same_shape(pre)) throw Error(Errc::ShapeMismatch, "relu_backward shapes");
    Tensor4 g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (!(pre.data[i] > 0.0)) g.data[i] = 0.0;
    return g;
}

/// x is treated as (n, features); weight is (out, features) row-major. Returns (n, out, 1, 1).
inline Tensor4 dense_forward(const Tensor4& x, std::span<const double> weight, std::span<const double> bias) {
    const auto features = static_cast<Eigen::Index>(x.sample_size());
    const auto outs = static_cast<Eigen::Index>(bias.size());
    if (weight.size() != static_cast<std::size_t>(features * outs)) throw Error(Errc::ShapeMismatch, "dense weight");
    Tensor4 y(x.n, static_cast<int>(outs), 1, 1);
    const ConstMatrixMap xm(x.data.data(), x.n, features);
    const ConstMatrixMap wm(weight.data(), outs, features);
    MatrixMap ym(y.data.data(), x.n, outs);
    ym.noalias() = xm * wm.transpose();
    ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data(), outs);
    return y;
}

struct DenseGrads {
    Tensor4 grad_x;
    std::vector<double> grad_w;
    std::vector<double> grad_b;
};

inline DenseGrads dense_backward(const Tensor4& grad_out, const Tensor4& x, std::span<const double> weight) {
    const auto features = static_cast<Eigen::Index>(x.sample_size());
    const auto outs = static_cast<Eigen::Index>(grad_out.sample_size());
    if (grad_out.n != x.n || weight.size() != static_cast<std::size_t>(features * outs)) {
        throw Error(Errc::ShapeMismatch, "dense_backward shapes");
    }
    DenseGrads g{Tensor4(x.n, x.c, x.h, x.w), std::vector<double>(weight.size()),
                 std::vector<double>(static_cast<std::size_t>(outs))};
    const ConstMatrixMap go(grad_out.data.data(), x.n, outs);
    const ConstMatrixMap xm(x.data.data(), x.n, features);
    const ConstMatrixMap wm(weight.data(), outs, features);
    MatrixMap(g.grad_x.data.data(), x.n, features).noalias() = go * wm;
    MatrixMap(g.grad_w.data(), outs, features).noalias() = go.transpose() * xm;
    Eigen::Map<Eigen::RowVectorXd>(g.grad_b.data(), outs) = go.colwise().sum();
    return g;
}

/// Row-wise softmax of (n, K, 1, 1) logits, max-subtracted.
inline Tensor4 softmax(const Tensor4& logits) {
    Tensor4 p = logits;
    const auto k = logits.sample_size();
    for (int i = 0; i < logits.n; ++i) {
        double* row = p.data.data() + i * k;
        const double mx = *std::max_element(row, row + k);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += (row[j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < k; ++j) row[j] /= sum;
    }
    return p;
}

struct LossResult {
    double loss = 0.0;
    Tensor4 grad_logits;
};

/// Mean cross-entropy over the batch; grad = (softmax - onehot) / n.
inline LossResult softmax_cross_entropy(const Tensor4& logits, std::span<const int> labels) {
    const auto k = logits.sample_size();
    if (labels.size() != static_cast<std::size_t>(logits.n)) throw Error(Errc::ShapeMismatch, "label count");
    for (int l : labels)
        if (l < 0 || static_cast<std::size_t>(l) >= k) throw Error(Errc::LabelOutOfRange, std::to_string(l));
    LossResult r{0.0, Tensor4(logits.n, logits.c, logits.h, logits.w)};
    const double inv_n = 1.0 / logits.n;
    for (int i = 0; i < logits.n; ++i) {
        const double* row = logits.data.data() + i * k;
        const double mx = *std::max_element(row, row + k);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
        const double log_sum = std::log(sum);
        r.loss += (log_sum - (row[labels[i]] - mx)) * inv_n;
        double* g = r.grad_logits.data.data() + i * k;
        for (std::size_t j = 0; j < k; ++j) g[j] = std::exp(row[j] - mx - log_sum) * inv_n;
        g[labels[i]] -= inv_n;
    }
    return r;
}

/// Index of the largest entry; ties go to the lowest index.
inline int argmax_row(std::span<const double> row) {
    return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace earbio::nn

#endif
