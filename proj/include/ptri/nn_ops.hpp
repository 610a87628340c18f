#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "ptri/tensor.hpp"

namespace ptri {

enum class Pad { Valid, Same };

struct ConvGeom {
    int out_h = 0, out_w = 0;
    int pad_top = 0, pad_left = 0;
};

inline ConvGeom conv_geometry(int h, int w, int k, int stride, Pad pad) {
    if (k <= 0 || stride <= 0) throw_data("conv: kernel and stride must be positive");
    ConvGeom g;
    if (pad == Pad::Same) {
        g.out_h = (h + stride - 1) / stride;
        g.out_w = (w + stride - 1) / stride;
        // Symmetric zero padding with the extra pixel on the bottom/right.
        const int total_h = std::max(0, (g.out_h - 1) * stride + k - h);
        const int total_w = std::max(0, (g.out_w - 1) * stride + k - w);
        g.pad_top = total_h / 2;
        g.pad_left = total_w / 2;
    } else {
        if (h < k || w < k) throw_data("conv: input smaller than kernel under valid padding");
        g.out_h = (h - k) / stride + 1;
        g.out_w = (w - k) / stride + 1;
    }
    return g;
}

namespace detail {

template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapMat = Eigen::Map<MatRM<S>>;
template <typename S>
using MapConstMat = Eigen::Map<const MatRM<S>>;
template <typename S>
using MapArr = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
template <typename S>
using MapConstArr = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;

// Unfolds conv receptive fields into rows of a (N*out_h*out_w) x (k*k*C) matrix.
template <typename S>
MatRM<S> im2col(const Tensor<S>& x, int k, int stride, const ConvGeom& g) {
    const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(n) * g.out_h * g.out_w;
    MatRM<S> cols = MatRM<S>::Zero(rows, static_cast<std::ptrdiff_t>(k) * k * c);
    std::ptrdiff_t r = 0;
    for (int in = 0; in < n; ++in)
        for (int oy = 0; oy < g.out_h; ++oy)
            for (int ox = 0; ox < g.out_w; ++ox, ++r) {
                S* row = cols.data() + r * cols.cols();
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * stride - g.pad_top + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * stride - g.pad_left + kx;
                        if (ix < 0 || ix >= w) continue;
                        const S* src = x.ptr() + ((static_cast<std::ptrdiff_t>(in) * h + iy) * w + ix) * c;
                        std::copy_n(src, c, row + (static_cast<std::ptrdiff_t>(ky) * k + kx) * c);
                    }
                }
            }
    return cols;
}

// Scatter-adds the im2col layout back onto an input-shaped tensor.
template <typename S>
void col2im_add(const MatRM<S>& cols, int k, int stride, const ConvGeom& g, Tensor<S>& x) {
    const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    std::ptrdiff_t r = 0;
    for (int in = 0; in < n; ++in)
        for (int oy = 0; oy < g.out_h; ++oy)
            for (int ox = 0; ox < g.out_w; ++ox, ++r) {
                const S* row = cols.data() + r * cols.cols();
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * stride - g.pad_top + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * stride - g.pad_left + kx;
                        if (ix < 0 || ix >= w) continue;
                        S* dst = x.ptr() + ((static_cast<std::ptrdiff_t>(in) * h + iy) * w + ix) * c;
                        const S* src = row + (static_cast<std::ptrdiff_t>(ky) * k + kx) * c;
                        MapArr<S>(dst, c) += MapConstArr<S>(src, c);
                    }
                }
            }
}

}  // namespace detail

template <typename S>
struct ConvGrads {
    Tensor<S> input;
    Tensor<S> weights;
    Tensor<S> bias;
};

template <typename S>
Tensor<S> conv2d_forward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, int stride,
                         Pad pad) {
    require_rank(x, 4, "conv2d input");
    require_rank(w, 4, "conv2d weights");
    const int k = w.dim(0), cin = w.dim(2), cout = w.dim(3);
    if (w.dim(1) != k) throw_data("conv2d: non-square kernel");
    if (x.dim(3) != cin) throw_data("conv2d: input channels do not match weights");
    require_shape(b, {cout}, "conv2d bias");

    const ConvGeom g = conv_geometry(x.dim(1), x.dim(2), k, stride, pad);
    const auto cols = detail::im2col(x, k, stride, g);
    Tensor<S> out({x.dim(0), g.out_h, g.out_w, cout});
    detail::MapMat<S> out_mat(out.ptr(), cols.rows(), cout);
    detail::MapConstMat<S> w_mat(w.ptr(), cols.cols(), cout);
    out_mat.noalias() = cols * w_mat;
    out_mat.rowwise() += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(b.ptr(), cout);
    return out;
}

template <typename S>
ConvGrads<S> conv2d_backward(const Tensor<S>& x, const Tensor<S>& w, int stride, Pad pad,
                             const Tensor<S>& gout) {
    const int k = w.dim(0), cout = w.dim(3);
    const ConvGeom g = conv_geometry(x.dim(1), x.dim(2), k, stride, pad);
    require_shape(gout, {x.dim(0), g.out_h, g.out_w, cout}, "conv2d upstream gradient");

    const auto cols = detail::im2col(x, k, stride, g);
    detail::MapConstMat<S> g_mat(gout.ptr(), cols.rows(), cout);

    ConvGrads<S> grads;
    grads.bias = Tensor<S>({cout});
    Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>(grads.bias.ptr(), cout) =
        g_mat.colwise().sum().transpose();

    grads.weights = Tensor<S>(w.shape);
    detail::MapMat<S>(grads.weights.ptr(), cols.cols(), cout).noalias() = cols.transpose() * g_mat;

    detail::MatRM<S> gcols(cols.rows(), cols.cols());
    gcols.noalias() = g_mat * detail::MapConstMat<S>(w.ptr(), cols.cols(), cout).transpose();
    grads.input = Tensor<S>(x.shape);
    detail::col2im_add(gcols, k, stride, g, grads.input);
    return grads;
}

template <typename S>
Tensor<S> depthwise_forward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, int stride,
                            Pad pad) {
    require_rank(x, 4, "depthwise input");
    require_rank(w, 3, "depthwise weights");
    const int k = w.dim(0), c = w.dim(2);
    if (w.dim(1) != k) throw_data("depthwise: non-square kernel");
    if (x.dim(3) != c) throw_data("depthwise: input channels do not match weights");
    require_shape(b, {c}, "depthwise bias");

    const int n = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const ConvGeom g = conv_geometry(h, wd, k, stride, pad);
    Tensor<S> out({n, g.out_h, g.out_w, c});
    for (int in = 0; in < n; ++in)
        for (int oy = 0; oy < g.out_h; ++oy)
            for (int ox = 0; ox < g.out_w; ++ox) {
                S* orow = out.ptr() + ((static_cast<std::ptrdiff_t>(in) * g.out_h + oy) * g.out_w + ox) * c;
                detail::MapArr<S> acc(orow, c);
                acc = detail::MapConstArr<S>(b.ptr(), c);
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * stride - g.pad_top + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * stride - g.pad_left + kx;
                        if (ix < 0 || ix >= wd) continue;
                        const S* xrow = x.ptr() + ((static_cast<std::ptrdiff_t>(in) * h + iy) * wd + ix) * c;
                        const S* wrow = w.ptr() + (static_cast<std::ptrdiff_t>(ky) * k + kx) * c;
                        acc += detail::MapConstArr<S>(xrow, c) * detail::MapConstArr<S>(wrow, c);
                    }
                }
            }
    return out;
}

template <typename S>
ConvGrads<S> depthwise_backward(const Tensor<S>& x, const Tensor<S>& w, int stride, Pad pad,
                                const Tensor<S>& gout) {
    const int k = w.dim(0), c = w.dim(2);
    const int n = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const ConvGeom g = conv_geometry(h, wd, k, stride, pad);
    require_shape(gout, {n, g.out_h, g.out_w, c}, "depthwise upstream gradient");

    ConvGrads<S> grads;
    grads.input = Tensor<S>(x.shape);
    grads.weights = Tensor<S>(w.shape);
    grads.bias = Tensor<S>({c});
    detail::MapArr<S> gb(grads.bias.ptr(), c);
    for (int in = 0; in < n; ++in)
        for (int oy = 0; oy < g.out_h; ++oy)
            for (int ox = 0; ox < g.out_w; ++ox) {
                const S* grow =
                    gout.ptr() + ((static_cast<std::ptrdiff_t>(in) * g.out_h + oy) * g.out_w + ox) * c;
                detail::MapConstArr<S> go(grow, c);
                gb += go;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * stride - g.pad_top + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * stride - g.pad_left + kx;
                        if (ix < 0 || ix >= wd) continue;
                        const std::ptrdiff_t xoff = ((static_cast<std::ptrdiff_t>(in) * h + iy) * wd + ix) * c;
                        const std::ptrdiff_t woff = (static_cast<std::ptrdiff_t>(ky) * k + kx) * c;
                        detail::MapArr<S>(grads.weights.ptr() + woff, c) +=
                            detail::MapConstArr<S>(x.ptr() + xoff, c) * go;
                        detail::MapArr<S>(grads.input.ptr() + xoff, c) +=
                            detail::MapConstArr<S>(w.ptr() + woff, c) * go;
                    }
                }
            }
    return grads;
}

// 1x1 convolution, stride 1: a pure channel-mixing GEMM.
template <typename S>
Tensor<S> pointwise_forward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
    require_rank(x, 4, "pointwise input");
    require_rank(w, 4, "pointwise weights");
    const int cin = w.dim(2), cout = w.dim(3);
    if (w.dim(0) != 1 || w.dim(1) != 1) throw_data("pointwise: kernel must be 1x1");
    if (x.dim(3) != cin) throw_data("pointwise: input channels do not match weights");
    require_shape(b, {cout}, "pointwise bias");

    const std::ptrdiff_t rows = x.numel() / cin;
    Tensor<S> out({x.dim(0), x.dim(1), x.dim(2), cout});
    detail::MapMat<S> out_mat(out.ptr(), rows, cout);
    out_mat.noalias() =
        detail::MapConstMat<S>(x.ptr(), rows, cin) * detail::MapConstMat<S>(w.ptr(), cin, cout);
    out_mat.rowwise() += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(b.ptr(), cout);
    return out;
}

template <typename S>
ConvGrads<S> pointwise_backward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& gout) {
    const int cin = w.dim(2), cout = w.dim(3);
    require_shape(gout, {x.dim(0), x.dim(1), x.dim(2), cout}, "pointwise upstream gradient");
    const std::ptrdiff_t rows = x.numel() / cin;
    detail::MapConstMat<S> x_mat(x.ptr(), rows, cin);
    detail::MapConstMat<S> g_mat(gout.ptr(), rows, cout);

    ConvGrads<S> grads;
    grads.bias = Tensor<S>({cout});
    Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>(grads.bias.ptr(), cout) =
        g_mat.colwise().sum().transpose();
    grads.weights = Tensor<S>(w.shape);
    detail::MapMat<S>(grads.weights.ptr(), cin, cout).noalias() = x_mat.transpose() * g_mat;
    grads.input = Tensor<S>(x.shape);
    detail::MapMat<S>(grads.input.ptr(), rows, cin).noalias() =
        g_mat * detail::MapConstMat<S>(w.ptr(), cin, cout).transpose();
    return grads;
}

template <typename S>
Tensor<S> dense_forward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
    require_rank(w, 2, "dense weights");
    const int in = w.dim(0), out_n = w.dim(1);
    const int batch = x.dim(0);
    if (x.numel() / batch != in) throw_data("dense: flattened input width does not match weights");
    require_shape(b, {out_n}, "dense bias");

    Tensor<S> out({batch, out_n});
    detail::MapMat<S> out_mat(out.ptr(), batch, out_n);
    out_mat.noalias() =
        detail::MapConstMat<S>(x.ptr(), batch, in) * detail::MapConstMat<S>(w.ptr(), in, out_n);
    out_mat.rowwise() += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(b.ptr(), out_n);
    return out;
}

template <typename S>
ConvGrads<S> dense_backward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& gout) {
    const int in = w.dim(0), out_n = w.dim(1);
    const int batch = x.dim(0);
    require_shape(gout, {batch, out_n}, "dense upstream gradient");
    detail::MapConstMat<S> x_mat(x.ptr(), batch, in);
    detail::MapConstMat<S> g_mat(gout.ptr(), batch, out_n);

    ConvGrads<S> grads;
    grads.bias = Tensor<S>({out_n});
    Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>(grads.bias.ptr(), out_n) =
        g_mat.colwise().sum().transpose();
    grads.weights = Tensor<S>(w.shape);
    detail::MapMat<S>(grads.weights.ptr(), in, out_n).noalias() = x_mat.transpose() * g_mat;
    grads.input = Tensor<S>(x.shape);
    detail::MapMat<S>(grads.input.ptr(), batch, in).noalias() =
        g_mat * detail::MapConstMat<S>(w.ptr(), in, out_n).transpose();
    return grads;
}

template <typename S>
Tensor<S> relu_forward(const Tensor<S>& x) {
    Tensor<S> out;
    out.shape = x.shape;
    out.data = x.data.max(S(0));
    return out;
}

template <typename S>
Tensor<S> relu_backward(const Tensor<S>& x, const Tensor<S>& gout) {
    Tensor<S> gx;
    gx.shape = x.shape;
    gx.data = (x.data > S(0)).select(gout.data, S(0));
    return gx;
}

template <typename S>
Tensor<S> relu6_forward(const Tensor<S>& x) {
    Tensor<S> out;
    out.shape = x.shape;
    out.data = x.data.max(S(0)).min(S(6));
    return out;
}

template <typename S>
Tensor<S> relu6_backward(const Tensor<S>& x, const Tensor<S>& gout) {
    Tensor<S> gx;
    gx.shape = x.shape;
    gx.data = (x.data > S(0) && x.data < S(6)).select(gout.data, S(0));
    return gx;
}

template <typename S>
Tensor<S> maxpool_forward(const Tensor<S>& x, int pool, int stride) {
    require_rank(x, 4, "maxpool input");
    const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const ConvGeom g = conv_geometry(h, w, pool, stride, Pad::Valid);
    Tensor<S> out({n, g.out_h, g.out_w, c});
    for (int in = 0; in < n; ++in)
        for (int oy = 0; oy < g.out_h; ++oy)
            for (int ox = 0; ox < g.out_w; ++ox) {
                S* orow = out.ptr() + ((static_cast<std::ptrdiff_t>(in) * g.out_h + oy) * g.out_w + ox) * c;
                detail::MapArr<S> acc(orow, c);
                bool first = true;
                for (int ky = 0; ky < pool; ++ky)
                    for (int kx = 0; kx < pool; ++kx) {
                        const int iy = oy * stride + ky, ix = ox * stride + kx;
                        const S* xrow = x.ptr() + ((static_cast<std::ptrdiff_t>(in) * h + iy) * w + ix) * c;
                        if (first) {
                            acc = detail::MapConstArr<S>(xrow, c);
                            first = false;
                        } else {
                            acc = acc.max(detail::MapConstArr<S>(xrow, c));
                        }
                    }
            }
    return out;
}

// Routes each upstream value to the first window position attaining the max.
template <typename S>
Tensor<S> maxpool_backward(const Tensor<S>& x, int pool, int stride, const Tensor<S>& gout) {
    const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const ConvGeom g = conv_geometry(h, w, pool, stride, Pad::Valid);
    require_shape(gout, {n, g.out_h, g.out_w, c}, "maxpool upstream gradient");
    Tensor<S> gx(x.shape);
    for (int in = 0; in < n; ++in)
        for (int oy = 0; oy < g.out_h; ++oy)
            for (int ox = 0; ox < g.out_w; ++ox)
                for (int ch = 0; ch < c; ++ch) {
                    S best = -std::numeric_limits<S>::infinity();
                    std::ptrdiff_t best_off = -1;
                    for (int ky = 0; ky < pool; ++ky)
                        for (int kx = 0; kx < pool; ++kx) {
                            const int iy = oy * stride + ky, ix = ox * stride + kx;
                            const std::ptrdiff_t off =
                                ((static_cast<std::ptrdiff_t>(in) * h + iy) * w + ix) * c + ch;
                            if (x.data[off] > best) {
                                best = x.data[off];
                                best_off = off;
                            }
                        }
                    gx.data[best_off] +=
                        gout.ptr()[((static_cast<std::ptrdiff_t>(in) * g.out_h + oy) * g.out_w + ox) * c + ch];
                }
    return gx;
}

template <typename S>
Tensor<S> global_avg_pool_forward(const Tensor<S>& x) {
    require_rank(x, 4, "global average pool input");
    const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const std::ptrdiff_t hw = static_cast<std::ptrdiff_t>(h) * w;
    Tensor<S> out({n, c});
    for (int in = 0; in < n; ++in) {
        detail::MapConstMat<S> plane(x.ptr() + static_cast<std::ptrdiff_t>(in) * hw * c, hw, c);
        Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(out.ptr() + static_cast<std::ptrdiff_t>(in) * c,
                                                        c) = plane.colwise().sum() / S(hw);
    }
    return out;
}

template <typename S>
Tensor<S> global_avg_pool_backward(const Tensor<S>& x, const Tensor<S>& gout) {
    const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    require_shape(gout, {n, c}, "global average pool upstream gradient");
    const std::ptrdiff_t hw = static_cast<std::ptrdiff_t>(h) * w;
    Tensor<S> gx(x.shape);
    for (int in = 0; in < n; ++in) {
        detail::MapMat<S> plane(gx.ptr() + static_cast<std::ptrdiff_t>(in) * hw * c, hw, c);
        plane.rowwise() = Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(
                              gout.ptr() + static_cast<std::ptrdiff_t>(in) * c, c) /
                          S(hw);
    }
    return gx;
}

template <typename S>
Tensor<S> softmax_forward(const Tensor<S>& logits) {
    require_rank(logits, 2, "softmax input");
    const int n = logits.dim(0), c = logits.dim(1);
    Tensor<S> out(logits.shape);
    for (int i = 0; i < n; ++i) {
        detail::MapConstArr<S> row(logits.ptr() + static_cast<std::ptrdiff_t>(i) * c, c);
        detail::MapArr<S> orow(out.ptr() + static_cast<std::ptrdiff_t>(i) * c, c);
        const S m = row.maxCoeff();
        orow = (row - m).exp();
        orow /= orow.sum();
    }
    return out;
}

template <typename S>
Tensor<S> softmax_backward(const Tensor<S>& logits, const Tensor<S>& gout) {
    const Tensor<S> p = softmax_forward(logits);
    require_shape(gout, logits.shape, "softmax upstream gradient");
    const int n = logits.dim(0), c = logits.dim(1);
    Tensor<S> gx(logits.shape);
    for (int i = 0; i < n; ++i) {
        detail::MapConstArr<S> pi(p.ptr() + static_cast<std::ptrdiff_t>(i) * c, c);
        detail::MapConstArr<S> gi(gout.ptr() + static_cast<std::ptrdiff_t>(i) * c, c);
        const S dot = (pi * gi).sum();
        detail::MapArr<S>(gx.ptr() + static_cast<std::ptrdiff_t>(i) * c, c) = pi * (gi - dot);
    }
    return gx;
}

template <typename S>
struct LossResult {
    S loss = S(0);
    Tensor<S> grad;
};

// Mean negative log-likelihood of the labeled class under row-wise softmax.
template <typename S>
LossResult<S> softmax_cross_entropy(const Tensor<S>& logits, const std::vector<int>& labels) {
    require_rank(logits, 2, "cross-entropy logits");
    const int n = logits.dim(0), c = logits.dim(1);
    if (static_cast<int>(labels.size()) != n) throw_data("cross-entropy: label count mismatch");

    LossResult<S> res;
    res.grad = Tensor<S>(logits.shape);
    double loss = 0;
    for (int i = 0; i < n; ++i) {
        const int label = labels[static_cast<std::size_t>(i)];
        if (label < 0 || label >= c) throw_data("cross-entropy: label out of range");
        detail::MapConstArr<S> row(logits.ptr() + static_cast<std::ptrdiff_t>(i) * c, c);
        detail::MapArr<S> grow(res.grad.ptr() + static_cast<std::ptrdiff_t>(i) * c, c);
        const S m = row.maxCoeff();
        const S lse = m + std::log((row - m).exp().sum());
        loss += static_cast<double>(lse - row[label]);
        grow = (row - lse).exp() / S(n);
        grow[label] -= S(1) / S(n);
    }
    res.loss = static_cast<S>(loss / n);
    return res;
}

}  // namespace ptri
