#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "spliif/error.hpp"
#include "spliif/numerics/graph.hpp"
#include "spliif/numerics/tensor.hpp"
#include "spliif/numerics/window.hpp"

namespace spliif {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <class T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <class T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

template <class T>
ConstMatMap<T> as_matrix(const Tensor<T>& t, std::size_t rows, std::size_t cols) {
    return ConstMatMap<T>(t.data().data(), static_cast<Eigen::Index>(rows),
                          static_cast<Eigen::Index>(cols));
}

template <class T>
MatMap<T> as_matrix(Tensor<T>& t, std::size_t rows, std::size_t cols) {
    return MatMap<T>(t.data().data(), static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(cols));
}

inline void require_same_shape(const char* op, const Shape& a, const Shape& b) {
    if (a != b) {
        throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " +
                             to_string(b));
    }
}

// Row and column sums of a row-major block in a fixed order. Eigen's vectorised
// reductions peel by runtime alignment, which would make gradients vary between runs.
template <class T>
void add_row_sums(const T* m, std::size_t rows, std::size_t cols, T* out) {
    for (std::size_t r = 0; r < rows; ++r) {
        T s = T(0);
        for (std::size_t c = 0; c < cols; ++c) s += m[r * cols + c];
        out[r] += s;
    }
}

template <class T>
void add_col_sums(const T* m, std::size_t rows, std::size_t cols, T* out) {
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[c] += m[r * cols + c];
}

template <class T>
void accumulate(Graph<T>& g, Var v, const Tensor<T>& delta) {
    if (!g.requires_grad(v)) return;
    auto& acc = g.grad(v);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += delta[i];
}

} // namespace detail

/// y = x·W + b over the last axis of x. W is [D_in, D_out], b is [D_out].
template <class T>
Var linear(Graph<T>& g, Var x, Var weight, Var bias) {
    const auto& xs = g.value(x).shape();
    const auto& ws = g.value(weight).shape();
    const auto& bs = g.value(bias).shape();
    if (ws.size() != 2 || xs.empty() || xs.back() != ws[0] || bs.size() != 1 || bs[0] != ws[1]) {
        throw DimensionError("linear: input " + to_string(xs) + " incompatible with weight " +
                             to_string(ws) + " and bias " + to_string(bs));
    }
    const std::size_t din = ws[0];
    const std::size_t dout = ws[1];
    const std::size_t rows = g.value(x).size() / din;
    Shape out_shape = xs;
    out_shape.back() = dout;
    Tensor<T> out(out_shape);
    {
        auto Y = detail::as_matrix(out, rows, dout);
        Y.noalias() = detail::as_matrix(g.value(x), rows, din) * detail::as_matrix(g.value(weight), din, dout);
        Y.rowwise() += detail::ConstVecMap<T>(g.value(bias).data().data(), dout).transpose();
    }
    return g.record("linear", std::move(out), {x, weight, bias},
                    [x, weight, bias, rows, din, dout](Graph<T>& gr, const Tensor<T>& dy) {
                        const auto dY = detail::as_matrix(dy, rows, dout);
                        if (gr.requires_grad(x)) {
                            detail::as_matrix(gr.grad(x), rows, din).noalias() +=
                                dY * detail::as_matrix(gr.value(weight), din, dout).transpose();
                        }
                        if (gr.requires_grad(weight)) {
                            detail::as_matrix(gr.grad(weight), din, dout).noalias() +=
                                detail::as_matrix(gr.value(x), rows, din).transpose() * dY;
                        }
                        if (gr.requires_grad(bias)) {
                            detail::add_col_sums(dy.data().data(), rows, dout, gr.grad(bias).data().data());
                        }
                    });
}

/// Per-pixel linear map on a channel-first tensor [C_in, ...] -> [C_out, ...].
/// Equivalent to a 1x1 convolution; W is stored [C_in, C_out] like `linear`.
template <class T>
Var linear_channels(Graph<T>& g, Var x, Var weight, Var bias) {
    const auto& xs = g.value(x).shape();
    const auto& ws = g.value(weight).shape();
    const auto& bs = g.value(bias).shape();
    if (ws.size() != 2 || xs.empty() || xs[0] != ws[0] || bs.size() != 1 || bs[0] != ws[1]) {
        throw DimensionError("linear_channels: input " + to_string(xs) +
                             " incompatible with weight " + to_string(ws) + " and bias " +
                             to_string(bs));
    }
    const std::size_t cin = ws[0];
    const std::size_t cout = ws[1];
    const std::size_t pixels = g.value(x).size() / cin;
    Shape out_shape = xs;
    out_shape[0] = cout;
    Tensor<T> out(out_shape);
    {
        auto Y = detail::as_matrix(out, cout, pixels);
        Y.noalias() = detail::as_matrix(g.value(weight), cin, cout).transpose() *
                      detail::as_matrix(g.value(x), cin, pixels);
        Y.colwise() += detail::ConstVecMap<T>(g.value(bias).data().data(), cout);
    }
    return g.record("linear_channels", std::move(out), {x, weight, bias},
                    [x, weight, bias, cin, cout, pixels](Graph<T>& gr, const Tensor<T>& dy) {
                        const auto dY = detail::as_matrix(dy, cout, pixels);
                        if (gr.requires_grad(x)) {
                            detail::as_matrix(gr.grad(x), cin, pixels).noalias() +=
                                detail::as_matrix(gr.value(weight), cin, cout) * dY;
                        }
                        if (gr.requires_grad(weight)) {
                            detail::as_matrix(gr.grad(weight), cin, cout).noalias() +=
                                detail::as_matrix(gr.value(x), cin, pixels) * dY.transpose();
                        }
                        if (gr.requires_grad(bias)) {
                            detail::add_row_sums(dy.data().data(), cout, pixels, gr.grad(bias).data().data());
                        }
                    });
}

namespace detail {

// cols[(ci*9 + ky*3 + kx), p] = x at the 3x3 tap of output pixel p, zero outside the image.
template <class T>
void im2col3x3(const Tensor<T>& x, const Window& in, const Window& out, std::size_t img_h,
               std::size_t img_w, std::vector<T>& cols) {
    const std::size_t cin = x.extent(0);
    const std::size_t P = out.area();
    cols.assign(cin * 9 * P, T(0));
    const auto H = static_cast<std::ptrdiff_t>(img_h);
    const auto W = static_cast<std::ptrdiff_t>(img_w);
    for (std::size_t ci = 0; ci < cin; ++ci) {
        const T* plane = x.data().data() + ci * in.area();
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                T* dst = cols.data() + (ci * 9 + ky * 3 + kx) * P;
                for (std::ptrdiff_t r = 0; r < out.rows; ++r) {
                    const auto sr = out.row0 + r + ky - 1;
                    if (sr < 0 || sr >= H) continue;
                    const T* src_row = plane + (sr - in.row0) * in.cols;
                    T* dst_row = dst + r * out.cols;
                    for (std::ptrdiff_t c = 0; c < out.cols; ++c) {
                        const auto sc = out.col0 + c + kx - 1;
                        if (sc < 0 || sc >= W) continue;
                        dst_row[c] = src_row[sc - in.col0];
                    }
                }
            }
        }
    }
}

template <class T>
void col2im3x3(const T* cols, const Window& in, const Window& out, std::size_t img_h,
               std::size_t img_w, Tensor<T>& dx) {
    const std::size_t cin = dx.extent(0);
    const std::size_t P = out.area();
    const auto H = static_cast<std::ptrdiff_t>(img_h);
    const auto W = static_cast<std::ptrdiff_t>(img_w);
    for (std::size_t ci = 0; ci < cin; ++ci) {
        T* plane = dx.data().data() + ci * in.area();
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const T* src = cols + (ci * 9 + ky * 3 + kx) * P;
                for (std::ptrdiff_t r = 0; r < out.rows; ++r) {
                    const auto sr = out.row0 + r + ky - 1;
                    if (sr < 0 || sr >= H) continue;
                    T* dst_row = plane + (sr - in.row0) * in.cols;
                    const T* src_row = src + r * out.cols;
                    for (std::ptrdiff_t c = 0; c < out.cols; ++c) {
                        const auto sc = out.col0 + c + kx - 1;
                        if (sc < 0 || sc >= W) continue;
                        dst_row[sc - in.col0] += src_row[c];
                    }
                }
            }
        }
    }
}

} // namespace detail

/// Zero-padded 3x3 convolution evaluated on a sub-window of an image.
///
/// `x` holds the pixels of window `in` of an image_h x image_w image. The output
/// covers window `out`; every in-image tap of every output pixel must lie in `in`.
/// Pixels outside the image read as zero, so the result on `out` is identical to
/// the full-image convolution restricted to `out`.
template <class T>
Var conv2d_3x3(Graph<T>& g, Var x, const Window& in, std::size_t image_h, std::size_t image_w,
               Var kernels, Var bias, const Window& out) {
    const auto& xs = g.value(x).shape();
    const auto& ks = g.value(kernels).shape();
    const auto& bs = g.value(bias).shape();
    if (xs.size() != 3 || ks.size() != 4 || ks[2] != 3 || ks[3] != 3 || ks[1] != xs[0] ||
        bs.size() != 1 || bs[0] != ks[0]) {
        throw DimensionError("conv2d_3x3: input " + to_string(xs) + " incompatible with kernels " +
                             to_string(ks) + " and bias " + to_string(bs));
    }
    if (static_cast<std::ptrdiff_t>(xs[1]) != in.rows || static_cast<std::ptrdiff_t>(xs[2]) != in.cols) {
        throw DimensionError("conv2d_3x3: input " + to_string(xs) + " does not match window " + in.str());
    }
    if (out.empty() || !out.inside_image(image_h, image_w) ||
        !in.contains(out.expanded(1, image_h, image_w))) {
        throw DimensionError("conv2d_3x3: output window " + out.str() +
                             " is not computable from input window " + in.str());
    }
    const std::size_t cin = ks[1];
    const std::size_t cout = ks[0];
    const std::size_t K = cin * 9;
    const std::size_t P = out.area();

    std::vector<T> cols;
    detail::im2col3x3(g.value(x), in, out, image_h, image_w, cols);
    Tensor<T> y(Shape{cout, static_cast<std::size_t>(out.rows), static_cast<std::size_t>(out.cols)});
    {
        auto Y = detail::as_matrix(y, cout, P);
        Y.noalias() = detail::as_matrix(g.value(kernels), cout, K) *
                      detail::ConstMatMap<T>(cols.data(), static_cast<Eigen::Index>(K),
                                             static_cast<Eigen::Index>(P));
        Y.colwise() += detail::ConstVecMap<T>(g.value(bias).data().data(), cout);
    }
    return g.record(
        "conv2d_3x3", std::move(y), {x, kernels, bias},
        [x, kernels, bias, in, out, image_h, image_w, cin, cout, K, P](Graph<T>& gr,
                                                                      const Tensor<T>& dy) {
            const auto dY = detail::as_matrix(dy, cout, P);
            if (gr.requires_grad(bias)) {
                detail::add_row_sums(dy.data().data(), cout, P, gr.grad(bias).data().data());
            }
            if (gr.requires_grad(kernels)) {
                std::vector<T> cols;
                detail::im2col3x3(gr.value(x), in, out, image_h, image_w, cols);
                detail::as_matrix(gr.grad(kernels), cout, K).noalias() +=
                    dY * detail::ConstMatMap<T>(cols.data(), static_cast<Eigen::Index>(K),
                                                static_cast<Eigen::Index>(P))
                             .transpose();
            }
            if (gr.requires_grad(x)) {
                detail::RowMat<T> dcols(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
                dcols.noalias() = detail::as_matrix(gr.value(kernels), cout, K).transpose() * dY;
                detail::col2im3x3(dcols.data(), in, out, image_h, image_w, gr.grad(x));
            }
        });
}

/// Same-padding 3x3 convolution over the whole image: [C_in,H,W] -> [C_out,H,W].
template <class T>
Var conv2d_3x3(Graph<T>& g, Var x, Var kernels, Var bias) {
    const auto& xs = g.value(x).shape();
    if (xs.size() != 3) {
        throw DimensionError("conv2d_3x3: expected [C,H,W] input, got " + to_string(xs));
    }
    const Window full = Window::full(xs[1], xs[2]);
    return conv2d_3x3(g, x, full, xs[1], xs[2], kernels, bias, full);
}

template <class T>
Var relu(Graph<T>& g, Var x) {
    const auto& xv = g.value(x);
    Tensor<T> y(xv.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > T(0) ? xv[i] : T(0);
    return g.record("relu", std::move(y), {x}, [x](Graph<T>& gr, const Tensor<T>& dy) {
        const auto& xv = gr.value(x);
        auto& dx = gr.grad(x);
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (xv[i] > T(0)) dx[i] += dy[i];
    });
}

template <class T>
Var add(Graph<T>& g, Var a, Var b) {
    detail::require_same_shape("add", g.value(a).shape(), g.value(b).shape());
    Tensor<T> y = g.value(a);
    const auto& bv = g.value(b);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
    return g.record("add", std::move(y), {a, b}, [a, b](Graph<T>& gr, const Tensor<T>& dy) {
        detail::accumulate(gr, a, dy);
        detail::accumulate(gr, b, dy);
    });
}

template <class T>
Var mul(Graph<T>& g, Var a, Var b) {
    detail::require_same_shape("mul", g.value(a).shape(), g.value(b).shape());
    Tensor<T> y = g.value(a);
    const auto& bv = g.value(b);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
    return g.record("mul", std::move(y), {a, b}, [a, b](Graph<T>& gr, const Tensor<T>& dy) {
        if (gr.requires_grad(a)) {
            const auto& bv = gr.value(b);
            auto& da = gr.grad(a);
            for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i] * bv[i];
        }
        if (gr.requires_grad(b)) {
            const auto& av = gr.value(a);
            auto& db = gr.grad(b);
            for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[i] * av[i];
        }
    });
}

template <class T>
Var scale(Graph<T>& g, Var a, T s) {
    Tensor<T> y = g.value(a);
    for (auto& v : y.data()) v *= s;
    return g.record("scale", std::move(y), {a}, [a, s](Graph<T>& gr, const Tensor<T>& dy) {
        auto& da = gr.grad(a);
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += s * dy[i];
    });
}

/// Elementwise sum of two windowed [C,h,w] tensors over a window both contain.
template <class T>
Var add(Graph<T>& g, Var a, const Window& a_win, Var b, const Window& b_win, const Window& out) {
    const auto& as = g.value(a).shape();
    const auto& bs = g.value(b).shape();
    if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0] ||
        static_cast<std::ptrdiff_t>(as[1]) != a_win.rows || static_cast<std::ptrdiff_t>(as[2]) != a_win.cols ||
        static_cast<std::ptrdiff_t>(bs[1]) != b_win.rows || static_cast<std::ptrdiff_t>(bs[2]) != b_win.cols) {
        throw DimensionError("add: windowed operands " + to_string(as) + " " + a_win.str() + " and " +
                             to_string(bs) + " " + b_win.str() + " are inconsistent");
    }
    if (!a_win.contains(out) || !b_win.contains(out)) {
        throw DimensionError("add: output window " + out.str() + " not covered by " + a_win.str() +
                             " and " + b_win.str());
    }
    const std::size_t C = as[0];
    Tensor<T> y(Shape{C, static_cast<std::size_t>(out.rows), static_cast<std::size_t>(out.cols)});
    const auto& av = g.value(a);
    const auto& bv = g.value(b);
    auto index = [](const Window& w, std::size_t c, std::ptrdiff_t r, std::ptrdiff_t col) {
        return (c * static_cast<std::size_t>(w.rows) + static_cast<std::size_t>(r - w.row0)) *
                   static_cast<std::size_t>(w.cols) +
               static_cast<std::size_t>(col - w.col0);
    };
    std::size_t k = 0;
    for (std::size_t c = 0; c < C; ++c)
        for (auto r = out.row0; r < out.row_end(); ++r)
            for (auto col = out.col0; col < out.col_end(); ++col, ++k)
                y[k] = av[index(a_win, c, r, col)] + bv[index(b_win, c, r, col)];
    return g.record("add_window", std::move(y), {a, b},
                    [a, b, a_win, b_win, out, C, index](Graph<T>& gr, const Tensor<T>& dy) {
                        for (const auto& [v, w] : {std::pair{a, a_win}, std::pair{b, b_win}}) {
                            if (!gr.requires_grad(v)) continue;
                            auto& dv = gr.grad(v);
                            std::size_t k = 0;
                            for (std::size_t c = 0; c < C; ++c)
                                for (auto r = out.row0; r < out.row_end(); ++r)
                                    for (auto col = out.col0; col < out.col_end(); ++col, ++k)
                                        dv[index(w, c, r, col)] += dy[k];
                        }
                    });
}

/// Concatenation along the leading axis (channels of [C,H,W], rows of [N,D]).
template <class T>
Var concat(Graph<T>& g, const std::vector<Var>& parts) {
    if (parts.empty()) throw InputError("concat: no inputs");
    Shape out_shape = g.value(parts[0]).shape();
    if (out_shape.empty()) throw DimensionError("concat: rank-0 input");
    out_shape[0] = 0;
    for (const Var p : parts) {
        const auto& s = g.value(p).shape();
        if (s.size() != out_shape.size() || !std::equal(s.begin() + 1, s.end(), out_shape.begin() + 1)) {
            throw DimensionError("concat: trailing extents differ: " + to_string(s) + " vs " +
                                 to_string(g.value(parts[0]).shape()));
        }
        out_shape[0] += s[0];
    }
    Tensor<T> y(out_shape);
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const Var p : parts) {
        const auto& v = g.value(p);
        offsets.push_back(off);
        std::copy(v.data().begin(), v.data().end(), y.data().begin() + static_cast<std::ptrdiff_t>(off));
        off += v.size();
    }
    return g.record("concat", std::move(y), parts, [parts, offsets](Graph<T>& gr, const Tensor<T>& dy) {
        for (std::size_t i = 0; i < parts.size(); ++i) {
            if (!gr.requires_grad(parts[i])) continue;
            auto& d = gr.grad(parts[i]);
            for (std::size_t k = 0; k < d.size(); ++k) d[k] += dy[offsets[i] + k];
        }
    });
}

/// Masked mean absolute error: sum(mask*|pred-target|) / sum(mask).
/// Target and mask are data, never graph leaves. d|x|/dx at 0 is taken as 0.
template <class T>
Var l1_loss(Graph<T>& g, Var pred, const Tensor<T>& target, const Tensor<T>& mask) {
    detail::require_same_shape("l1_loss", g.value(pred).shape(), target.shape());
    detail::require_same_shape("l1_loss", target.shape(), mask.shape());
    const auto& p = g.value(pred);
    double count = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (mask[i] != T(0) && mask[i] != T(1)) throw InputError("l1_loss: mask must be 0/1");
        count += static_cast<double>(mask[i]);
        total += static_cast<double>(mask[i]) * std::abs(static_cast<double>(p[i] - target[i]));
    }
    if (count == 0.0) throw DegenerateBatchError("l1_loss: every element is masked out");
    Tensor<T> y = Tensor<T>::scalar(static_cast<T>(total / count));
    return g.record("l1_loss", std::move(y), {pred},
                    [pred, target, mask, count](Graph<T>& gr, const Tensor<T>& dy) {
                        const auto& p = gr.value(pred);
                        auto& dp = gr.grad(pred);
                        const T s = dy[0] / static_cast<T>(count);
                        for (std::size_t i = 0; i < dp.size(); ++i) {
                            const T d = p[i] - target[i];
                            const T sign = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
                            dp[i] += mask[i] * sign * s;
                        }
                    });
}

} // namespace spliif
