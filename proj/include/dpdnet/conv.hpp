#pragma once

#include <Eigen/Dense>

#include "dpdnet/tensor.hpp"

namespace dpdnet {

// "same" padding, ceil-mode output: out = ceil(in / stride), zeros padded
// with the smaller half before the origin.
struct ConvGeom {
    int out_h, out_w;
    int pad_top, pad_left;
};

inline ConvGeom same_ceil_geometry(int h, int w, int kh, int kw, int sh, int sw) {
    ConvGeom g;
    g.out_h = ceil_div(h, sh);
    g.out_w = ceil_div(w, sw);
    int pad_h = std::max((g.out_h - 1) * sh + kh - h, 0);
    int pad_w = std::max((g.out_w - 1) * sw + kw - w, 0);
    g.pad_top = pad_h / 2;
    g.pad_left = pad_w / 2;
    return g;
}

namespace detail {

template <class S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using MapRM = Eigen::Map<MatRM<S>>;
template <class S>
using CMapRM = Eigen::Map<const MatRM<S>>;

// One batch item, NHWC. dst is [out_h*out_w, kh*kw*c].
template <class S>
void im2col(const S* src, int h, int w, int c, int kh, int kw, int sh, int sw,
            const ConvGeom& g, S* dst) {
    const int patch = kh * kw * c;
    for (int oy = 0; oy < g.out_h; ++oy) {
        for (int ox = 0; ox < g.out_w; ++ox) {
            S* row = dst + (int64_t(oy) * g.out_w + ox) * patch;
            int iy0 = oy * sh - g.pad_top;
            int ix0 = ox * sw - g.pad_left;
            for (int ky = 0; ky < kh; ++ky) {
                int iy = iy0 + ky;
                S* out = row + ky * kw * c;
                if (iy < 0 || iy >= h) {
                    std::fill_n(out, kw * c, S(0));
                    continue;
                }
                for (int kx = 0; kx < kw; ++kx) {
                    int ix = ix0 + kx;
                    if (ix < 0 || ix >= w)
                        std::fill_n(out + kx * c, c, S(0));
                    else
                        std::copy_n(src + (int64_t(iy) * w + ix) * c, c, out + kx * c);
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-add patch rows back into the (unpadded) image.
template <class S>
void col2im_add(const S* cols, int h, int w, int c, int kh, int kw, int sh, int sw,
                const ConvGeom& g, S* dst) {
    const int patch = kh * kw * c;
    for (int oy = 0; oy < g.out_h; ++oy) {
        for (int ox = 0; ox < g.out_w; ++ox) {
            const S* row = cols + (int64_t(oy) * g.out_w + ox) * patch;
            int iy0 = oy * sh - g.pad_top;
            int ix0 = ox * sw - g.pad_left;
            for (int ky = 0; ky < kh; ++ky) {
                int iy = iy0 + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    int ix = ix0 + kx;
                    if (ix < 0 || ix >= w) continue;
                    const S* src = row + (ky * kw + kx) * c;
                    S* out = dst + (int64_t(iy) * w + ix) * c;
                    for (int ch = 0; ch < c; ++ch) out[ch] += src[ch];
                }
            }
        }
    }
}

// Raw kernels shared by conv2d and its adjoint (transposed conv).
// Weights are row-major (kh, kw, cin, cout); x/y are NHWC.

template <class S>
void conv_fwd(const S* x, int b, int h, int w, int cin, const S* wts, int kh, int kw,
              int cout, int sh, int sw, const ConvGeom& g, const S* bias, S* y) {
    const int patch = kh * kw * cin;
    const int64_t opix = int64_t(g.out_h) * g.out_w;
    std::vector<S> cols(size_t(opix) * patch);
    CMapRM<S> W(wts, patch, cout);
    for (int i = 0; i < b; ++i) {
        im2col(x + int64_t(i) * h * w * cin, h, w, cin, kh, kw, sh, sw, g, cols.data());
        CMapRM<S> M(cols.data(), opix, patch);
        MapRM<S> Y(y + int64_t(i) * opix * cout, opix, cout);
        Y.noalias() = M * W;
        if (bias) Y.rowwise() += Eigen::Map<const Eigen::RowVector<S, Eigen::Dynamic>>(bias, cout);
    }
}

// dL/dW and dL/dbias given input x and output grads dy; accumulates.
template <class S>
void conv_dw(const S* x, int b, int h, int w, int cin, const S* dy, int kh, int kw,
             int cout, int sh, int sw, const ConvGeom& g, S* dwts, S* dbias) {
    const int patch = kh * kw * cin;
    const int64_t opix = int64_t(g.out_h) * g.out_w;
    std::vector<S> cols(size_t(opix) * patch);
    MapRM<S> dW(dwts, patch, cout);
    for (int i = 0; i < b; ++i) {
        im2col(x + int64_t(i) * h * w * cin, h, w, cin, kh, kw, sh, sw, g, cols.data());
        CMapRM<S> M(cols.data(), opix, patch);
        CMapRM<S> dY(dy + int64_t(i) * opix * cout, opix, cout);
        dW.noalias() += M.transpose() * dY;
        if (dbias)
            // plain loop: keeps the reduction order independent of buffer alignment
            for (int64_t r = 0; r < opix; ++r)
                for (int c = 0; c < cout; ++c) dbias[c] += dy[int64_t(i) * opix * cout + r * cout + c];
    }
}

// dL/dx given output grads dy; accumulates into dx.
template <class S>
void conv_dx(const S* dy, int b, int h, int w, int cin, const S* wts, int kh, int kw,
             int cout, int sh, int sw, const ConvGeom& g, S* dx) {
    const int patch = kh * kw * cin;
    const int64_t opix = int64_t(g.out_h) * g.out_w;
    std::vector<S> cols(size_t(opix) * patch);
    CMapRM<S> W(wts, patch, cout);
    for (int i = 0; i < b; ++i) {
        CMapRM<S> dY(dy + int64_t(i) * opix * cout, opix, cout);
        MapRM<S> M(cols.data(), opix, patch);
        M.noalias() = dY * W.transpose();
        col2im_add(cols.data(), h, w, cin, kh, kw, sh, sw, g, dx + int64_t(i) * h * w * cin);
    }
}

}  // namespace detail

// x: (B,H,W,Cin); weights: (kh,kw,Cin,Cout); bias: (Cout) or undefined.
// Output (B, ceil(H/s), ceil(W/s), Cout).
template <class S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& weights, const TensorT<S>& bias,
                  int stride_h, int stride_w) {
    require(x.shape().size() == 4, "conv2d input must be NHWC, got " + shape_str(x.shape()));
    require(weights.shape().size() == 4, "conv2d weights must be (kh,kw,cin,cout)");
    const int b = x.dim(0), h = x.dim(1), w = x.dim(2), cin = x.dim(3);
    const int kh = weights.dim(0), kw = weights.dim(1), cout = weights.dim(3);
    require(weights.dim(2) == cin, "conv2d channel mismatch: input has " + std::to_string(cin) +
                                       ", weights expect " + std::to_string(weights.dim(2)));
    if (bias.defined()) require(bias.size() == cout, "conv2d bias size mismatch");
    ConvGeom g = same_ceil_geometry(h, w, kh, kw, stride_h, stride_w);
    require(g.out_h > 0 && g.out_w > 0, "conv2d produces zero-sized output");

    std::vector<S> out(size_t(b) * g.out_h * g.out_w * cout);
    detail::conv_fwd(x.data().data(), b, h, w, cin, weights.data().data(), kh, kw, cout,
                     stride_h, stride_w, g, bias.defined() ? bias.data().data() : nullptr,
                     out.data());

    auto xn = x.node(), wn = weights.node();
    auto bn = bias.defined() ? bias.node() : nullptr;
    auto back = [=](TensorNode<S>& n) {
        xn->ensure_grad();
        wn->ensure_grad();
        detail::conv_dw(xn->value.data(), b, h, w, cin, n.grad.data(), kh, kw, cout, stride_h,
                        stride_w, g, wn->grad.data(), [&]() -> S* {
                            if (!bn) return nullptr;
                            bn->ensure_grad();
                            return bn->grad.data();
                        }());
        detail::conv_dx(n.grad.data(), b, h, w, cin, wn->value.data(), kh, kw, cout, stride_h,
                        stride_w, g, xn->grad.data());
    };
    if (bias.defined())
        return detail::make_result<S>({b, g.out_h, g.out_w, cout}, std::move(out), "conv2d",
                                      {&x, &weights, &bias}, back);
    return detail::make_result<S>({b, g.out_h, g.out_w, cout}, std::move(out), "conv2d",
                                  {&x, &weights}, back);
}

// Fractionally-strided convolution; exact linear adjoint of conv2d with the
// same weights. x: (B,h,w,Cin); weights: (kh,kw,Cout,Cin); output (B,h*s,w*s,Cout).
template <class S>
TensorT<S> transposed_conv2d(const TensorT<S>& x, const TensorT<S>& weights,
                             const TensorT<S>& bias, int stride_h, int stride_w) {
    require(x.shape().size() == 4, "transposed_conv2d input must be NHWC");
    const int b = x.dim(0), h = x.dim(1), w = x.dim(2), cin = x.dim(3);
    const int kh = weights.dim(0), kw = weights.dim(1), cout = weights.dim(2);
    require(weights.dim(3) == cin, "transposed_conv2d channel mismatch");
    const int oh = h * stride_h, ow = w * stride_w;
    // geometry of the conv this op is adjoint to: (oh,ow,cout) -> (h,w,cin)
    ConvGeom g = same_ceil_geometry(oh, ow, kh, kw, stride_h, stride_w);

    std::vector<S> out(size_t(b) * oh * ow * cout, S(0));
    detail::conv_dx(x.data().data(), b, oh, ow, cout, weights.data().data(), kh, kw, cin,
                    stride_h, stride_w, g, out.data());
    if (bias.defined()) {
        require(bias.size() == cout, "transposed_conv2d bias size mismatch");
        const auto& bv = bias.data();
        for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i % cout];
    }

    auto xn = x.node(), wn = weights.node();
    auto bn = bias.defined() ? bias.node() : nullptr;
    auto back2 = [=](TensorNode<S>& n) {
        xn->ensure_grad();
        wn->ensure_grad();
        std::vector<S> dx(size_t(b) * h * w * cin);
        detail::conv_fwd(n.grad.data(), b, oh, ow, cout, wn->value.data(), kh, kw, cin,
                         stride_h, stride_w, g, static_cast<const S*>(nullptr), dx.data());
        for (size_t i = 0; i < dx.size(); ++i) xn->grad[i] += dx[i];
        // dW: weight grad of the adjoint conv with input = output grads, dy = x...
        detail::conv_dw(n.grad.data(), b, oh, ow, cout, xn->value.data(), kh, kw, cin,
                        stride_h, stride_w, g, wn->grad.data(), static_cast<S*>(nullptr));
        if (bn) {
            bn->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i % cout] += n.grad[i];
        }
    };
    if (bias.defined())
        return detail::make_result<S>({b, oh, ow, cout}, std::move(out), "transposed_conv2d",
                                      {&x, &weights, &bias}, back2);
    return detail::make_result<S>({b, oh, ow, cout}, std::move(out), "transposed_conv2d",
                                  {&x, &weights}, back2);
}

// Depthwise conv (multiplier 1): weights (kh,kw,C), same-ceil padding.
template <class S>
TensorT<S> depthwise_conv2d(const TensorT<S>& x, const TensorT<S>& weights, int stride_h,
                            int stride_w) {
    require(x.shape().size() == 4 && weights.shape().size() == 3,
            "depthwise_conv2d expects NHWC input and (kh,kw,c) weights");
    const int b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const int kh = weights.dim(0), kw = weights.dim(1);
    require(weights.dim(2) == c, "depthwise_conv2d channel mismatch");
    ConvGeom g = same_ceil_geometry(h, w, kh, kw, stride_h, stride_w);

    const auto& xv = x.data();
    const auto& wv = weights.data();
    std::vector<S> out(size_t(b) * g.out_h * g.out_w * c, S(0));
    for (int i = 0; i < b; ++i)
        for (int oy = 0; oy < g.out_h; ++oy)
            for (int ox = 0; ox < g.out_w; ++ox) {
                S* orow = out.data() + ((int64_t(i) * g.out_h + oy) * g.out_w + ox) * c;
                for (int ky = 0; ky < kh; ++ky) {
                    int iy = oy * stride_h - g.pad_top + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        int ix = ox * stride_w - g.pad_left + kx;
                        if (ix < 0 || ix >= w) continue;
                        const S* xr = xv.data() + ((int64_t(i) * h + iy) * w + ix) * c;
                        const S* wr = wv.data() + (ky * kw + kx) * c;
                        for (int ch = 0; ch < c; ++ch) orow[ch] += xr[ch] * wr[ch];
                    }
                }
            }

    auto xn = x.node(), wn = weights.node();
    auto back = [=](TensorNode<S>& n) {
        xn->ensure_grad();
        wn->ensure_grad();
        for (int i = 0; i < b; ++i)
            for (int oy = 0; oy < g.out_h; ++oy)
                for (int ox = 0; ox < g.out_w; ++ox) {
                    const S* gr = n.grad.data() + ((int64_t(i) * g.out_h + oy) * g.out_w + ox) * c;
                    for (int ky = 0; ky < kh; ++ky) {
                        int iy = oy * stride_h - g.pad_top + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            int ix = ox * stride_w - g.pad_left + kx;
                            if (ix < 0 || ix >= w) continue;
                            int64_t xoff = ((int64_t(i) * h + iy) * w + ix) * c;
                            int woff = (ky * kw + kx) * c;
                            for (int ch = 0; ch < c; ++ch) {
                                xn->grad[xoff + ch] += gr[ch] * wn->value[woff + ch];
                                wn->grad[woff + ch] += gr[ch] * xn->value[xoff + ch];
                            }
                        }
                    }
                }
    };
    return detail::make_result<S>({b, g.out_h, g.out_w, c}, std::move(out), "depthwise_conv2d",
                                  {&x, &weights}, back);
}

// Depthwise k x k followed by a 1 x 1 pointwise projection.
template <class S>
TensorT<S> separable_conv2d(const TensorT<S>& x, const TensorT<S>& depthwise,
                            const TensorT<S>& pointwise, const TensorT<S>& bias, int stride_h,
                            int stride_w) {
    TensorT<S> mid = depthwise_conv2d(x, depthwise, stride_h, stride_w);
    return conv2d(mid, pointwise, bias, 1, 1);
}

}  // namespace dpdnet
