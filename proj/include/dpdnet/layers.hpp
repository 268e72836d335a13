#pragma once

#include "dpdnet/conv.hpp"
#include "dpdnet/tensor.hpp"

namespace dpdnet {

// Per-side amounts, (top,bottom) for rows and (left,right) for cols.
struct EdgeAmounts {
    int top = 0, bottom = 0, left = 0, right = 0;
};

template <class S>
TensorT<S> crop2d(const TensorT<S>& x, EdgeAmounts a) {
    require(x.shape().size() == 4, "crop2d expects NHWC");
    const int b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    require(a.top >= 0 && a.bottom >= 0 && a.left >= 0 && a.right >= 0, "negative crop amount");
    require(a.top + a.bottom < h && a.left + a.right < w,
            "over-crop: amounts exceed input extents " + shape_str(x.shape()));
    const int oh = h - a.top - a.bottom, ow = w - a.left - a.right;
    const auto& xv = x.data();
    std::vector<S> out(size_t(b) * oh * ow * c);
    for (int i = 0; i < b; ++i)
        for (int y = 0; y < oh; ++y)
            std::copy_n(xv.data() + ((int64_t(i) * h + y + a.top) * w + a.left) * c,
                        int64_t(ow) * c, out.data() + (int64_t(i) * oh + y) * ow * c);
    auto xn = x.node();
    return detail::make_result<S>({b, oh, ow, c}, std::move(out), "crop2d", {&x},
                                  [=](TensorNode<S>& n) {
                                      xn->ensure_grad();
                                      for (int i = 0; i < b; ++i)
                                          for (int y = 0; y < oh; ++y) {
                                              const S* g = n.grad.data() + (int64_t(i) * oh + y) * ow * c;
                                              S* d = xn->grad.data() +
                                                     ((int64_t(i) * h + y + a.top) * w + a.left) * c;
                                              for (int64_t k = 0; k < int64_t(ow) * c; ++k) d[k] += g[k];
                                          }
                                  });
}

template <class S>
TensorT<S> zero_pad2d(const TensorT<S>& x, EdgeAmounts a) {
    require(x.shape().size() == 4, "zero_pad2d expects NHWC");
    const int b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const int oh = h + a.top + a.bottom, ow = w + a.left + a.right;
    const auto& xv = x.data();
    std::vector<S> out(size_t(b) * oh * ow * c, S(0));
    for (int i = 0; i < b; ++i)
        for (int y = 0; y < h; ++y)
            std::copy_n(xv.data() + (int64_t(i) * h + y) * w * c, int64_t(w) * c,
                        out.data() + ((int64_t(i) * oh + y + a.top) * ow + a.left) * c);
    auto xn = x.node();
    return detail::make_result<S>({b, oh, ow, c}, std::move(out), "zero_pad2d", {&x},
                                  [=](TensorNode<S>& n) {
                                      xn->ensure_grad();
                                      for (int i = 0; i < b; ++i)
                                          for (int y = 0; y < h; ++y) {
                                              const S* g = n.grad.data() +
                                                           ((int64_t(i) * oh + y + a.top) * ow + a.left) * c;
                                              S* d = xn->grad.data() + (int64_t(i) * h + y) * w * c;
                                              for (int64_t k = 0; k < int64_t(w) * c; ++k) d[k] += g[k];
                                          }
                                  });
}

// Non-overlapping max pooling, stride = window, floor-division extents.
// Gradient routes to the (first) argmax of each window.
template <class S>
TensorT<S> max_pool(const TensorT<S>& x, int size_h, int size_w) {
    require(x.shape().size() == 4, "max_pool expects NHWC");
    require(size_h >= 1 && size_w >= 1, "max_pool size must be >= 1");
    const int b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const int oh = h / size_h, ow = w / size_w;
    require(oh > 0 && ow > 0, "max_pool output extent is zero for " + shape_str(x.shape()));
    const auto& xv = x.data();
    std::vector<S> out(size_t(b) * oh * ow * c);
    auto argmax = std::make_shared<std::vector<int64_t>>(out.size());
    for (int i = 0; i < b; ++i)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                for (int ch = 0; ch < c; ++ch) {
                    S best = -std::numeric_limits<S>::infinity();
                    int64_t best_idx = -1;
                    for (int ky = 0; ky < size_h; ++ky)
                        for (int kx = 0; kx < size_w; ++kx) {
                            int64_t idx =
                                ((int64_t(i) * h + oy * size_h + ky) * w + ox * size_w + kx) * c + ch;
                            if (xv[idx] > best) {
                                best = xv[idx];
                                best_idx = idx;
                            }
                        }
                    int64_t o = ((int64_t(i) * oh + oy) * ow + ox) * c + ch;
                    out[o] = best;
                    (*argmax)[o] = best_idx;
                }
    auto xn = x.node();
    return detail::make_result<S>({b, oh, ow, c}, std::move(out), "max_pool", {&x},
                                  [xn, argmax](TensorNode<S>& n) {
                                      xn->ensure_grad();
                                      for (size_t o = 0; o < n.grad.size(); ++o)
                                          xn->grad[(*argmax)[o]] += n.grad[o];
                                  });
}

// Nearest-neighbor upsampling by integer factors; gradient sums over replicas.
template <class S>
TensorT<S> upsample_nearest(const TensorT<S>& x, int size_h, int size_w) {
    require(x.shape().size() == 4, "upsample_nearest expects NHWC");
    require(size_h >= 1 && size_w >= 1, "upsample size must be >= 1");
    const int b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const int oh = h * size_h, ow = w * size_w;
    const auto& xv = x.data();
    std::vector<S> out(size_t(b) * oh * ow * c);
    for (int i = 0; i < b; ++i)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                std::copy_n(xv.data() + ((int64_t(i) * h + oy / size_h) * w + ox / size_w) * c, c,
                            out.data() + ((int64_t(i) * oh + oy) * ow + ox) * c);
    auto xn = x.node();
    return detail::make_result<S>(
        {b, oh, ow, c}, std::move(out), "upsample_nearest", {&x}, [=](TensorNode<S>& n) {
            xn->ensure_grad();
            for (int i = 0; i < b; ++i)
                for (int oy = 0; oy < oh; ++oy)
                    for (int ox = 0; ox < ow; ++ox) {
                        const S* g = n.grad.data() + ((int64_t(i) * oh + oy) * ow + ox) * c;
                        S* d = xn->grad.data() +
                               ((int64_t(i) * h + oy / size_h) * w + ox / size_w) * c;
                        for (int ch = 0; ch < c; ++ch) d[ch] += g[ch];
                    }
        });
}

// Per-channel batch normalization over (batch, height, width).
// Training mode uses batch statistics (biased variance) and updates the
// running stats in place; inference mode applies the frozen running stats.
template <class S>
struct BatchNormStats {
    std::vector<S> running_mean, running_var;
    S momentum = S(0.99);
    S epsilon = S(1e-3);
};

template <class S>
TensorT<S> batch_norm(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta,
                      std::vector<S>& running_mean, std::vector<S>& running_var, S momentum,
                      S epsilon, bool training) {
    require(x.shape().size() == 4, "batch_norm expects NHWC");
    const int c = x.dim(3);
    require(gamma.size() == c && beta.size() == c, "batch_norm parameter length mismatch");
    require(static_cast<int>(running_mean.size()) == c &&
                static_cast<int>(running_var.size()) == c,
            "batch_norm running-stat length mismatch");
    const int64_t rows = x.size() / c;
    require(rows > 0, "batch_norm on empty batch");
    const auto& xv = x.data();
    const auto& gv = gamma.data();
    const auto& bv = beta.data();

    std::vector<S> mean(c), var(c);
    if (training) {
        for (int64_t r = 0; r < rows; ++r)
            for (int ch = 0; ch < c; ++ch) mean[ch] += xv[r * c + ch];
        for (int ch = 0; ch < c; ++ch) mean[ch] /= S(rows);
        for (int64_t r = 0; r < rows; ++r)
            for (int ch = 0; ch < c; ++ch) {
                S d = xv[r * c + ch] - mean[ch];
                var[ch] += d * d;
            }
        for (int ch = 0; ch < c; ++ch) var[ch] /= S(rows);
        for (int ch = 0; ch < c; ++ch) {
            running_mean[ch] = momentum * running_mean[ch] + (S(1) - momentum) * mean[ch];
            running_var[ch] = momentum * running_var[ch] + (S(1) - momentum) * var[ch];
        }
    } else {
        mean = running_mean;
        var = running_var;
    }

    std::vector<S> inv_std(c);
    for (int ch = 0; ch < c; ++ch) inv_std[ch] = S(1) / std::sqrt(var[ch] + epsilon);
    std::vector<S> out(xv.size());
    auto xhat = std::make_shared<std::vector<S>>(xv.size());
    for (int64_t r = 0; r < rows; ++r)
        for (int ch = 0; ch < c; ++ch) {
            S xh = (xv[r * c + ch] - mean[ch]) * inv_std[ch];
            (*xhat)[r * c + ch] = xh;
            out[r * c + ch] = gv[ch] * xh + bv[ch];
        }

    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    auto back = [=, inv_std = std::move(inv_std)](TensorNode<S>& n) {
        xn->ensure_grad();
        gn->ensure_grad();
        bn->ensure_grad();
        if (!training) {
            // frozen stats: plain affine transform per channel
            for (int64_t r = 0; r < rows; ++r)
                for (int ch = 0; ch < c; ++ch) {
                    S g = n.grad[r * c + ch];
                    bn->grad[ch] += g;
                    gn->grad[ch] += g * (*xhat)[r * c + ch];
                    xn->grad[r * c + ch] += g * gn->value[ch] * inv_std[ch];
                }
            return;
        }
        std::vector<S> sum_g(c), sum_gx(c);
        for (int64_t r = 0; r < rows; ++r)
            for (int ch = 0; ch < c; ++ch) {
                S g = n.grad[r * c + ch];
                sum_g[ch] += g;
                sum_gx[ch] += g * (*xhat)[r * c + ch];
            }
        for (int ch = 0; ch < c; ++ch) {
            bn->grad[ch] += sum_g[ch];
            gn->grad[ch] += sum_gx[ch];
        }
        for (int64_t r = 0; r < rows; ++r)
            for (int ch = 0; ch < c; ++ch) {
                S g = n.grad[r * c + ch];
                S xh = (*xhat)[r * c + ch];
                xn->grad[r * c + ch] += gn->value[ch] * inv_std[ch] *
                                        (g - sum_g[ch] / S(rows) - xh * sum_gx[ch] / S(rows));
            }
    };
    return detail::make_result<S>(x.shape(), std::move(out), "batch_norm", {&x, &gamma, &beta},
                                  std::move(back));
}

template <class S>
TensorT<S> batch_norm(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta,
                      BatchNormStats<S>& stats, bool training) {
    return batch_norm(x, gamma, beta, stats.running_mean, stats.running_var, stats.momentum,
                      stats.epsilon, training);
}

}  // namespace dpdnet
