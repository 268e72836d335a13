#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>

#include "dpdnet/common.hpp"

namespace dpdnet {

// When false, ops do not record backward closures (inference mode).
inline bool& grad_enabled() {
    static bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_enabled()) { grad_enabled() = false; }
    ~NoGradGuard() { grad_enabled() = prev; }
};

template <class S>
struct TensorNode {
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;  // sized lazily, kept across backward calls for leaves
    bool requires_grad = false;
    bool tracked = false;  // participates in some recorded graph
    std::vector<std::shared_ptr<TensorNode<S>>> parents;
    // Reads this->grad, accumulates into parents' grads. Cleared after use.
    std::function<void(TensorNode<S>&)> backprop;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), S(0));
    }
    void zero_grad() { grad.assign(value.size(), S(0)); }
};

// Dense row-major tensor with optional reverse-mode gradient recording.
// Handles share the underlying node; values are treated as immutable once
// produced by an op (the optimizer mutates parameter leaves in place).
template <class S>
class TensorT {
  public:
    using Node = TensorNode<S>;
    using scalar_type = S;

    TensorT() = default;
    explicit TensorT(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static TensorT zeros(Shape shape) {
        auto n = std::make_shared<Node>();
        n->value.assign(static_cast<size_t>(numel(shape)), S(0));
        n->shape = std::move(shape);
        return TensorT(std::move(n));
    }
    static TensorT full(Shape shape, S v) {
        TensorT t = zeros(std::move(shape));
        std::fill(t.node_->value.begin(), t.node_->value.end(), v);
        return t;
    }
    static TensorT from_vector(Shape shape, std::vector<S> data) {
        require(static_cast<int64_t>(data.size()) == numel(shape),
                "data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        return TensorT(std::move(n));
    }
    static TensorT scalar(S v) { return from_vector({1}, {v}); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[i]; }
    int64_t size() const { return static_cast<int64_t>(node_->value.size()); }
    const std::vector<S>& data() const { return node_->value; }
    std::vector<S>& mutable_data() { return node_->value; }
    const std::vector<S>& grad() const { return node_->grad; }
    S item() const {
        require(size() == 1, "item() on non-scalar tensor " + shape_str(shape()));
        return node_->value[0];
    }

    TensorT& set_requires_grad(bool v = true) {
        node_->requires_grad = v;
        if (v) node_->ensure_grad();
        return *this;
    }
    bool requires_grad() const { return node_->requires_grad; }
    void zero_grad() { node_->zero_grad(); }

    std::shared_ptr<Node> node() const { return node_; }

    // Detached copy of the current values (no graph).
    TensorT detach() const { return from_vector(shape(), node_->value); }

  private:
    std::shared_ptr<Node> node_;
};

using Tensor = TensorT<float>;

namespace detail {

template <class S>
void check_finite(const std::vector<S>& v, const char* op) {
    for (S x : v)
        if (!std::isfinite(x)) throw Error(std::string("non-finite value produced by ") + op);
}

template <class S>
bool any_tracked(std::initializer_list<const TensorT<S>*> ins) {
    if (!grad_enabled()) return false;
    for (auto* t : ins)
        if (t->node()->requires_grad || t->node()->tracked) return true;
    return false;
}

// Build the result node; records parents + backward closure when tracking.
template <class S>
TensorT<S> make_result(Shape shape, std::vector<S> value, const char* op,
                       std::initializer_list<const TensorT<S>*> ins,
                       std::function<void(TensorNode<S>&)> backprop) {
    check_finite(value, op);
    auto out = TensorT<S>::from_vector(std::move(shape), std::move(value));
    if (any_tracked<S>(ins)) {
        auto n = out.node();
        n->tracked = true;
        for (auto* t : ins) n->parents.push_back(t->node());
        n->backprop = std::move(backprop);
    }
    return out;
}

}  // namespace detail

// ---- elementwise ops -------------------------------------------------------

enum class Elementwise { Add, Sub, Mul };

template <class S>
TensorT<S> elementwise(Elementwise kind, const TensorT<S>& a, const TensorT<S>& b) {
    require(a.shape() == b.shape(),
            "elementwise shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const auto& av = a.data();
    const auto& bv = b.data();
    std::vector<S> out(av.size());
    switch (kind) {
        case Elementwise::Add: for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i]; break;
        case Elementwise::Sub: for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i]; break;
        case Elementwise::Mul: for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i]; break;
    }
    auto an = a.node(), bn = b.node();
    return detail::make_result<S>(
        a.shape(), std::move(out), "elementwise", {&a, &b},
        [kind, an, bn](TensorNode<S>& n) {
            an->ensure_grad();
            bn->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) {
                S g = n.grad[i];
                switch (kind) {
                    case Elementwise::Add:
                        an->grad[i] += g;
                        bn->grad[i] += g;
                        break;
                    case Elementwise::Sub:
                        an->grad[i] += g;
                        bn->grad[i] -= g;
                        break;
                    case Elementwise::Mul:
                        an->grad[i] += g * bn->value[i];
                        bn->grad[i] += g * an->value[i];
                        break;
                }
            }
        });
}

template <class S>
TensorT<S> elementwise(Elementwise kind, const TensorT<S>& a, S b) {
    const auto& av = a.data();
    std::vector<S> out(av.size());
    switch (kind) {
        case Elementwise::Add: for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + b; break;
        case Elementwise::Sub: for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] - b; break;
        case Elementwise::Mul: for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * b; break;
    }
    auto an = a.node();
    return detail::make_result<S>(
        a.shape(), std::move(out), "elementwise-scalar", {&a},
        [kind, an, b](TensorNode<S>& n) {
            an->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) {
                S g = n.grad[i];
                an->grad[i] += (kind == Elementwise::Mul) ? g * b : g;
            }
        });
}

template <class S> TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) { return elementwise(Elementwise::Add, a, b); }
template <class S> TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) { return elementwise(Elementwise::Sub, a, b); }
template <class S> TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) { return elementwise(Elementwise::Mul, a, b); }
template <class S> TensorT<S> add(const TensorT<S>& a, S b) { return elementwise(Elementwise::Add, a, b); }
template <class S> TensorT<S> scale(const TensorT<S>& a, S b) { return elementwise(Elementwise::Mul, a, b); }

template <class S>
TensorT<S> relu(const TensorT<S>& x) {
    const auto& xv = x.data();
    std::vector<S> out(xv.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > S(0) ? xv[i] : S(0);
    auto xn = x.node();
    return detail::make_result<S>(x.shape(), std::move(out), "relu", {&x},
                                  [xn](TensorNode<S>& n) {
                                      xn->ensure_grad();
                                      for (size_t i = 0; i < n.grad.size(); ++i)
                                          if (xn->value[i] > S(0)) xn->grad[i] += n.grad[i];
                                  });
}

template <class S>
TensorT<S> sigmoid(const TensorT<S>& x) {
    const auto& xv = x.data();
    std::vector<S> out(xv.size());
    for (size_t i = 0; i < out.size(); ++i) {
        S v = xv[i];
        // split by sign to avoid exp overflow
        out[i] = v >= S(0) ? S(1) / (S(1) + std::exp(-v))
                           : std::exp(v) / (S(1) + std::exp(v));
    }
    auto xn = x.node();
    return detail::make_result<S>(x.shape(), std::move(out), "sigmoid", {&x},
                                  [xn](TensorNode<S>& n) {
                                      xn->ensure_grad();
                                      for (size_t i = 0; i < n.grad.size(); ++i) {
                                          S y = n.value[i];
                                          xn->grad[i] += n.grad[i] * y * (S(1) - y);
                                      }
                                  });
}

template <class S>
TensorT<S> sum(const TensorT<S>& x) {
    S acc = 0;
    for (S v : x.data()) acc += v;
    auto xn = x.node();
    return detail::make_result<S>({1}, std::vector<S>{acc}, "sum", {&x},
                                  [xn](TensorNode<S>& n) {
                                      xn->ensure_grad();
                                      S g = n.grad[0];
                                      for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += g;
                                  });
}

// Mean over the leading (batch) dimension of per-sample squared norms:
// (1/B) * sum_b ||a_b - b_b||^2.
template <class S>
TensorT<S> mse(const TensorT<S>& a, const TensorT<S>& b) {
    require(a.shape() == b.shape(),
            "mse shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const int batch = a.shape().empty() ? 1 : a.shape()[0];
    const auto& av = a.data();
    const auto& bv = b.data();
    S acc = 0;
    for (size_t i = 0; i < av.size(); ++i) {
        S d = av[i] - bv[i];
        acc += d * d;
    }
    acc /= S(batch);
    auto an = a.node(), bn = b.node();
    return detail::make_result<S>({1}, std::vector<S>{acc}, "mse", {&a, &b},
                                  [an, bn, batch](TensorNode<S>& n) {
                                      an->ensure_grad();
                                      bn->ensure_grad();
                                      S g = n.grad[0] * S(2) / S(batch);
                                      for (size_t i = 0; i < an->grad.size(); ++i) {
                                          S d = an->value[i] - bn->value[i];
                                          an->grad[i] += g * d;
                                          bn->grad[i] -= g * d;
                                      }
                                  });
}

// Concatenate along the channel (last) axis of NHWC tensors.
template <class S>
TensorT<S> concat_channels(const TensorT<S>& a, const TensorT<S>& b) {
    require(a.shape().size() == 4 && b.shape().size() == 4, "concat_channels needs NHWC tensors");
    for (int i = 0; i < 3; ++i)
        require(a.dim(i) == b.dim(i), "concat_channels leading-dim mismatch " +
                                          shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const int ca = a.dim(3), cb = b.dim(3);
    const int64_t pixels = int64_t(a.dim(0)) * a.dim(1) * a.dim(2);
    std::vector<S> out(size_t(pixels) * (ca + cb));
    const auto& av = a.data();
    const auto& bv = b.data();
    for (int64_t p = 0; p < pixels; ++p) {
        std::copy_n(av.begin() + p * ca, ca, out.begin() + p * (ca + cb));
        std::copy_n(bv.begin() + p * cb, cb, out.begin() + p * (ca + cb) + ca);
    }
    Shape oshape = a.shape();
    oshape[3] = ca + cb;
    auto an = a.node(), bn = b.node();
    return detail::make_result<S>(std::move(oshape), std::move(out), "concat", {&a, &b},
                                  [an, bn, ca, cb, pixels](TensorNode<S>& n) {
                                      an->ensure_grad();
                                      bn->ensure_grad();
                                      for (int64_t p = 0; p < pixels; ++p) {
                                          for (int c = 0; c < ca; ++c)
                                              an->grad[p * ca + c] += n.grad[p * (ca + cb) + c];
                                          for (int c = 0; c < cb; ++c)
                                              bn->grad[p * cb + c] += n.grad[p * (ca + cb) + ca + c];
                                      }
                                  });
}

// ---- backward --------------------------------------------------------------

// Reverse-mode sweep from a scalar loss. Visits each recorded op exactly once
// in reverse topological order; closures are released as they run.
template <class S>
void backward(TensorT<S>& loss) {
    require(loss.size() == 1, "backward requires a scalar loss, got " + shape_str(loss.shape()));
    auto root = loss.node();
    require(root->tracked || root->requires_grad, "backward called without a recorded graph");

    std::vector<TensorNode<S>*> order;
    std::vector<std::shared_ptr<TensorNode<S>>> keep_alive;
    std::unordered_set<TensorNode<S>*> seen;
    // iterative post-order DFS
    std::vector<std::pair<std::shared_ptr<TensorNode<S>>, size_t>> stack;
    stack.push_back({root, 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            auto child = node->parents[idx++];
            if (seen.insert(child.get()).second) stack.push_back({child, 0});
        } else {
            order.push_back(node.get());
            keep_alive.push_back(node);
            stack.pop_back();
        }
    }
    root->ensure_grad();
    root->grad[0] += S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode<S>* n = *it;
        if (n->backprop) {
            n->ensure_grad();
            n->backprop(*n);
            n->backprop = nullptr;
        }
    }
    // Release interior graph edges so activation memory frees with the handles.
    for (auto* n : order)
        if (!n->requires_grad) n->parents.clear();
}

}  // namespace dpdnet
