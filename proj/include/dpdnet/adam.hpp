#pragma once

#include "dpdnet/tensor.hpp"

namespace dpdnet {

// Adam with bias correction. Moment buffers are allocated on first use and
// always mirror their parameter shapes.
template <class S>
struct AdamState {
    S lr = S(0.001);
    S beta1 = S(0.9);
    S beta2 = S(0.999);
    S epsilon = S(1e-8);
    int64_t t = 0;
    std::vector<std::vector<S>> m, v;
};

template <class S>
void adam_update(std::vector<TensorT<S>>& params, AdamState<S>& state) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i].size(), S(0));
            state.v[i].assign(params[i].size(), S(0));
        }
    }
    require(state.m.size() == params.size(), "adam state/parameter count mismatch");
    require(state.t < std::numeric_limits<int64_t>::max(), "adam step counter overflow");
    state.t += 1;
    const S bc1 = S(1) - std::pow(state.beta1, S(state.t));
    const S bc2 = S(1) - std::pow(state.beta2, S(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i].mutable_data();
        const auto& g = params[i].grad();
        require(state.m[i].size() == p.size() && g.size() == p.size(),
                "adam shape mismatch on parameter " + std::to_string(i));
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (size_t k = 0; k < p.size(); ++k) {
            m[k] = state.beta1 * m[k] + (S(1) - state.beta1) * g[k];
            v[k] = state.beta2 * v[k] + (S(1) - state.beta2) * g[k] * g[k];
            S mhat = m[k] / bc1;
            S vhat = v[k] / bc2;
            p[k] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

}  // namespace dpdnet
