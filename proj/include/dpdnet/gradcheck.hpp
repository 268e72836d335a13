#pragma once

#include "dpdnet/tensor.hpp"

namespace dpdnet {

// Compares analytic gradients against central finite differences for every
// parameter of a deterministic graph. `build` maps the current parameter
// values to a scalar loss tensor. Returns the max relative error over all
// parameter entries; 0 for zero-parameter graphs.
template <class S>
double grad_check(const std::function<TensorT<S>(std::vector<TensorT<S>>&)>& build,
                  std::vector<TensorT<S>>& params, S eps) {
    require(eps > S(0), "grad_check eps must be positive");
    for (auto& p : params) {
        p.set_requires_grad(true);
        p.zero_grad();
    }
    auto loss = build(params);
    backward(loss);

    double max_rel = 0.0;
    for (auto& p : params) {
        auto& data = p.mutable_data();
        const auto& analytic = p.grad();
        for (size_t k = 0; k < data.size(); ++k) {
            S orig = data[k];
            S up, down;
            {
                NoGradGuard ng;
                data[k] = orig + eps;
                up = build(params).item();
                data[k] = orig - eps;
                down = build(params).item();
                data[k] = orig;
            }
            double fd = double(up - down) / (2.0 * double(eps));
            double an = double(analytic[k]);
            // differences below the central-difference resolution are noise,
            // not disagreement (e.g. exactly-zero gradients behind batch norm)
            double diff = std::abs(fd - an);
            if (diff < 1e-7) continue;
            double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
            max_rel = std::max(max_rel, diff / denom);
        }
    }
    return max_rel;
}

}  // namespace dpdnet
