#include <gtest/gtest.h>

#include <random>

#include "dpdnet/gradcheck.hpp"
#include "dpdnet/model.hpp"

using namespace dpdnet;

using DT = TensorT<double>;
using Build = std::function<DT(std::vector<DT>&)>;

namespace {

DT random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(size_t(numel(shape)));
    for (auto& x : v) x = d(rng);
    return DT::from_vector(std::move(shape), std::move(v));
}

}  // namespace

TEST(GradCheck, LinearLayer) {
    std::mt19937_64 rng(21);
    auto x = random_tensor({1, 1, 1, 4}, rng);
    std::vector<DT> params{random_tensor({1, 1, 4, 2}, rng), random_tensor({2}, rng)};
    Build build = [&](std::vector<DT>& p) {
        auto y = conv2d(x, p[0], p[1], 1, 1);
        return mse(y, DT::zeros(y.shape()));
    };
    EXPECT_LT(grad_check<double>(build, params, 1e-6), 1e-8);
}

TEST(GradCheck, Conv2dStrided) {
    std::mt19937_64 rng(22);
    auto x = random_tensor({1, 4, 4, 3}, rng);
    auto target = random_tensor({1, 2, 2, 2}, rng);
    std::vector<DT> params{random_tensor({3, 3, 3, 2}, rng), random_tensor({2}, rng), x};
    Build build = [&](std::vector<DT>& p) {
        auto y = conv2d(p[2], p[0], p[1], 2, 2);
        return mse(y, target);
    };
    EXPECT_LT(grad_check<double>(build, params, 1e-5), 1e-5);
}

TEST(GradCheck, SeparableConv) {
    std::mt19937_64 rng(23);
    auto x = random_tensor({1, 4, 4, 3}, rng);
    std::vector<DT> params{random_tensor({3, 3, 3}, rng), random_tensor({1, 1, 3, 2}, rng),
                           random_tensor({2}, rng), x};
    Build build = [&](std::vector<DT>& p) {
        auto y = separable_conv2d(p[3], p[0], p[1], p[2], 1, 1);
        return mse(y, DT::zeros(y.shape()));
    };
    EXPECT_LT(grad_check<double>(build, params, 1e-5), 1e-5);
}

TEST(GradCheck, TransposedConv) {
    std::mt19937_64 rng(24);
    auto x = random_tensor({1, 3, 3, 2}, rng);
    std::vector<DT> params{random_tensor({3, 3, 3, 2}, rng), random_tensor({3}, rng), x};
    Build build = [&](std::vector<DT>& p) {
        auto y = transposed_conv2d(p[2], p[0], p[1], 2, 2);
        return mse(y, DT::zeros(y.shape()));
    };
    EXPECT_LT(grad_check<double>(build, params, 1e-5), 1e-5);
}

TEST(GradCheck, BatchNormTraining) {
    std::mt19937_64 rng(25);
    auto target = random_tensor({2, 3, 3, 2}, rng);
    std::vector<DT> params{random_tensor({2}, rng, 0.5, 1.5), random_tensor({2}, rng),
                           random_tensor({2, 3, 3, 2}, rng)};
    Build build = [&](std::vector<DT>& p) {
        BatchNormStats<double> st{std::vector<double>(2, 0.0), std::vector<double>(2, 1.0)};
        auto y = batch_norm(p[2], p[0], p[1], st, true);
        return mse(y, target);
    };
    EXPECT_LT(grad_check<double>(build, params, 1e-5), 1e-5);
}

TEST(GradCheck, BatchNormInference) {
    std::mt19937_64 rng(26);
    std::vector<DT> params{random_tensor({2}, rng, 0.5, 1.5), random_tensor({2}, rng),
                           random_tensor({1, 3, 3, 2}, rng)};
    Build build = [&](std::vector<DT>& p) {
        BatchNormStats<double> st{std::vector<double>{0.1, -0.2}, std::vector<double>{1.5, 0.7}};
        auto y = batch_norm(p[2], p[0], p[1], st, false);
        return mse(y, DT::zeros(y.shape()));
    };
    EXPECT_LT(grad_check<double>(build, params, 1e-5), 1e-5);
}

TEST(GradCheck, PoolCropPadUpsampleChain) {
    std::mt19937_64 rng(27);
    std::vector<DT> params{random_tensor({1, 6, 6, 2}, rng)};
    Build build = [&](std::vector<DT>& p) {
        auto h = max_pool(p[0], 2, 2);                // 3x3
        h = zero_pad2d(h, {1, 0, 0, 1});             // 4x4
        h = upsample_nearest(h, 2, 2);               // 8x8
        h = crop2d(h, {1, 1, 2, 2});                 // 6x4
        return mse(h, DT::zeros(h.shape()));
    };
    EXPECT_LT(grad_check<double>(build, params, 1e-5), 1e-5);
}

TEST(GradCheck, Activations) {
    std::mt19937_64 rng(28);
    // keep pre-activations away from the relu kink
    std::vector<double> v(18);
    std::uniform_real_distribution<double> d(0.2, 1.0);
    std::bernoulli_distribution flip(0.5);
    for (auto& x : v) x = d(rng) * (flip(rng) ? 1.0 : -1.0);
    std::vector<DT> params{DT::from_vector({1, 3, 3, 2}, std::move(v))};
    Build build = [&](std::vector<DT>& p) {
        auto h = relu(p[0]);
        h = sigmoid(h);
        return mse(h, DT::zeros(h.shape()));
    };
    EXPECT_LT(grad_check<double>(build, params, 1e-6), 1e-6);
}

TEST(GradCheck, EncodingResidualBlock) {
    std::mt19937_64 rng(29);
    Registry<double> reg;
    ResidualBlockSpec spec{2, 2, 3, 3, 2, BlockDirection::Encoding, ConvFlavor::Standard};
    auto blk = ResidualBlock<double>::make(reg, "blk", spec, 2, rng);
    auto x = random_tensor({2, 4, 4, 2}, rng);
    // a nonzero target: against zeros the batch-norms make the loss nearly
    // invariant to upstream weights and the finite differences degenerate
    auto target = random_tensor({2, 2, 2, 3}, rng);
    std::vector<DT> params;
    for (auto& [n, t] : reg.params()) params.push_back(t);
    params.push_back(x);
    Build build = [&](std::vector<DT>& p) {
        auto y = blk(p.back(), true);
        return mse(y, target);
    };
    EXPECT_LT(grad_check<double>(build, params, 1e-5), 1e-4);
}

TEST(GradCheck, DecodingSeparableResidualBlock) {
    std::mt19937_64 rng(30);
    Registry<double> reg;
    ResidualBlockSpec spec{3, 3, 2, 3, 2, BlockDirection::Decoding, ConvFlavor::Separable};
    auto blk = ResidualBlock<double>::make(reg, "blk", spec, 3, rng);
    auto x = random_tensor({2, 3, 3, 3}, rng);
    auto target = random_tensor({2, 6, 6, 2}, rng);
    std::vector<DT> params;
    for (auto& [n, t] : reg.params()) params.push_back(t);
    params.push_back(x);
    Build build = [&](std::vector<DT>& p) {
        auto y = blk(p.back(), true);
        return mse(y, target);
    };
    EXPECT_LT(grad_check<double>(build, params, 1e-5), 1e-4);
}

TEST(GradCheck, TwoTermLossSharedGraph) {
    // the Eq-(1) style loss: mse(refined, t) + lambda * mse(main, t), where
    // refined consumes main's output
    std::mt19937_64 rng(31);
    auto target = random_tensor({1, 3, 3, 1}, rng);
    std::vector<DT> params{random_tensor({3, 3, 1, 1}, rng), random_tensor({3, 3, 1, 1}, rng),
                           random_tensor({1, 3, 3, 1}, rng)};
    Build build = [&](std::vector<DT>& p) {
        auto main_out = sigmoid(conv2d(p[2], p[0], DT(), 1, 1));
        auto refined = sigmoid(conv2d(main_out, p[1], DT(), 1, 1));
        return add(mse(refined, target), mse(main_out, target));
    };
    EXPECT_LT(grad_check<double>(build, params, 1e-5), 1e-5);
}

TEST(GradCheck, ZeroParameterGraphReturnsZero) {
    std::vector<DT> params;
    Build build = [](std::vector<DT>&) {
        auto c = DT::scalar(2.0).set_requires_grad();
        return mse(c, DT::zeros({1}));
    };
    EXPECT_EQ(grad_check<double>(build, params, 1e-5), 0.0);
}
