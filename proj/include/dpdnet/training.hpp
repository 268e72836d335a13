#pragma once

#include <chrono>

#include "dpdnet/adam.hpp"
#include "dpdnet/model.hpp"

namespace dpdnet {

template <class S>
struct TrainSample {
    TensorT<S> input;   // (H,W), normalized depth
    TensorT<S> target;  // (H,W), rendered confidence map
};

struct TrainConfig {
    double lambda = 1.0;
    int epochs = 50;
    double lr = 0.001;
    int batch_size = 8;
    double validation_fraction = 0.1;
    uint64_t seed = 0;
    double filter_scale = 1.0;
    Variant variant = Variant::Standard;
};

struct EpochStats {
    double train_loss = 0.0;
    double val_loss = 0.0;
    double seconds = 0.0;
};

struct TrainRecord {
    std::vector<EpochStats> epochs;
    int best_epoch = -1;  // argmin of validation loss

    // wall-clock timings stay out of the CSV so reruns with the same seed
    // produce byte-identical records
    std::string csv() const {
        std::ostringstream os;
        os << "epoch,train_loss,val_loss\n";
        for (size_t i = 0; i < epochs.size(); ++i) {
            char buf[128];
            std::snprintf(buf, sizeof(buf), "%zu,%.6g,%.6g\n", i + 1, epochs[i].train_loss,
                          epochs[i].val_loss);
            os << buf;
        }
        return os.str();
    }
};

// Two-term objective: mean squared error of the refined output plus
// lambda times the main block's, both against the same targets.
template <class S>
TensorT<S> loss(const TensorT<S>& refined_out, const TensorT<S>& main_out,
                const TensorT<S>& targets, double lambda) {
    require(lambda >= 0, "lambda must be non-negative");
    auto l = mse(refined_out, targets);
    if (lambda != 0.0) l = add(l, scale(mse(main_out, targets), S(lambda)));
    return l;
}

namespace detail {

// Stack (H,W) samples into an NHWC batch.
template <class S, class Get>
TensorT<S> stack_batch(const std::vector<size_t>& idx, size_t begin, size_t end, Get&& get) {
    const auto& first = get(idx[begin]);
    const int h = first.dim(0), w = first.dim(1);
    std::vector<S> data;
    data.reserve((end - begin) * size_t(h) * w);
    for (size_t i = begin; i < end; ++i) {
        const auto& t = get(idx[i]);
        require(t.dim(0) == h && t.dim(1) == w, "inconsistent sample sizes in batch");
        data.insert(data.end(), t.data().begin(), t.data().end());
    }
    return TensorT<S>::from_vector({int(end - begin), h, w, 1}, std::move(data));
}

}  // namespace detail

// Mean value of the training objective over a sample set, inference mode
// (frozen batch-norm statistics), no parameter updates.
template <class S>
double validate(const DPDnetT<S>& model, const std::vector<TrainSample<S>>& samples,
                double lambda, int batch_size = 8) {
    if (samples.empty()) return 0.0;
    NoGradGuard ng;
    std::vector<size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), size_t(0));
    double total = 0.0;
    for (size_t b = 0; b < samples.size(); b += size_t(batch_size)) {
        size_t e = std::min(samples.size(), b + size_t(batch_size));
        auto x = detail::stack_batch<S>(idx, b, e, [&](size_t i) { return samples[i].input; });
        auto q = detail::stack_batch<S>(idx, b, e, [&](size_t i) { return samples[i].target; });
        auto out = model.forward(x, /*training=*/false);
        total += double(loss(out.refined_out, out.main_out, q, lambda).item()) * double(e - b);
    }
    return total / double(samples.size());
}

template <class S>
struct TrainResult {
    DPDnetT<S> model;
    TrainRecord record;
};

// Shuffled mini-batch Adam for config.epochs epochs; parameters of the best
// validation epoch are restored into the returned model.
template <class S>
TrainResult<S> train(const std::vector<TrainSample<S>>& samples, const TrainConfig& cfg,
                     const std::function<void(int, const EpochStats&)>& on_epoch = nullptr) {
    require(!samples.empty(), "training dataset is empty");
    require(cfg.epochs >= 1, "epochs must be >= 1");
    require(cfg.batch_size >= 1, "batch size must be >= 1");
    require(cfg.validation_fraction > 0 && cfg.validation_fraction < 1,
            "validation fraction must be in (0,1)");
    const int h = variant_height(cfg.variant), w = variant_width(cfg.variant);
    for (const auto& s : samples)
        require(s.input.dim(0) == h && s.input.dim(1) == w,
                "sample size " + shape_str(s.input.shape()) + " does not match the " +
                    variant_name(cfg.variant) + " variant");

    std::mt19937_64 rng(derive_seed(cfg.seed, "train-shuffle"));
    std::vector<size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), size_t(0));
    std::shuffle(idx.begin(), idx.end(), rng);
    size_t n_val = samples.size() >= 2
                       ? std::clamp<size_t>(size_t(std::lround(samples.size() * cfg.validation_fraction)),
                                            1, samples.size() - 1)
                       : 0;
    std::vector<TrainSample<S>> val_set;
    std::vector<size_t> train_idx;
    for (size_t i = 0; i < samples.size(); ++i) {
        if (i < n_val) val_set.push_back(samples[idx[i]]);
        else train_idx.push_back(idx[i]);
    }

    TrainResult<S> result{DPDnetT<S>(cfg.variant, cfg.filter_scale, cfg.seed), {}};
    auto& model = result.model;
    AdamState<S> opt;
    opt.lr = S(cfg.lr);
    auto params = model.parameters();

    double best_val = std::numeric_limits<double>::infinity();
    std::vector<std::vector<S>> best_params, best_buffers;
    auto snapshot = [&] {
        best_params.clear();
        best_buffers.clear();
        for (auto& [n, t] : model.registry().params()) best_params.push_back(t.data());
        for (auto& [n, t] : model.registry().buffers()) best_buffers.push_back(t.data());
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        std::shuffle(train_idx.begin(), train_idx.end(), rng);
        double epoch_loss = 0.0;
        size_t seen = 0;
        for (size_t b = 0; b < train_idx.size(); b += size_t(cfg.batch_size)) {
            size_t e = std::min(train_idx.size(), b + size_t(cfg.batch_size));
            auto x = detail::stack_batch<S>(train_idx, b, e,
                                            [&](size_t i) { return samples[i].input; });
            auto q = detail::stack_batch<S>(train_idx, b, e,
                                            [&](size_t i) { return samples[i].target; });
            auto out = model.forward(x, /*training=*/true);
            auto l = loss(out.refined_out, out.main_out, q, cfg.lambda);
            double lv = double(l.item());
            if (!std::isfinite(lv))
                throw Error("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                            std::to_string(b / cfg.batch_size + 1));
            model.zero_grads();
            backward(l);
            adam_update(params, opt);
            epoch_loss += lv * double(e - b);
            seen += e - b;
        }
        EpochStats st;
        st.train_loss = epoch_loss / double(seen);
        st.val_loss = val_set.empty() ? st.train_loss : validate(model, val_set, cfg.lambda, cfg.batch_size);
        st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.record.epochs.push_back(st);
        if (st.val_loss < best_val) {
            best_val = st.val_loss;
            result.record.best_epoch = epoch;
            snapshot();
        }
        if (on_epoch) on_epoch(epoch, st);
    }

    // restore the best validation epoch
    {
        size_t i = 0;
        for (auto& [n, t] : model.registry().params()) t.mutable_data() = best_params[i++];
        i = 0;
        for (auto& [n, t] : model.registry().buffers()) t.mutable_data() = best_buffers[i++];
    }
    return result;
}

}  // namespace dpdnet
