#pragma once

#include "dpdnet/evaluation.hpp"
#include "dpdnet/synth.hpp"
#include "dpdnet/training.hpp"

namespace dpdnet {

// Decoding defaults: threshold, local-maxima window, and sigma-scaled
// minimum peak separation.
struct DecodeConfig {
    double tau = 0.5;
    int window_radius = 3;
    double min_separation_sigma = 2.0;  // in units of the variant sigma
};

struct PreparedFrame {
    TensorT<float> input;              // (H,W) at variant resolution
    std::vector<PixelPos> labels;      // rescaled to variant resolution
    std::string condition;
    int native_h = 0, native_w = 0;
};

// Loads every manifest frame, normalizes/resizes it to the variant input
// size, and rescales the head labels to match.
inline std::vector<PreparedFrame> prepare_frames(const DatasetManifest& m, Variant variant) {
    const int h = variant_height(variant), w = variant_width(variant);
    std::vector<PreparedFrame> out;
    out.reserve(m.records.size());
    for (const auto& rec : m.records) {
        PreparedFrame pf;
        auto frame = load_depth(m.resolve(rec));
        require(frame.height == m.height && frame.width == m.width,
                "frame " + m.resolve(rec) + " is " + std::to_string(frame.height) + "x" +
                    std::to_string(frame.width) + " but manifest declares " +
                    std::to_string(m.height) + "x" + std::to_string(m.width));
        pf.input = prepare_input<float>(frame, h, w, m.max_depth_mm);
        pf.labels = rescale_labels(rec.heads, m.height, m.width, h, w);
        pf.condition = rec.condition;
        pf.native_h = m.height;
        pf.native_w = m.width;
        out.push_back(std::move(pf));
    }
    return out;
}

inline std::vector<TrainSample<float>> make_train_samples(const std::vector<PreparedFrame>& frames,
                                                          Variant variant) {
    TargetSpec spec;
    spec.sigma = variant_sigma(variant);
    std::vector<TrainSample<float>> out;
    out.reserve(frames.size());
    for (const auto& f : frames) {
        TrainSample<float> s;
        s.input = f.input;
        s.target = render_target<float>(f.labels, spec, f.input.dim(0), f.input.dim(1));
        out.push_back(std::move(s));
    }
    return out;
}

struct FrameResult {
    DetectionSet detections;            // at variant resolution
    TensorT<float> refined_map;         // (H,W)
    TensorT<float> main_map;            // (H,W)
};

// Single-frame inference + peak decoding.
inline FrameResult infer_frame(const DPDnet& model, const TensorT<float>& input,
                               const DecodeConfig& dc) {
    NoGradGuard ng;
    const int h = input.dim(0), w = input.dim(1);
    auto batch = TensorT<float>::from_vector({1, h, w, 1}, input.data());
    auto out = model.forward(batch, /*training=*/false);
    FrameResult r;
    r.main_map = TensorT<float>::from_vector({h, w}, out.main_out.data());
    r.refined_map = TensorT<float>::from_vector({h, w}, out.refined_out.data());
    r.detections = extract_peaks(r.refined_map, dc.tau, dc.window_radius,
                                 dc.min_separation_sigma * model.sigma());
    return r;
}

// Per-condition metric rows in manifest order of first appearance, plus a
// trailing Totals row.
inline std::vector<ConditionRow> evaluate_conditions(
    const std::vector<std::string>& conditions, const std::vector<CountTally>& tallies) {
    require(conditions.size() == tallies.size(), "condition/tally count mismatch");
    std::vector<std::string> order;
    std::map<std::string, CountTally> by_cond;
    CountTally total;
    for (size_t i = 0; i < conditions.size(); ++i) {
        if (!by_cond.count(conditions[i])) order.push_back(conditions[i]);
        by_cond[conditions[i]] += tallies[i];
        total += tallies[i];
    }
    std::vector<ConditionRow> rows;
    for (const auto& c : order)
        rows.push_back({c, compute_metrics(by_cond[c], by_cond[c].gt_positives())});
    rows.push_back({"Totals", compute_metrics(total, total.gt_positives())});
    return rows;
}

}  // namespace dpdnet
