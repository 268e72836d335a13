#pragma once

#include <chrono>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include "dpdnet/confmap.hpp"

namespace dpdnet {

struct MatchConfig {
    double radius = 12.0;  // 2 sigma at 212x256
};

struct CountTally {
    int64_t tp = 0, fp = 0, fn = 0;
    CountTally& operator+=(const CountTally& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
    int64_t gt_positives() const { return tp + fn; }
};

// Greedy one-to-one matching by ascending distance within the radius.
inline CountTally match_frame(const DetectionSet& det, const std::vector<PixelPos>& gt,
                              const MatchConfig& cfg) {
    require(cfg.radius > 0, "match radius must be positive");
    struct Pair {
        double d;
        size_t di, gi;
    };
    std::vector<Pair> pairs;
    for (size_t i = 0; i < det.size(); ++i)
        for (size_t j = 0; j < gt.size(); ++j) {
            double dr = det[i].row - gt[j].row, dc = det[i].col - gt[j].col;
            double d = std::sqrt(dr * dr + dc * dc);
            if (d <= cfg.radius) pairs.push_back({d, i, j});
        }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        if (a.d != b.d) return a.d < b.d;
        if (a.di != b.di) return a.di < b.di;
        return a.gi < b.gi;
    });
    std::vector<bool> dused(det.size(), false), gused(gt.size(), false);
    CountTally t;
    for (const auto& p : pairs) {
        if (dused[p.di] || gused[p.gi]) continue;
        dused[p.di] = gused[p.gi] = true;
        t.tp += 1;
    }
    t.fp = int64_t(det.size()) - t.tp;
    t.fn = int64_t(gt.size()) - t.tp;
    return t;
}

// All values in percent. FNR and FPR are both normalized by ground-truth
// positives, so FPR can exceed 100 and ERR = FNR + FPR holds exactly.
struct MetricsReport {
    std::optional<double> precision, recall, f1;
    std::optional<double> fnr, fpr, err;
    std::optional<double> f1_ci, err_ci;  // 95% half-widths
    int64_t tp = 0, fp = 0, fn = 0;
};

// Wald normal-approximation half-width at 95%.
inline double confidence_interval(double p_hat, int64_t n) {
    require(n >= 1, "confidence_interval needs n >= 1");
    require(p_hat >= 0.0 && p_hat <= 1.0, "p_hat must be in [0,1]");
    constexpr double z = 1.95996;
    return z * std::sqrt(p_hat * (1.0 - p_hat) / double(n));
}

inline MetricsReport compute_metrics(const CountTally& t, int64_t n_gt) {
    require(t.tp >= 0 && t.fp >= 0 && t.fn >= 0, "negative tally");
    require(n_gt == t.tp + t.fn, "inconsistent tally: n_gt " + std::to_string(n_gt) +
                                     " != TP+FN " + std::to_string(t.tp + t.fn));
    MetricsReport r;
    r.tp = t.tp;
    r.fp = t.fp;
    r.fn = t.fn;
    if (t.tp + t.fp > 0) r.precision = 100.0 * double(t.tp) / double(t.tp + t.fp);
    if (n_gt > 0) {
        r.recall = 100.0 * double(t.tp) / double(n_gt);
        r.fnr = 100.0 * double(t.fn) / double(n_gt);
        r.fpr = 100.0 * double(t.fp) / double(n_gt);
        r.err = *r.fnr + *r.fpr;
        r.err_ci = 100.0 * confidence_interval(std::clamp(*r.err / 100.0, 0.0, 1.0), n_gt);
    } else if (t.fp > 0) {
        // no positives in ground truth: only the false-positive rate terms are
        // undefined; report ERR as undefined rather than dividing by zero
    }
    if (r.precision && r.recall && (*r.precision + *r.recall) > 0) {
        r.f1 = 2.0 * *r.precision * *r.recall / (*r.precision + *r.recall);
        if (n_gt > 0) r.f1_ci = 100.0 * confidence_interval(*r.f1 / 100.0, n_gt);
    }
    return r;
}

// ---- throughput ------------------------------------------------------------

struct FpsReport {
    double mean_fps = 0.0;
    double min_ms = 0.0, max_ms = 0.0, mean_ms = 0.0;
    std::vector<double> per_frame_ms;  // warmup excluded
};

// Wall-clock per-frame timing of `run_frame` (batch 1); the first `warmup`
// calls are excluded from the statistics.
template <class F>
FpsReport benchmark_fps(F&& run_frame, int frames, int warmup) {
    require(frames > warmup, "need at least one timed frame after warmup");
    FpsReport rep;
    for (int i = 0; i < frames; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        run_frame(i);
        auto t1 = std::chrono::steady_clock::now();
        double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        if (i >= warmup) rep.per_frame_ms.push_back(ms);
    }
    rep.min_ms = *std::min_element(rep.per_frame_ms.begin(), rep.per_frame_ms.end());
    rep.max_ms = *std::max_element(rep.per_frame_ms.begin(), rep.per_frame_ms.end());
    double total = 0;
    for (double ms : rep.per_frame_ms) total += ms;
    rep.mean_ms = total / double(rep.per_frame_ms.size());
    rep.mean_fps = 1000.0 / rep.mean_ms;
    return rep;
}

// ---- report formatting -----------------------------------------------------

inline std::string fmt_pct(const std::optional<double>& v, int prec = 2) {
    if (!v) return "-";
    std::ostringstream os;
    os << std::fixed << std::setprecision(prec) << *v;
    return os.str();
}

// One row per condition plus Totals; CSV and aligned-text renderings.
struct ConditionRow {
    std::string condition;
    MetricsReport metrics;
};

inline std::string metrics_csv(const std::vector<ConditionRow>& rows) {
    std::ostringstream os;
    os << "condition,tp,fp,fn,precision,recall,f1,f1_ci95,fnr,fpr,err,err_ci95\n";
    for (const auto& r : rows) {
        const auto& m = r.metrics;
        os << r.condition << ',' << m.tp << ',' << m.fp << ',' << m.fn << ',' << fmt_pct(m.precision)
           << ',' << fmt_pct(m.recall) << ',' << fmt_pct(m.f1) << ',' << fmt_pct(m.f1_ci) << ','
           << fmt_pct(m.fnr) << ',' << fmt_pct(m.fpr) << ',' << fmt_pct(m.err) << ','
           << fmt_pct(m.err_ci) << '\n';
    }
    return os.str();
}

inline std::string metrics_table(const std::vector<ConditionRow>& rows) {
    std::ostringstream os;
    os << std::left << std::setw(22) << "Condition" << std::right << std::setw(10) << "Precision"
       << std::setw(10) << "Recall" << std::setw(16) << "F1" << std::setw(8) << "FNR"
       << std::setw(8) << "FPR" << std::setw(16) << "ERR" << '\n';
    for (const auto& r : rows) {
        const auto& m = r.metrics;
        auto with_ci = [](const std::optional<double>& v, const std::optional<double>& ci) {
            if (!v) return std::string("-");
            return fmt_pct(v) + (ci ? " +-" + fmt_pct(ci) : "");
        };
        os << std::left << std::setw(22) << r.condition << std::right << std::setw(10)
           << fmt_pct(m.precision) << std::setw(10) << fmt_pct(m.recall) << std::setw(16)
           << with_ci(m.f1, m.f1_ci) << std::setw(8) << fmt_pct(m.fnr) << std::setw(8)
           << fmt_pct(m.fpr) << std::setw(16) << with_ci(m.err, m.err_ci) << '\n';
    }
    return os.str();
}

}  // namespace dpdnet
