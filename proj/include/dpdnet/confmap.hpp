#pragma once

#include <fstream>

#include "dpdnet/tensor.hpp"

namespace dpdnet {

struct PixelPos {
    int row = 0, col = 0;
};

struct Detection {
    int row = 0, col = 0;
    double score = 0.0;
};

using DetectionSet = std::vector<Detection>;

// Isotropic Gaussian target footprint (covariance sigma^2 * I).
struct TargetSpec {
    double sigma = 6.0;
    double amplitude = 1.0;
};

// q(x) = clamp(sum_j A * exp(-|x - c_j|^2 / (2 sigma^2)), 0, 1). Stored as a
// plain H x W map (no batch/channel axes).
template <class S = float>
TensorT<S> render_target(const std::vector<PixelPos>& labels, const TargetSpec& spec, int h,
                         int w) {
    require(spec.sigma > 0, "target sigma must be positive");
    require(spec.amplitude > 0 && spec.amplitude <= 1, "target amplitude must be in (0,1]");
    for (const auto& l : labels)
        require(l.row >= 0 && l.row < h && l.col >= 0 && l.col < w,
                "label (" + std::to_string(l.row) + "," + std::to_string(l.col) +
                    ") outside map " + std::to_string(h) + "x" + std::to_string(w));
    std::vector<S> out(size_t(h) * w, S(0));
    const double inv2s2 = 1.0 / (2.0 * spec.sigma * spec.sigma);
    // each Gaussian only contributes within a few sigma; 5 sigma is below any
    // representable effect at float precision for the thresholds used here
    const int reach = int(std::ceil(5.0 * spec.sigma));
    for (const auto& l : labels) {
        int r0 = std::max(0, l.row - reach), r1 = std::min(h - 1, l.row + reach);
        int c0 = std::max(0, l.col - reach), c1 = std::min(w - 1, l.col + reach);
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c) {
                double d2 = double(r - l.row) * (r - l.row) + double(c - l.col) * (c - l.col);
                out[size_t(r) * w + c] += S(spec.amplitude * std::exp(-d2 * inv2s2));
            }
    }
    for (auto& v : out) v = std::min(v, S(1));
    return TensorT<S>::from_vector({h, w}, std::move(out));
}

// Strict local maxima of a (2r+1)^2 neighborhood with value >= tau, then
// greedy suppression keeping higher scores at pairwise distance >= min_sep.
// Plateau ties resolve to the first pixel in raster order. Result is sorted
// by descending score.
template <class S>
DetectionSet extract_peaks(const TensorT<S>& map, double tau, int window_radius,
                           double min_separation) {
    require(map.shape().size() == 2, "extract_peaks expects an HxW map");
    require(tau > 0 && tau < 1, "tau must be in (0,1)");
    require(window_radius >= 1, "window radius must be >= 1");
    const int h = map.dim(0), w = map.dim(1);
    const auto& v = map.data();
    DetectionSet candidates;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            S val = v[size_t(r) * w + c];
            if (double(val) < tau) continue;
            bool is_max = true;
            for (int dr = -window_radius; dr <= window_radius && is_max; ++dr)
                for (int dc = -window_radius; dc <= window_radius && is_max; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                    S nv = v[size_t(rr) * w + cc];
                    if (nv > val) is_max = false;
                    // plateau: only the raster-first pixel survives
                    if (nv == val && (rr < r || (rr == r && cc < c))) is_max = false;
                }
            if (is_max) candidates.push_back({r, c, double(val)});
        }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    DetectionSet kept;
    for (const auto& cand : candidates) {
        bool ok = true;
        for (const auto& k : kept) {
            double dr = cand.row - k.row, dc = cand.col - k.col;
            if (std::sqrt(dr * dr + dc * dc) < min_separation) {
                ok = false;
                break;
            }
        }
        if (ok) kept.push_back(cand);
    }
    return kept;
}

// Per-axis linear rescaling of detection coordinates, rounded to pixels.
inline DetectionSet rescale_detections(const DetectionSet& det, int from_h, int from_w, int to_h,
                                       int to_w) {
    require(from_h > 0 && from_w > 0 && to_h > 0 && to_w > 0, "sizes must be positive");
    DetectionSet out = det;
    for (auto& d : out) {
        d.row = std::min(to_h - 1, (int)std::lround(double(d.row) * to_h / from_h));
        d.col = std::min(to_w - 1, (int)std::lround(double(d.col) * to_w / from_w));
    }
    return out;
}

// 8-bit PGM export (value * 255, rounded) for map inspection.
template <class S>
void write_confmap_pgm(const TensorT<S>& map, const std::string& path) {
    require(map.shape().size() == 2, "write_confmap_pgm expects an HxW map");
    std::ofstream os(path, std::ios::binary);
    require(os.good(), "cannot open " + path + " for writing");
    os << "P5\n" << map.dim(1) << ' ' << map.dim(0) << "\n255\n";
    for (S v : map.data()) {
        double c = std::clamp(double(v), 0.0, 1.0);
        os.put(char((unsigned char)std::lround(c * 255.0)));
    }
    require(os.good(), "I/O failure writing " + path);
}

}  // namespace dpdnet
