#pragma once

#include <random>

#include "dpdnet/dataio.hpp"

namespace dpdnet {

// Overhead-camera scene model: constant-depth floor, people as hemispherical
// head caps over elliptical shoulder mounds, optional chair-like boxes
// (unlabeled), additive Gaussian depth noise.
struct SceneConfig {
    int height = 212, width = 256;
    double camera_height_mm = 3400.0;
    double max_depth_mm = 4500.0;
    int min_people = 1, max_people = 4;
    double person_height_min_mm = 1500.0, person_height_max_mm = 1900.0;
    int head_radius_min_px = 8, head_radius_max_px = 13;
    double chair_probability = 0.0;
    double chair_height_min_mm = 450.0, chair_height_max_mm = 900.0;
    double noise_sigma_mm = 0.0;
    double min_center_separation_px = 40.0;
    int placement_retries = 100;
};

struct SyntheticScene {
    DepthFrame frame;
    std::vector<PixelPos> labels;
};

inline SyntheticScene generate_scene(const SceneConfig& cfg, uint64_t seed) {
    require(cfg.height > 0 && cfg.width > 0, "bad scene extents");
    require(cfg.min_people >= 0 && cfg.max_people >= cfg.min_people, "bad people count range");
    require(cfg.person_height_max_mm < cfg.camera_height_mm,
            "person height must stay below the camera");
    std::mt19937_64 rng(seed);

    const double floor_depth = cfg.camera_height_mm;
    SyntheticScene s;
    s.frame.height = cfg.height;
    s.frame.width = cfg.width;
    std::vector<double> depth(size_t(cfg.height) * cfg.width, floor_depth);
    auto composite = [&](int r, int c, double d) {
        // camera sees the nearest surface
        double& cell = depth[size_t(r) * cfg.width + c];
        cell = std::min(cell, d);
    };

    std::uniform_int_distribution<int> count_dist(cfg.min_people, cfg.max_people);
    const int people = count_dist(rng);
    std::uniform_real_distribution<double> h_dist(cfg.person_height_min_mm, cfg.person_height_max_mm);
    std::uniform_int_distribution<int> rh_dist(cfg.head_radius_min_px, cfg.head_radius_max_px);

    for (int p = 0; p < people; ++p) {
        int rh = rh_dist(rng);
        // the head must be fully visible; shoulders may clip at the frame edge
        const int margin = rh + 2;
        require(cfg.height > 2 * margin && cfg.width > 2 * margin,
                "frame too small for configured head radii");
        std::uniform_int_distribution<int> row_dist(margin, cfg.height - 1 - margin);
        std::uniform_int_distribution<int> col_dist(margin, cfg.width - 1 - margin);
        PixelPos center;
        bool placed = false;
        for (int attempt = 0; attempt < cfg.placement_retries; ++attempt) {
            center = {row_dist(rng), col_dist(rng)};
            placed = true;
            for (const auto& other : s.labels) {
                double dr = center.row - other.row, dc = center.col - other.col;
                if (std::sqrt(dr * dr + dc * dc) < cfg.min_center_separation_px) {
                    placed = false;
                    break;
                }
            }
            if (placed) break;
        }
        if (!placed)
            throw Error("infeasible placement: could not fit person " + std::to_string(p + 1) +
                        " after " + std::to_string(cfg.placement_retries) + " retries");

        const double height = h_dist(rng);
        const double head_top = floor_depth - height;
        const double shoulder_depth = floor_depth - (height - 300.0);
        // shoulders: axis-aligned ellipse around the head
        const double sa = 1.9 * rh, sb = 2.7 * rh;
        int reach = int(std::ceil(sb)) + 1;
        for (int r = center.row - reach; r <= center.row + reach; ++r)
            for (int c = center.col - reach; c <= center.col + reach; ++c) {
                if (r < 0 || r >= cfg.height || c < 0 || c >= cfg.width) continue;
                double er = (r - center.row) / sa, ec = (c - center.col) / sb;
                if (er * er + ec * ec <= 1.0) composite(r, c, shoulder_depth);
            }
        // head: hemispherical cap, ~120 mm of curvature from crown to rim
        const double cap_mm = 120.0;
        for (int r = center.row - rh; r <= center.row + rh; ++r)
            for (int c = center.col - rh; c <= center.col + rh; ++c) {
                if (r < 0 || r >= cfg.height || c < 0 || c >= cfg.width) continue;
                double d2 = double(r - center.row) * (r - center.row) +
                            double(c - center.col) * (c - center.col);
                double u2 = d2 / double(rh * rh);
                if (u2 > 1.0) continue;
                composite(r, c, head_top + cap_mm * (1.0 - std::sqrt(1.0 - u2)));
            }
        s.labels.push_back(center);
    }

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (unit(rng) < cfg.chair_probability) {
        std::uniform_real_distribution<double> ch_dist(cfg.chair_height_min_mm, cfg.chair_height_max_mm);
        std::uniform_int_distribution<int> cw_dist(16, 36);
        int cw = cw_dist(rng), ch = cw_dist(rng);
        std::uniform_int_distribution<int> row_dist(0, std::max(0, cfg.height - ch - 1));
        std::uniform_int_distribution<int> col_dist(0, std::max(0, cfg.width - cw - 1));
        int r0 = row_dist(rng), c0 = col_dist(rng);
        double chair_depth = floor_depth - ch_dist(rng);
        for (int r = r0; r < r0 + ch; ++r)
            for (int c = c0; c < c0 + cw; ++c) composite(r, c, chair_depth);
    }

    if (cfg.noise_sigma_mm > 0) {
        std::normal_distribution<double> noise(0.0, cfg.noise_sigma_mm);
        for (auto& d : depth) d += noise(rng);
    }
    s.frame.depth_mm.resize(depth.size());
    for (size_t i = 0; i < depth.size(); ++i)
        s.frame.depth_mm[i] = uint16_t(std::clamp(std::lround(depth[i]), 1l, 65535l));
    return s;
}

// Writes n frames (16-bit PGM) plus a manifest into out_dir.
inline DatasetManifest generate_dataset(const SceneConfig& cfg, int n_frames, uint64_t seed,
                                        const std::string& out_dir) {
    require(n_frames > 0, "need at least one frame");
    std::filesystem::create_directories(out_dir);
    DatasetManifest m;
    m.height = cfg.height;
    m.width = cfg.width;
    m.max_depth_mm = cfg.max_depth_mm;
    m.base_dir = out_dir;
    for (int i = 0; i < n_frames; ++i) {
        auto scene = generate_scene(cfg, derive_seed(seed, "frame-" + std::to_string(i)));
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%05d.pgm", i);
        scene.frame.frame_index = i;
        save_depth_pgm(scene.frame, (std::filesystem::path(out_dir) / name).string());
        ManifestRecord rec;
        rec.path = name;
        rec.condition = condition_for_count(scene.labels.size());
        rec.heads = std::move(scene.labels);
        m.records.push_back(std::move(rec));
    }
    save_manifest(m, (std::filesystem::path(out_dir) / "manifest.txt").string());
    return m;
}

}  // namespace dpdnet
