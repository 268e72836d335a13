#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "dpdnet/confmap.hpp"

using namespace dpdnet;

TEST(RenderTarget, PeakIsOneAtLabel) {
    auto m = render_target<float>({{20, 30}}, TargetSpec{}, 64, 64);
    ASSERT_EQ(m.shape(), (Shape{64, 64}));
    EXPECT_FLOAT_EQ(m.data()[20 * 64 + 30], 1.0f);
}

TEST(RenderTarget, ValueAtOneSigma) {
    TargetSpec spec;
    spec.sigma = 6.0;
    auto m = render_target<double>({{32, 32}}, spec, 64, 64);
    EXPECT_NEAR(m.data()[32 * 64 + 38], std::exp(-0.5), 1e-9);       // 6 px right
    EXPECT_NEAR(m.data()[(32 + 6) * 64 + 32], std::exp(-0.5), 1e-9); // 6 px down
}

TEST(RenderTarget, EmptyLabelsGiveZeroMap) {
    auto m = render_target<float>({}, TargetSpec{}, 32, 48);
    for (float v : m.data()) EXPECT_FLOAT_EQ(v, 0.0f);
    EXPECT_TRUE(extract_peaks(m, 0.5, 3, 12.0).empty());
}

TEST(RenderTarget, OutOfBoundsLabelThrows) {
    EXPECT_THROW(render_target<float>({{32, 64}}, TargetSpec{}, 64, 64), Error);
    EXPECT_THROW(render_target<float>({{-1, 0}}, TargetSpec{}, 64, 64), Error);
}

TEST(RenderTarget, OverlapClampsToOne) {
    auto m = render_target<float>({{16, 16}, {16, 18}}, TargetSpec{}, 32, 32);
    for (float v : m.data()) EXPECT_LE(v, 1.0f);
    EXPECT_FLOAT_EQ(m.data()[16 * 32 + 16], 1.0f);
}

TEST(RenderTarget, PermutationInvariant) {
    std::vector<PixelPos> a = {{5, 6}, {20, 25}, {40, 10}};
    std::vector<PixelPos> b = {{40, 10}, {5, 6}, {20, 25}};
    auto ma = render_target<float>(a, TargetSpec{}, 50, 50);
    auto mb = render_target<float>(b, TargetSpec{}, 50, 50);
    // summation order differs, so allow last-ulp differences
    for (size_t i = 0; i < ma.data().size(); ++i) EXPECT_NEAR(ma.data()[i], mb.data()[i], 1e-6);
}

TEST(ExtractPeaks, SingleGaussianRecoversCenter) {
    auto m = render_target<float>({{40, 55}}, TargetSpec{}, 106, 128);
    auto det = extract_peaks(m, 0.5, 3, 12.0);
    ASSERT_EQ(det.size(), 1u);
    EXPECT_EQ(det[0].row, 40);
    EXPECT_EQ(det[0].col, 55);
    EXPECT_NEAR(det[0].score, 1.0, 1e-6);
}

TEST(ExtractPeaks, BelowThresholdIgnored) {
    auto m = Tensor::full({10, 10}, 0.4f);
    Tensor m2 = Tensor::from_vector({10, 10}, m.data());
    m2.mutable_data()[5 * 10 + 5] = 0.45f;  // local max but below tau
    EXPECT_TRUE(extract_peaks(m2, 0.5, 3, 5.0).empty());
}

TEST(ExtractPeaks, PlateauKeepsRasterFirstPixel) {
    auto m = Tensor::zeros({9, 9});
    m.mutable_data()[4 * 9 + 4] = 0.9f;
    m.mutable_data()[4 * 9 + 5] = 0.9f;  // same value, later in raster order
    auto det = extract_peaks(m, 0.5, 3, 1.0);
    ASSERT_EQ(det.size(), 1u);
    EXPECT_EQ(det[0].row, 4);
    EXPECT_EQ(det[0].col, 4);
}

TEST(ExtractPeaks, SuppressionKeepsHigherScore) {
    auto m = Tensor::zeros({30, 30});
    m.mutable_data()[10 * 30 + 10] = 0.8f;
    m.mutable_data()[10 * 30 + 18] = 0.9f;  // 8 px apart, min_sep 12
    auto det = extract_peaks(m, 0.5, 3, 12.0);
    ASSERT_EQ(det.size(), 1u);
    EXPECT_EQ(det[0].col, 18);
    // with a smaller separation both survive, sorted by descending score
    auto det2 = extract_peaks(m, 0.5, 3, 5.0);
    ASSERT_EQ(det2.size(), 2u);
    EXPECT_GT(det2[0].score, det2[1].score);
}

TEST(ExtractPeaks, RoundTripProperty) {
    std::mt19937_64 rng(41);
    const int h = 106, w = 128;
    TargetSpec spec;
    spec.sigma = 3.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::uniform_int_distribution<int> nr(0, 4), rr(8, h - 9), cc(8, w - 9);
        std::vector<PixelPos> labels;
        int want = nr(rng);
        int attempts = 0;
        while ((int)labels.size() < want && attempts++ < 200) {
            PixelPos p{rr(rng), cc(rng)};
            bool ok = true;
            for (auto& q : labels) {
                double dr = p.row - q.row, dc = p.col - q.col;
                if (std::sqrt(dr * dr + dc * dc) < 4 * spec.sigma) ok = false;
            }
            if (ok) labels.push_back(p);
        }
        auto m = render_target<float>(labels, spec, h, w);
        auto det = extract_peaks(m, 0.5, 3, 2 * spec.sigma);
        ASSERT_EQ(det.size(), labels.size()) << "trial " << trial;
        for (const auto& l : labels) {
            double best = 1e9;
            for (const auto& d : det)
                best = std::min(best, std::hypot(double(d.row - l.row), double(d.col - l.col)));
            EXPECT_LE(best, 1.0) << "trial " << trial;
        }
    }
}

TEST(ExtractPeaks, InvalidArgumentsThrow) {
    auto m = Tensor::zeros({8, 8});
    EXPECT_THROW(extract_peaks(m, 0.0, 3, 5.0), Error);
    EXPECT_THROW(extract_peaks(m, 1.5, 3, 5.0), Error);
    EXPECT_THROW(extract_peaks(m, 0.5, 0, 5.0), Error);
}

TEST(RescaleDetections, HalfToFullResolution) {
    DetectionSet det = {{53, 64, 0.9}};
    auto out = rescale_detections(det, 106, 128, 212, 256);
    EXPECT_EQ(out[0].row, 106);
    EXPECT_EQ(out[0].col, 128);
}

TEST(RescaleDetections, ArbitraryRatio) {
    DetectionSet det = {{10, 10, 1.0}};
    auto out = rescale_detections(det, 100, 100, 320, 240);
    EXPECT_EQ(out[0].row, 32);
    EXPECT_EQ(out[0].col, 24);
}

TEST(RescaleDetections, ClampsToTargetBounds) {
    DetectionSet det = {{105, 127, 1.0}};
    auto out = rescale_detections(det, 106, 128, 212, 256);
    EXPECT_LE(out[0].row, 211);
    EXPECT_LE(out[0].col, 255);
}

TEST(ConfmapPgm, WritesHeaderAndScaledBytes) {
    auto path = std::filesystem::temp_directory_path() / "confmap_test.pgm";
    auto m = Tensor::from_vector({2, 3}, {0.f, 0.5f, 1.f, 0.25f, 0.75f, 1.f});
    write_confmap_pgm(m, path.string());
    std::ifstream is(path, std::ios::binary);
    std::string magic, dims1, dims2, maxval;
    is >> magic >> dims1 >> dims2 >> maxval;
    EXPECT_EQ(magic, "P5");
    EXPECT_EQ(dims1, "3");
    EXPECT_EQ(dims2, "2");
    EXPECT_EQ(maxval, "255");
    is.get();  // single whitespace after header
    unsigned char px[6];
    is.read(reinterpret_cast<char*>(px), 6);
    EXPECT_EQ(px[0], 0);
    EXPECT_EQ(px[1], 128);
    EXPECT_EQ(px[2], 255);
    std::filesystem::remove(path);
}
