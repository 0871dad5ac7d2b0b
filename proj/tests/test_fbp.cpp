#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fbp_checks.hpp"
#include "grad/fbp.hpp"
#include "oracles.hpp"

using namespace grad;

namespace {

/// First draw is N = lo; every step afterwards is (0, 0).
struct StationaryGen {
    int calls = 0;
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) { return calls++ == 0 ? lo : (lo + hi) / 2; }
};

FeatureMapD random_features(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
    Rng rng(seed);
    FeatureMapD fm(1, c, h, w);
    for (auto& v : fm.data()) v = rng.uniform(-1.0, 1.0);
    return fm;
}

}  // namespace

TEST(RandomWalk, SmallBlockRanges) {
    for (std::uint64_t s = 0; s < 500; ++s) {
        Rng rng(s);
        const auto m = random_walk_mask(1, rng);
        EXPECT_EQ(m.side(), 3);
        EXPECT_TRUE(m.steps == 1 || m.steps == 2);
        EXPECT_GE(m.marked(), 1u);
        EXPECT_LE(m.marked(), 3u);
        EXPECT_EQ(m.at(1, 1), 1);
    }
}

TEST(RandomWalk, StationaryWalkMarksOnlyCenter) {
    StationaryGen g;
    const auto m = random_walk_mask(3, g);
    EXPECT_EQ(m.steps, 3);
    EXPECT_EQ(m.marked(), 1u);
    EXPECT_EQ(m.at(3, 3), 1);
}

TEST(RandomWalk, InvariantsAndUniformStepCount) {
    std::array<int, 4> hist{};
    Rng rng(77);
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const auto m = random_walk_mask(3, rng);
        ASSERT_EQ(fbp_checks::walk_violation(m, 3), "");
        ++hist[static_cast<std::size_t>(m.steps - 3)];
    }
    const double expect = n / 4.0, sd = std::sqrt(n * 0.25 * 0.75);
    for (int h : hist) EXPECT_LT(std::abs(h - expect), 4 * sd);
    EXPECT_THROW(random_walk_mask(0, rng), Error);
}

TEST(Paste, Examples) {
    RandomWalkMask center(2);
    center.at(2, 2) = 1;
    const auto c = paste_block(8, 8, center, 2.5, {4, 4});
    EXPECT_EQ(c(0, 0, 4, 4), 2.5);
    EXPECT_EQ(std::accumulate(c.data().begin(), c.data().end(), 0.0), 2.5);

    const auto zero = paste_block(8, 8, center, 0.0, {1, 1});
    for (double v : zero.data()) EXPECT_EQ(v, 0.0);

    // Border overlap: only in-bounds cells survive.
    RandomWalkMask full(1);
    std::fill(full.cells.begin(), full.cells.end(), std::uint8_t{1});
    const auto b = paste_block(5, 5, full, 1.5, {0, 0});
    std::size_t in_bounds = 0;
    for (int r = 0; r < 3; ++r)
        for (int q = 0; q < 3; ++q) in_bounds += (r >= 1 && q >= 1);
    EXPECT_DOUBLE_EQ(std::accumulate(b.data().begin(), b.data().end(), 0.0), 1.5 * static_cast<double>(in_bounds));
    EXPECT_THROW(paste_block(5, 5, full, 1.0, {5, 0}), Error);
}

TEST(Blur, ConstantImpulseAndOracle) {
    FeatureMapD k(1, 1, 6, 7, 0.75);
    const auto flat = gaussian_blur(k, 1.3, 2);
    for (double v : flat.data()) EXPECT_NEAR(v, 0.75, 1e-15);

    FeatureMapD imp(1, 1, 9, 9);
    imp(0, 0, 4, 4) = 1.0;
    const auto bi = gaussian_blur(imp, 1.0, 2);
    EXPECT_NEAR(std::accumulate(bi.data().begin(), bi.data().end(), 0.0), 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(bi(0, 0, 3, 4), bi(0, 0, 5, 4));
    EXPECT_DOUBLE_EQ(bi(0, 0, 4, 3), bi(0, 0, 3, 4));

    Rng rng(5);
    for (int t = 0; t < 50; ++t) {
        const auto h = static_cast<std::size_t>(rng.uniform_int(1, 9)), w = static_cast<std::size_t>(rng.uniform_int(1, 9));
        const double sigma = rng.uniform(0.3, 2.0);
        const int radius = static_cast<int>(rng.uniform_int(1, 4));
        FeatureMapD c(1, 1, h, w);
        for (auto& v : c.data()) v = rng.uniform(-1.0, 1.0);
        const auto out = gaussian_blur(c, sigma, radius);
        const auto ref = oracle::blur2d(std::vector<double>(c.data().begin(), c.data().end()), h, w, sigma, radius);
        for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(out.data()[i], ref[i], 1e-10);
        const double in_sum = std::accumulate(c.data().begin(), c.data().end(), 0.0);
        const double out_sum = std::accumulate(out.data().begin(), out.data().end(), 0.0);
        EXPECT_NEAR(out_sum, in_sum, 1e-6 * std::max(1.0, std::abs(in_sum)));
    }
}

TEST(Fbp, ZeroIntensityIsIdentity) {
    const auto phi = random_features(4, 8, 8, 1);
    Rng rng(2);
    FbpParams p;
    p.intensity = 0.0;
    p.center = {3, 3};
    const auto r = fbp(phi, p, rng);
    EXPECT_EQ(r.features, phi);
    EXPECT_EQ(r.mask.count(0), 0u);
}

TEST(Fbp, NearDeltaKernelConcentratesAtCenter) {
    const auto phi = random_features(2, 7, 7, 3);
    StationaryGen g;
    FbpParams p;
    p.block = 1;
    p.intensity = 2.0;
    p.center = {3, 3};
    p.blur_sigma = 0.1;
    const auto r = fbp(phi, p, g);
    EXPECT_EQ(r.mask(0, 3, 3), 1);
    EXPECT_NEAR(r.blurred(0, 0, 3, 3), 2.0, 1e-12);
}

TEST(Fbp, PerturbationIsChannelConstantAndLocal) {
    Rng seeds(9);
    for (int t = 0; t < 200; ++t) {
        const auto phi = random_features(3, 10, 12, static_cast<std::uint64_t>(t));
        Rng rng(static_cast<std::uint64_t>(t) + 1000);
        FbpParams p;
        p.block = static_cast<int>(seeds.uniform_int(1, 4));
        p.intensity = seeds.uniform(-3.0, 3.0);
        p.center = {static_cast<std::size_t>(seeds.uniform_int(0, 9)), static_cast<std::size_t>(seeds.uniform_int(0, 11))};
        const auto r = fbp(phi, p, rng);
        const auto canvas = paste_block(10, 12, r.shape, p.intensity, p.center);
        for (std::size_t y = 0; y < 10; ++y)
            for (std::size_t x = 0; x < 12; ++x) {
                const double blurred = r.blurred(0, 0, y, x);
                for (std::size_t c = 0; c < 3; ++c)
                    ASSERT_NEAR(r.features(0, c, y, x) - phi(0, c, y, x), blurred, 1e-12);
                const long d = fbp_checks::distance_to_paste(canvas, y, x);
                if (r.mask(0, y, x)) {
                    ASSERT_LE(d, p.blur_radius);  // support containment
                }
                if (!r.mask(0, y, x) && d > p.blur_radius) {
                    for (std::size_t c = 0; c < 3; ++c) ASSERT_EQ(r.features(0, c, y, x), phi(0, c, y, x));
                }
                ASSERT_EQ(r.mask(0, y, x), std::abs(blurred) > 0.01 * std::abs(p.intensity) ? 1 : 0);
            }
    }
}

TEST(Fbp, IntensityLinearity) {
    const auto phi = FeatureMapD(1, 2, 9, 9);
    Rng rng(4);
    const auto shape = random_walk_mask(2, rng);
    FbpParams p;
    p.center = {4, 4};
    p.shape = shape;
    p.intensity = 0.7;
    Rng r1(0), r2(0);
    const auto a = fbp(phi, p, r1);
    p.intensity = 1.4;
    const auto b = fbp(phi, p, r2);
    for (std::size_t i = 0; i < a.features.size(); ++i) EXPECT_EQ(b.features.data()[i], 2.0 * a.features.data()[i]);
    EXPECT_EQ(a.mask, b.mask);
}

TEST(Fbp, RejectsBadInputs) {
    Rng rng(1);
    FbpParams p;
    p.center = {0, 0};
    EXPECT_THROW(fbp(FeatureMapD(2, 1, 4, 4), p, rng), Error);
    p.center = {4, 0};
    EXPECT_THROW(fbp(FeatureMapD(1, 1, 4, 4), p, rng), Error);
    p.center = {0, 0};
    p.blur_sigma = 0.0;
    EXPECT_THROW(fbp(FeatureMapD(1, 1, 4, 4), p, rng), Error);
}

TEST(FbpBatch, CleanWhenPAnomZero) {
    FeatureMap batch(6, 3, 8, 8, 0.5f);
    FbpSamplerConfig cfg;
    cfg.p_anom = 0.0;
    const auto out = fbp_batch(batch, cfg, 3);
    EXPECT_EQ(out.features, batch);
    for (auto v : out.masks.cells()) EXPECT_EQ(v, 0);
}

TEST(FbpBatch, DeterministicAndBinomialFraction) {
    Rng rng(8);
    FeatureMap batch(1000, 2, 6, 6);
    for (auto& v : batch.data()) v = static_cast<float>(rng.uniform());
    FbpSamplerConfig cfg;
    const auto a = fbp_batch(batch, cfg, 17), b = fbp_batch(batch, cfg, 17);
    EXPECT_EQ(a.features, b.features);
    EXPECT_EQ(a.masks, b.masks);
    const double k = std::accumulate(a.anomalous.begin(), a.anomalous.end(), 0.0);
    EXPECT_LT(std::abs(k - 500.0), 4.0 * std::sqrt(1000 * 0.25));
    FbpSamplerConfig bad;
    bad.block_min = 3;
    bad.block_max = 2;
    EXPECT_THROW(fbp_batch(batch, bad, 1), Error);
}

TEST(FbpBatch, GaussianNoiseModeCoversMapWithMatchedEnergy) {
    Rng rng(12);
    FeatureMap batch(200, 8, 12, 12);
    for (auto& v : batch.data()) v = static_cast<float>(rng.uniform());
    FbpSamplerConfig cfg;
    cfg.p_anom = 1.0;
    const auto f = fbp_batch(batch, cfg, 5);
    cfg.mode = SynthesisMode::gaussian_noise;
    const auto g = fbp_batch(batch, cfg, 5);
    double ef = 0.0, eg = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        ef += std::pow(double(f.features.data()[i]) - batch.data()[i], 2);
        eg += std::pow(double(g.features.data()[i]) - batch.data()[i], 2);
    }
    EXPECT_NEAR(eg / ef, 1.0, 0.05);
    for (auto v : g.masks.cells()) EXPECT_EQ(v, 1);
}
