#include <gtest/gtest.h>

#include "grad/checkpoint.hpp"
#include "grad/training.hpp"
#include "grad_checks.hpp"

using namespace grad;

namespace {

FeatureMap smooth_features(std::size_t n, std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
    Rng rng(seed);
    FeatureMap fm(n, c, h, w);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x)
                    fm(i, ch, y, x) = static_cast<float>(0.5 + 0.3 * std::sin(0.7 * double(y) + 1.3 * double(ch)) *
                                                                   std::cos(0.5 * double(x)) +
                                                         0.02 * rng.normal());
    return fm;
}

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.epochs_stage1 = 3;
    cfg.epochs_stage2 = 5;
    cfg.batch = 4;
    cfg.seed = 5;
    return cfg;
}

}  // namespace

TEST(Fuse, Examples) {
    FeatureMapD xn(1, 1, 2, 2, 2.0), xa(1, 1, 2, 2, 4.0);
    EXPECT_EQ(fuse(xn, xa, 1.0), xn);
    EXPECT_EQ(fuse(xn, xa, 0.0), xa);
    const auto mid = fuse(xn, xa, 0.5);
    for (double v : mid.data()) EXPECT_EQ(v, 3.0);
    for (double lam : {0.1, 0.37, 0.9}) EXPECT_EQ(fuse(xa, xa, lam), xa);
    EXPECT_THROW(fuse(xn, FeatureMapD(1, 2, 2, 2), 0.5), Error);
    EXPECT_THROW(fuse(xn, xa, 1.5), Error);
}

TEST(Losses, Examples) {
    FeatureMapD a(1, 2, 1, 2, 1.0), b(1, 2, 1, 2, 3.0);
    EXPECT_DOUBLE_EQ(loss_rec(a, b), 4.0);
    EXPECT_EQ(loss_rec(a, a), 0.0);

    AnomalyMask clean(1, 1, 2);
    EXPECT_EQ(loss_con(a, a, clean, 0.5), 0.0);

    // One masked location with cosine 0.8: max(0, 0.8 - 0.5).
    FeatureMapD in(1, 2, 1, 1), xa(1, 2, 1, 1);
    in(0, 0, 0, 0) = 1.0;
    xa(0, 0, 0, 0) = 0.8;
    xa(0, 1, 0, 0) = 0.6;
    AnomalyMask one(1, 1, 1);
    one(0, 0, 0) = 1;
    EXPECT_NEAR(loss_con(in, xa, one, 0.5), 0.3, 1e-15);
}

TEST(Losses, CosineGuard) {
    const std::vector<double> z{0.0, 0.0}, v{1.0, 2.0};
    EXPECT_EQ(cosine(z, v), 0.0);
    EXPECT_NEAR(cosine(v, v), 1.0, 1e-15);
}

TEST(Gradients, ReconstructionLossMatchesFiniteDifferences) {
    for (std::uint64_t s = 0; s < 3; ++s) {
        const auto r = grad_checks::check_rec(s);
        EXPECT_EQ(r.params, 2u * 16u * 3u + 8u);
        EXPECT_LT(r.max_rel, 1e-4) << "seed " << s;
    }
}

TEST(Gradients, ContrastiveLossMatchesFiniteDifferences) {
    for (std::uint64_t s = 0; s < 3; ++s) {
        const auto r = grad_checks::check_con(s);
        EXPECT_EQ(r.params, 16u * 3u + 8u);
        EXPECT_LT(r.max_rel, 1e-4) << "seed " << s;
    }
}

TEST(Gradients, LambdaOneNeverTouchesAbnormalPathway) {
    auto p = grad_checks::tiny_problem(1);
    p.model.lambda = 1.0;
    // A poisoned abnormal grid would turn the loss into NaN if it were sampled.
    for (auto& v : p.model.abnormal.grid.values()) v = NAN;
    NormalGrads g;
    const double l = normal_loss_grad(p.model, p.inputs, static_cast<const FeatureMapD*>(nullptr), &g);
    EXPECT_DOUBLE_EQ(l, loss_rec(p.inputs, sample_normal(p.model.normal, p.inputs)));
}

TEST(Gradients, LambdaZeroGivesZeroNormalGradient) {
    auto p = grad_checks::tiny_problem(2);
    p.model.lambda = 0.0;
    NormalGrads g;
    normal_loss_grad(p.model, p.inputs, static_cast<const FeatureMapD*>(nullptr), &g);
    for (double v : g.local) EXPECT_EQ(v, 0.0);
    for (double v : g.map.weights) EXPECT_EQ(v, 0.0);
}

TEST(Optimizers, SgdMomentumAndAdamStep) {
    std::vector<double> p{1.0, -1.0}, v(2, 0.0);
    const std::vector<double> g{0.5, -0.5};
    sgd_step<double>(p, g, 0.1, 0.9, v);
    EXPECT_DOUBLE_EQ(p[0], 0.95);
    sgd_step<double>(p, g, 0.1, 0.9, v);
    EXPECT_DOUBLE_EQ(v[0], 0.95);
    EXPECT_DOUBLE_EQ(p[0], 0.95 - 0.095);

    std::vector<double> q{1.0, 1.0};
    AdamState s;
    adam_step<double>(q, g, 0.01, 0.9, 0.999, s);
    // First bias-corrected Adam step moves each coordinate by lr against the gradient sign.
    EXPECT_NEAR(q[0], 0.99, 1e-6);
    EXPECT_NEAR(q[1], 1.01, 1e-6);
}

TEST(Training, StagesReduceLossAndTouchOnlyTheirParameters) {
    const auto data = smooth_features(16, 6, 8, 8, 1);
    auto cfg = small_config();
    auto model = init_model<float>({6, 8, 8, 6, 6, 6, 6}, cfg, {});
    const auto init = model;

    const auto r1 = train_stage1_abnormal(model, data, cfg);
    EXPECT_EQ(model.normal, init.normal);
    EXPECT_NE(model.abnormal, init.abnormal);
    ASSERT_EQ(r1.epoch_loss.size(), 3u);
    EXPECT_LT(r1.epoch_loss.back(), r1.initial_loss);

    const auto frozen = model.abnormal;
    const auto r2 = train_stage2_normal(model, data, cfg);
    EXPECT_EQ(model.abnormal, frozen);
    ASSERT_EQ(r2.epoch_loss.size(), 5u);
    EXPECT_LT(r2.epoch_loss.back(), 0.5 * r2.initial_loss);
    for (std::size_t e = 1; e < r2.epoch_loss.size(); ++e) EXPECT_LE(r2.epoch_loss[e], r2.epoch_loss[e - 1] * 1.05);
}

TEST(Training, SgdAlsoDescends) {
    const auto data = smooth_features(16, 4, 6, 6, 2);
    auto cfg = small_config();
    cfg.optimizer = OptimizerKind::sgd;
    cfg.lr_grid = 2.0;
    cfg.lr_map = 0.05;
    auto model = init_model<float>({4, 6, 6, 4, 4, 4, 4}, cfg, {});
    const auto r = train_stage2_normal(model, data, cfg);
    EXPECT_LT(r.epoch_loss.back(), r.initial_loss);
}

TEST(Training, ZeroEpochsLeavesInitializationAndRunsAreDeterministic) {
    const auto data = smooth_features(8, 4, 6, 6, 3);
    auto cfg = small_config();
    cfg.epochs_stage1 = cfg.epochs_stage2 = 0;
    auto model = init_model<float>({4, 6, 6, 4, 4, 4, 4}, cfg, {});
    const auto init = model;
    train_stage1_abnormal(model, data, cfg);
    train_stage2_normal(model, data, cfg);
    EXPECT_EQ(encode_checkpoint(model), encode_checkpoint(init));

    cfg = small_config();
    auto a = init_model<float>({4, 6, 6, 4, 4, 4, 4}, cfg, {});
    auto b = a;
    train_stage1_abnormal(a, data, cfg);
    train_stage2_normal(a, data, cfg);
    train_stage1_abnormal(b, data, cfg);
    train_stage2_normal(b, data, cfg);
    EXPECT_EQ(encode_checkpoint(a), encode_checkpoint(b));
}

TEST(Training, RejectsBadConfigAndData) {
    auto cfg = small_config();
    cfg.th = 1.5;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = small_config();
    auto model = init_model<float>({4, 6, 6, 4, 4, 4, 4}, cfg, {});
    EXPECT_THROW(train_stage2_normal(model, smooth_features(2, 5, 6, 6, 1), cfg), Error);
}
