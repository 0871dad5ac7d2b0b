#include <gtest/gtest.h>

#include "grad/checkpoint.hpp"
#include "grad/config.hpp"

using namespace grad;

namespace {
GradModel small_model() {
    ModelShape shape{.channels = 3, .local_rows = 4, .local_cols = 5, .global_rows = 2, .global_cols = 3,
                     .abnormal_rows = 3, .abnormal_cols = 3};
    TrainConfig cfg;
    cfg.seed = 5;
    cfg.lambda = 0.7;
    cfg.grid_init = {GridInitKind::uniform, 0.5};
    return init_model<float>(shape, cfg, {ExtractorDescriptor::Kind::stub, 1234});
}

ErrorKind decode_kind(const std::vector<char>& bytes) {
    try {
        decode_checkpoint(bytes);
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::usage;  // unreachable in the tests below
}
}  // namespace

TEST(Checkpoint, RoundTripIsExact) {
    const auto m = small_model();
    const auto bytes = encode_checkpoint(m);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "GRADCKPT");
    const auto back = decode_checkpoint(bytes);
    EXPECT_EQ(back, m);
    EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST(Checkpoint, CorruptInputsAreDataErrors) {
    const auto good = encode_checkpoint(small_model());
    auto bad = good;
    bad[0] = 'X';
    EXPECT_EQ(decode_kind(bad), ErrorKind::data);
    bad = good;
    bad[8] = 9;  // version
    EXPECT_EQ(decode_kind(bad), ErrorKind::data);
    EXPECT_EQ(decode_kind(std::vector<char>(good.begin(), good.end() - 1)), ErrorKind::data);
    bad = good;
    bad.push_back(0);
    EXPECT_EQ(decode_kind(bad), ErrorKind::data);
    EXPECT_EQ(decode_kind(std::vector<char>(good.begin(), good.begin() + 20)), ErrorKind::data);
    try {
        load_checkpoint("/nonexistent/model.gradckpt");
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("model.gradckpt"), std::string::npos);
    }
}

TEST(Checkpoint, NonFiniteValuesRejected) {
    auto m = small_model();
    const auto clean = encode_checkpoint(m);
    m.abnormal.grid.values()[0] = NAN;
    auto bytes = encode_checkpoint(m);
    EXPECT_EQ(decode_kind(bytes), ErrorKind::numeric);
    EXPECT_NE(bytes, clean);
}

TEST(Config, ParsesKeysCommentsAndLists) {
    RunConfig cfg;
    apply_config_text(cfg, "# comment\n  train.lambda = 0.25  \n\nsynth.kinds = patch-swap,stripe-break\nbench.grid_sides = 8,16\n"
                           "infer.image_reduction = topk-mean # trailing\n");
    EXPECT_EQ(cfg.train.lambda, 0.25);
    ASSERT_EQ(cfg.synth.kinds.size(), 2u);
    EXPECT_EQ(cfg.synth.kinds[1], AnomalyKind::stripe_break);
    EXPECT_EQ(cfg.bench.grid_sides, (std::vector<std::size_t>{8, 16}));
    EXPECT_EQ(cfg.infer.image.reduction, ImageReduction::topk_mean);
}

TEST(Config, ErrorsNameTheLine) {
    RunConfig cfg;
    try {
        apply_config_text(cfg, "train.lambda = 0.5\ntrain.lamda = 0.5\n", "my.cfg");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::usage);
        EXPECT_NE(std::string(e.what()).find("my.cfg:2"), std::string::npos) << e.what();
    }
    EXPECT_THROW(apply_config_text(cfg, "train.epochs_normal = many\n"), Error);
    EXPECT_THROW(apply_config_text(cfg, "no equals sign\n"), Error);
    EXPECT_THROW(apply_config_text(cfg, "fbp.mode = sideways\n"), Error);
}

TEST(Config, CanonicalTextRoundTrips) {
    RunConfig cfg;
    apply_config_text(cfg, "train.lambda = 0.3\nmodel.local_rows = 24\nfbp.mode = gaussian-noise\n");
    const auto text = canonical_config(cfg);
    RunConfig again;
    apply_config_text(again, text);
    EXPECT_EQ(canonical_config(again), text);
    EXPECT_EQ(config_hash(again), config_hash(cfg));
}

TEST(Config, HashTracksValuesButNotSeed) {
    EXPECT_EQ(hex64(fnv1a64("")), "cbf29ce484222325");
    EXPECT_EQ(hex64(fnv1a64("a")), "af63dc4c8601ec8c");
    RunConfig a, b;
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.set_seed(99);
    EXPECT_EQ(config_hash(a), config_hash(b));
    EXPECT_EQ(b.synth.seed, 99u);
    EXPECT_EQ(b.train.seed, 99u);
    EXPECT_EQ(b.bench.seed, 99u);
    set_config_value(b, "infer.gamma", "0.4");
    EXPECT_NE(config_hash(a), config_hash(b));
    EXPECT_EQ(config_hash(a).size(), 16u);
}
