#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <set>

#include "grad/io.hpp"
#include "grad/rng.hpp"

using namespace grad;

namespace {

FeatureMap random_map(std::size_t n, std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
    FeatureMap fm(n, c, h, w);
    Rng rng(seed);
    for (auto& v : fm.data()) v = static_cast<float>(rng.normal());
    return fm;
}

ErrorKind kind_of(const std::function<void()>& fn, std::string* what = nullptr) {
    try {
        fn();
    } catch (const Error& e) {
        if (what) *what = e.what();
        return e.kind();
    }
    ADD_FAILURE() << "expected grad::Error";
    return ErrorKind::usage;
}

}  // namespace

TEST(Rng, SameSeedSameStream) {
    Rng a(7), b(7), c(8);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        EXPECT_EQ(x, b.next_u64());
        differs |= x != c.next_u64();
    }
    EXPECT_TRUE(differs);
}

TEST(Rng, UniformIntCoversInclusiveRange) {
    Rng rng(3);
    std::set<std::int64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        const auto v = rng.uniform_int(-2, 2);
        ASSERT_GE(v, -2);
        ASSERT_LE(v, 2);
        seen.insert(v);
    }
    EXPECT_EQ(seen.size(), 5u);
}

TEST(Rng, NormalMoments) {
    Rng rng(11);
    double s = 0, s2 = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal();
        s += v;
        s2 += v * v;
    }
    EXPECT_NEAR(s / n, 0.0, 0.05);
    EXPECT_NEAR(s2 / n, 1.0, 0.05);
}

TEST(Rng, DerivedSeedsAreDistinct) {
    std::set<std::uint64_t> seeds;
    for (std::uint64_t i = 0; i < 1000; ++i) seeds.insert(derive_seed(42, i));
    seeds.insert(derive_seed(42, "a"));
    seeds.insert(derive_seed(42, "b"));
    EXPECT_EQ(seeds.size(), 1002u);
    EXPECT_EQ(derive_seed(42, "train"), derive_seed(42, "train"));
}

TEST(FeatFile, RoundTripIsBitExact) {
    const auto fm = random_map(2, 3, 4, 5, 1);
    const auto bytes = encode_featfile(fm);
    EXPECT_EQ(bytes.size(), 8u + 4u + 16u + fm.size() * 4u);
    EXPECT_EQ(decode_featfile(bytes), fm);
}

TEST(FeatFile, FileRoundTrip) {
    const auto dir = std::filesystem::temp_directory_path() / "grad_test_featfile";
    std::filesystem::create_directories(dir);
    const auto fm = random_map(1, 2, 3, 3, 2);
    write_featfile(fm, dir / "x.gradfeat");
    EXPECT_EQ(read_featfile(dir / "x.gradfeat"), fm);
    std::filesystem::remove_all(dir);
}

TEST(FeatFile, Diagnostics) {
    const auto good = encode_featfile(random_map(1, 2, 2, 2, 3));
    std::string what;

    auto bad_magic = good;
    bad_magic[0] = 'X';
    EXPECT_EQ(kind_of([&] { decode_featfile(bad_magic); }, &what), ErrorKind::data);
    EXPECT_NE(what.find("bad magic"), std::string::npos);

    auto bad_version = good;
    bad_version[8] = 2;
    EXPECT_EQ(kind_of([&] { decode_featfile(bad_version); }, &what), ErrorKind::data);
    EXPECT_NE(what.find("unsupported version"), std::string::npos);

    auto truncated = good;
    truncated.resize(truncated.size() - 3);
    EXPECT_EQ(kind_of([&] { decode_featfile(truncated); }, &what), ErrorKind::data);
    EXPECT_NE(what.find("truncated payload"), std::string::npos);

    auto trailing = good;
    trailing.push_back(0);
    EXPECT_EQ(kind_of([&] { decode_featfile(trailing); }, &what), ErrorKind::data);
    EXPECT_NE(what.find("trailing"), std::string::npos);

    auto zero = good;
    zero[12] = zero[13] = zero[14] = zero[15] = 0;  // N = 0
    EXPECT_EQ(kind_of([&] { decode_featfile(zero); }, &what), ErrorKind::data);
    EXPECT_NE(what.find("zero dimension"), std::string::npos);

    auto huge = good;
    for (int i = 12; i < 28; ++i) huge[i] = static_cast<char>(0xff);
    EXPECT_EQ(kind_of([&] { decode_featfile(huge); }, &what), ErrorKind::data);

    auto nan = random_map(1, 1, 2, 2, 4);
    nan.data()[1] = std::numeric_limits<float>::quiet_NaN();
    ByteWriter w;
    w.magic("GRADFEAT");
    w.u32(1);
    for (int d : {1, 1, 2, 2}) w.u32(static_cast<std::uint32_t>(d));
    for (float v : nan.data()) w.f32(v);
    EXPECT_EQ(kind_of([&] { decode_featfile(w.bytes()); }), ErrorKind::numeric);

    EXPECT_EQ(kind_of([&] { read_featfile("/nonexistent/dir/x.gradfeat"); }), ErrorKind::data);
}

TEST(MaskFile, RoundTripAndDiagnostics) {
    AnomalyMask m(2, 3, 4);
    m(0, 1, 2) = 1;
    m(1, 2, 3) = 1;
    const auto bytes = encode_maskfile(m);
    EXPECT_EQ(decode_maskfile(bytes), m);

    auto bad_value = bytes;
    bad_value.back() = 2;
    EXPECT_EQ(kind_of([&] { decode_maskfile(bad_value); }), ErrorKind::data);

    auto bad_magic = bytes;
    bad_magic[4] = 'F';
    EXPECT_EQ(kind_of([&] { decode_maskfile(bad_magic); }), ErrorKind::data);

    auto truncated = bytes;
    truncated.pop_back();
    EXPECT_EQ(kind_of([&] { decode_maskfile(truncated); }), ErrorKind::data);

    EXPECT_EQ(kind_of([&] { decode_featfile(bytes); }), ErrorKind::data);
}

TEST(FeatureMap, GatherScatterAndStack) {
    auto fm = random_map(2, 3, 2, 2, 5);
    std::vector<double> v(3);
    fm.gather(1, 0, 1, v);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(v[c], fm(1, c, 0, 1));
    v = {1.0, 2.0, 3.0};
    fm.scatter(0, 1, 1, v);
    EXPECT_EQ(fm(0, 2, 1, 1), 3.0f);

    const std::vector<FeatureMap> parts{fm.sample(1), fm.sample(0)};
    const auto st = stack<float>(parts);
    EXPECT_EQ(st.n(), 2u);
    EXPECT_EQ(st.sample(0), fm.sample(1));
    const std::vector<std::size_t> idx{1, 0};
    EXPECT_EQ(gather_samples(fm, idx), st);
}

TEST(Mask, DownsampleMaxPool) {
    AnomalyMask m(1, 4, 4);
    m(0, 3, 0) = 1;
    const auto d = downsample_mask_max(m, 2, 2);
    EXPECT_EQ(d(0, 1, 0), 1);
    EXPECT_EQ(d.count(0), 1u);
}
