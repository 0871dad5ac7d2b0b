#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "grad/error.hpp"
#include "grad/feature_map.hpp"
#include "grad/rng.hpp"

namespace grad {

namespace detail {

/// Align-corners source position of output node `i` when mapping `out` nodes onto `in` nodes.
inline double align_corners_pos(std::size_t i, std::size_t in, std::size_t out) noexcept {
    if (in == 1 || out == 1) return 0.0;
    return static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
}

struct LinearTap {
    std::size_t i0, i1;
    double f;
};

inline LinearTap linear_tap(double pos, std::size_t n) noexcept {
    if (n == 1) return {0, 0, 0.0};
    auto i0 = static_cast<std::size_t>(std::floor(pos));
    i0 = std::min(i0, n - 2);
    return {i0, i0 + 1, pos - static_cast<double>(i0)};
}

}  // namespace detail

/// Bilinear resize to (target_h, target_w), align-corners convention.
template <typename T>
BasicFeatureMap<T> bilinear_resize(const BasicFeatureMap<T>& src, std::size_t target_h, std::size_t target_w) {
    require_usage(target_h >= 1 && target_w >= 1, "bilinear_resize: target dims must be >= 1");
    require_numeric(src.all_finite(), "bilinear_resize: input contains non-finite values");
    if (target_h == src.h() && target_w == src.w()) return src;

    BasicFeatureMap<T> out(src.n(), src.c(), target_h, target_w);
    std::vector<detail::LinearTap> rows(target_h), cols(target_w);
    for (std::size_t y = 0; y < target_h; ++y)
        rows[y] = detail::linear_tap(detail::align_corners_pos(y, src.h(), target_h), src.h());
    for (std::size_t x = 0; x < target_w; ++x)
        cols[x] = detail::linear_tap(detail::align_corners_pos(x, src.w(), target_w), src.w());

    for (std::size_t n = 0; n < src.n(); ++n)
        for (std::size_t c = 0; c < src.c(); ++c)
            for (std::size_t y = 0; y < target_h; ++y) {
                const auto& r = rows[y];
                for (std::size_t x = 0; x < target_w; ++x) {
                    const auto& q = cols[x];
                    const double v00 = src(n, c, r.i0, q.i0), v01 = src(n, c, r.i0, q.i1);
                    const double v10 = src(n, c, r.i1, q.i0), v11 = src(n, c, r.i1, q.i1);
                    const double top = (1.0 - q.f) * v00 + q.f * v01;
                    const double bottom = (1.0 - q.f) * v10 + q.f * v11;
                    out(n, c, y, x) = static_cast<T>((1.0 - r.f) * top + r.f * bottom);
                }
            }
    return out;
}

/// Concatenate along C in layer order. All layers must share N, H, W.
template <typename T>
BasicFeatureMap<T> channel_concat(const BasicLayerSet<T>& set) {
    require_usage(!set.layers.empty(), "channel_concat: empty layer set");
    const auto& first = set.layers.front();
    std::size_t channels = 0;
    for (const auto& l : set.layers) {
        require_usage(l.n() == first.n() && l.h() == first.h() && l.w() == first.w(),
                      "channel_concat: mismatched N/H/W " + to_string(l.dims()) + " vs " + to_string(first.dims()));
        channels += l.c();
    }
    BasicFeatureMap<T> out(first.n(), channels, first.h(), first.w());
    const std::size_t plane = first.plane();
    for (std::size_t n = 0; n < first.n(); ++n) {
        std::size_t c0 = 0;
        for (const auto& l : set.layers) {
            auto src = l.data().subspan(n * l.c() * plane, l.c() * plane);
            std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(out.index(n, c0, 0, 0)));
            c0 += l.c();
        }
    }
    return out;
}

/// Channels [first, first + count) of `src`.
template <typename T>
BasicFeatureMap<T> slice_channels(const BasicFeatureMap<T>& src, std::size_t first, std::size_t count) {
    require_usage(count >= 1 && first + count <= src.c(), "slice_channels: range out of bounds");
    BasicFeatureMap<T> out(src.n(), count, src.h(), src.w());
    const std::size_t plane = src.plane();
    for (std::size_t n = 0; n < src.n(); ++n) {
        auto from = src.data().subspan(src.index(n, first, 0, 0), count * plane);
        std::copy(from.begin(), from.end(), out.data().begin() + static_cast<std::ptrdiff_t>(out.index(n, 0, 0, 0)));
    }
    return out;
}

/// Resize every layer to the per-dimension maxima of H and W, then concatenate channels.
template <typename T>
BasicFeatureMap<T> align_features(const BasicLayerSet<T>& set) {
    require_usage(!set.layers.empty(), "align_features: empty layer set");
    std::size_t h_max = 0, w_max = 0;
    for (const auto& l : set.layers) {
        h_max = std::max(h_max, l.h());
        w_max = std::max(w_max, l.w());
    }
    BasicLayerSet<T> resized;
    resized.level_ids = set.level_ids;
    for (const auto& l : set.layers) resized.layers.push_back(bilinear_resize(l, h_max, w_max));
    return channel_concat(resized);
}

struct ExtractorConfig {
    struct Level {
        int id;
        std::size_t stride;
        std::size_t channels;
    };
    std::vector<Level> levels{{3, 2, 16}, {4, 4, 24}};

    std::size_t max_stride() const noexcept {
        std::size_t s = 1;
        for (const auto& l : levels) s = std::max(s, l.stride);
        return s;
    }

    std::size_t total_channels() const noexcept {
        std::size_t c = 0;
        for (const auto& l : levels) c += l.channels;
        return c;
    }
};

/// Fixed random-filter convolution bank standing in for a pretrained backbone.
///
/// Level with stride s uses (2s - 1) x (2s - 1) kernels over the 3 input
/// channels, zero padding, no bias, followed by max(0, .). Output node (i, j)
/// is centred on input pixel (i*s + s/2, j*s + s/2).
class StubExtractor {
public:
    StubExtractor(ExtractorConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
        require_usage(!config_.levels.empty(), "extractor needs at least one level");
        Rng rng(derive_seed(seed, "stub-extractor"));
        for (const auto& level : config_.levels) {
            require_usage(level.stride >= 1 && level.channels >= 1, "extractor level needs stride and channels >= 1");
            const std::size_t k = 2 * level.stride - 1;
            const double scale = 1.0 / std::sqrt(static_cast<double>(3 * k * k));
            std::vector<double> w(level.channels * 3 * k * k);
            for (auto& v : w) v = rng.normal(0.0, scale);
            filters_.push_back(std::move(w));
        }
    }

    const ExtractorConfig& config() const noexcept { return config_; }
    std::uint64_t seed() const noexcept { return seed_; }

    template <typename T>
    BasicLayerSet<T> extract(const BasicFeatureMap<T>& image) const {
        require_usage(image.c() == 3, "stub_extract: image must have 3 channels, got " + std::to_string(image.c()));
        const std::size_t s_max = config_.max_stride();
        require_usage(image.h() % s_max == 0 && image.w() % s_max == 0,
                      "stub_extract: image size " + std::to_string(image.h()) + "x" + std::to_string(image.w()) +
                          " not divisible by stride " + std::to_string(s_max));
        BasicLayerSet<T> out;
        for (std::size_t li = 0; li < config_.levels.size(); ++li) {
            out.layers.push_back(convolve(image, config_.levels[li], filters_[li]));
            out.level_ids.push_back(config_.levels[li].id);
        }
        return out;
    }

private:
    template <typename T>
    static BasicFeatureMap<T> convolve(const BasicFeatureMap<T>& img, const ExtractorConfig::Level& level,
                                       const std::vector<double>& w) {
        const std::size_t s = level.stride, k = 2 * s - 1;
        const auto half = static_cast<std::ptrdiff_t>(k / 2);
        const std::size_t oh = img.h() / s, ow = img.w() / s;
        BasicFeatureMap<T> out(img.n(), level.channels, oh, ow);
        const auto H = static_cast<std::ptrdiff_t>(img.h()), W = static_cast<std::ptrdiff_t>(img.w());
        for (std::size_t n = 0; n < img.n(); ++n)
            for (std::size_t oc = 0; oc < level.channels; ++oc)
                for (std::size_t i = 0; i < oh; ++i)
                    for (std::size_t j = 0; j < ow; ++j) {
                        const auto cy = static_cast<std::ptrdiff_t>(i * s + s / 2);
                        const auto cx = static_cast<std::ptrdiff_t>(j * s + s / 2);
                        double acc = 0.0;
                        for (std::size_t ic = 0; ic < 3; ++ic)
                            for (std::size_t ky = 0; ky < k; ++ky) {
                                const std::ptrdiff_t y = cy + static_cast<std::ptrdiff_t>(ky) - half;
                                if (y < 0 || y >= H) continue;
                                for (std::size_t kx = 0; kx < k; ++kx) {
                                    const std::ptrdiff_t x = cx + static_cast<std::ptrdiff_t>(kx) - half;
                                    if (x < 0 || x >= W) continue;
                                    acc += w[((oc * 3 + ic) * k + ky) * k + kx] *
                                           static_cast<double>(img(n, ic, static_cast<std::size_t>(y), static_cast<std::size_t>(x)));
                                }
                            }
                        out(n, oc, i, j) = static_cast<T>(std::max(0.0, acc));
                    }
        return out;
    }

    ExtractorConfig config_;
    std::uint64_t seed_;
    std::vector<std::vector<double>> filters_;
};

template <typename T>
BasicLayerSet<T> stub_extract(const BasicFeatureMap<T>& image, const ExtractorConfig& config, std::uint64_t seed) {
    return StubExtractor(config, seed).extract(image);
}

}  // namespace grad
