#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "grad/error.hpp"
#include "grad/feature_map.hpp"
#include "grad/features.hpp"
#include "grad/fbp.hpp"
#include "grad/grid.hpp"
#include "grad/training.hpp"

namespace grad {

/// Preliminary reconstruction: fuse(normal samples, abnormal samples, lambda).
template <typename T>
BasicFeatureMap<T> reconstruct(const BasicGradModel<T>& model, const BasicFeatureMap<T>& aligned) {
    model.validate();
    require_usage(aligned.c() == model.channels(), "reconstruct: feature channels " + std::to_string(aligned.c()) +
                                                       " do not match model channels " + std::to_string(model.channels()));
    auto x_n = sample_normal(model.normal, aligned);
    if (model.lambda == 1.0) return x_n;
    return fuse(x_n, sample_abnormal(model.abnormal, aligned), model.lambda);
}

/// Similarity-gated pull of the reconstruction towards the input:
/// out = rec + gamma * max(0, cos(aligned, rec)) * (aligned - rec), per location.
template <typename T>
BasicFeatureMap<T> refine(const BasicFeatureMap<T>& aligned, const BasicFeatureMap<T>& rec, double gamma) {
    require_usage(aligned.dims() == rec.dims(), "refine: dims mismatch");
    require_usage(gamma >= 0.0 && gamma <= 1.0, "refine: gamma must lie in [0, 1]");
    BasicFeatureMap<T> out = rec;
    if (gamma == 0.0) return out;
    std::vector<double> a(aligned.c()), r(aligned.c());
    for (std::size_t n = 0; n < aligned.n(); ++n)
        for (std::size_t h = 0; h < aligned.h(); ++h)
            for (std::size_t w = 0; w < aligned.w(); ++w) {
                aligned.gather(n, h, w, a);
                rec.gather(n, h, w, r);
                const double t = gamma * std::max(0.0, cosine(a, r));
                if (t == 0.0) continue;
                for (std::size_t c = 0; c < r.size(); ++c) r[c] += t * (a[c] - r[c]);
                out.scatter(n, h, w, r);
            }
    return out;
}

/// Per-location L2 distance over channels, as an (N, 1, H, W) map.
template <typename T>
BasicFeatureMap<T> score_map(const BasicFeatureMap<T>& aligned, const BasicFeatureMap<T>& refined) {
    require_usage(aligned.dims() == refined.dims(), "score_map: dims mismatch");
    BasicFeatureMap<T> out(aligned.n(), 1, aligned.h(), aligned.w());
    for (std::size_t n = 0; n < aligned.n(); ++n)
        for (std::size_t h = 0; h < aligned.h(); ++h)
            for (std::size_t w = 0; w < aligned.w(); ++w) {
                double s = 0.0;
                for (std::size_t c = 0; c < aligned.c(); ++c) {
                    const double d = static_cast<double>(aligned(n, c, h, w)) - static_cast<double>(refined(n, c, h, w));
                    s += d * d;
                }
                out(n, 0, h, w) = static_cast<T>(std::sqrt(s));
            }
    return out;
}

template <typename T>
BasicFeatureMap<T> upsample_scores(const BasicFeatureMap<T>& scores, std::size_t target_h, std::size_t target_w) {
    require_usage(target_h >= scores.h() && target_w >= scores.w(), "upsample_scores: target smaller than score map");
    auto out = bilinear_resize(scores, target_h, target_w);
    for (auto& v : out.data()) v = std::max(v, T{});
    return out;
}

enum class ImageReduction { smoothed_max, topk_mean };

struct ImageScoreConfig {
    ImageReduction reduction = ImageReduction::smoothed_max;
    std::size_t topk = 10;
};

/// Image-level score of one (H, W) plane: 3x3 mean (symmetric borders) then max,
/// or the mean of the top-k raw values.
inline double image_score(std::span<const double> plane, std::size_t H, std::size_t W, const ImageScoreConfig& cfg = {}) {
    require_usage(H >= 1 && W >= 1 && plane.size() == H * W, "image_score: empty or mis-sized map");
    if (cfg.reduction == ImageReduction::topk_mean) {
        std::vector<double> v(plane.begin(), plane.end());
        const std::size_t k = std::clamp<std::size_t>(cfg.topk, 1, v.size());
        std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end(), std::greater<>());
        double s = 0.0;
        for (std::size_t i = 0; i < k; ++i) s += v[i];
        return s / static_cast<double>(k);
    }
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
            double s = 0.0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    s += plane[reflect_index(static_cast<std::ptrdiff_t>(y) + dy, H) * W +
                               reflect_index(static_cast<std::ptrdiff_t>(x) + dx, W)];
            best = std::max(best, s / 9.0);
        }
    return best;
}

struct ScoreMap {
    FeatureMap pixel;                 // (N, 1, target_h, target_w), non-negative
    std::vector<double> image;        // N
    std::size_t feature_h = 0, feature_w = 0;
    std::size_t target_h = 0, target_w = 0;
};

template <typename T>
std::vector<double> image_scores(const BasicFeatureMap<T>& pixel, const ImageScoreConfig& cfg = {}) {
    require_usage(pixel.c() == 1, "image_scores: expects a single-channel score map");
    std::vector<double> out;
    std::vector<double> plane(pixel.plane());
    for (std::size_t n = 0; n < pixel.n(); ++n) {
        for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = static_cast<double>(pixel.data()[n * plane.size() + i]);
        out.push_back(image_score(plane, pixel.h(), pixel.w(), cfg));
    }
    return out;
}

/// Assemble a ScoreMap from a feature-resolution map: upsample, then reduce per image.
inline ScoreMap make_score_map(const FeatureMap& feature_scores, std::size_t target_h, std::size_t target_w,
                               const ImageScoreConfig& cfg = {}) {
    ScoreMap s;
    s.feature_h = feature_scores.h();
    s.feature_w = feature_scores.w();
    s.target_h = target_h;
    s.target_w = target_w;
    s.pixel = upsample_scores(feature_scores, target_h, target_w);
    s.image = image_scores(s.pixel, cfg);
    return s;
}

struct InferenceConfig {
    double gamma = 0.5;
    ImageScoreConfig image{};
};

/// Full scoring path: reconstruct, refine, compare, upsample, reduce.
inline ScoreMap score(const GradModel& model, const FeatureMap& aligned, std::size_t target_h, std::size_t target_w,
                      const InferenceConfig& cfg = {}) {
    const auto rec = reconstruct(model, aligned);
    const auto refined = refine(aligned, rec, cfg.gamma);
    return make_score_map(score_map(aligned, refined), target_h, target_w, cfg.image);
}

}  // namespace grad
