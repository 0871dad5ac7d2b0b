#pragma once

// Desk-scale synthetic benchmark: per-class sinusoid textures with seeded
// pixel noise, plus localized anomalies carrying exact ground-truth masks.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "grad/error.hpp"
#include "grad/feature_map.hpp"
#include "grad/rng.hpp"

namespace grad {

enum class AnomalyKind : int { patch_swap = 0, intensity_bump = 1, stripe_break = 2 };

inline const char* to_string(AnomalyKind k) {
    switch (k) {
        case AnomalyKind::patch_swap: return "patch-swap";
        case AnomalyKind::intensity_bump: return "intensity-bump";
        case AnomalyKind::stripe_break: return "stripe-break";
    }
    return "?";
}

inline AnomalyKind parse_anomaly_kind(const std::string& s) {
    if (s == "patch-swap") return AnomalyKind::patch_swap;
    if (s == "intensity-bump") return AnomalyKind::intensity_bump;
    if (s == "stripe-break") return AnomalyKind::stripe_break;
    throw Error(ErrorKind::usage, "unknown anomaly kind '" + s + "'");
}

struct SynthBenchSpec {
    std::size_t classes = 2;
    std::size_t train_per_class = 200;
    std::size_t test_normal = 50;  // per class
    std::size_t test_anom = 50;    // per class
    std::size_t height = 32, width = 32;
    std::vector<AnomalyKind> kinds{AnomalyKind::patch_swap, AnomalyKind::intensity_bump, AnomalyKind::stripe_break};
    double area_min = 0.03, area_max = 0.10;
    double noise_sigma = 0.02;
    std::uint64_t seed = 0;

    std::size_t test_per_class() const noexcept { return test_normal + test_anom; }

    void validate() const {
        require_usage(classes >= 1 && train_per_class >= 1, "synth: classes and train_per_class must be >= 1");
        require_usage(test_normal + test_anom >= 1, "synth: need at least one test image per class");
        require_usage(height >= 8 && width >= 8, "synth: image must be at least 8x8");
        require_usage(test_anom == 0 || !kinds.empty(), "synth: anomalies requested but no anomaly kinds enabled");
        require_usage(area_min > 0.0 && area_min <= area_max && area_max < 0.5,
                      "synth: need 0 < area_min <= area_max < 0.5");
        require_usage(area_max * static_cast<double>(height * width) >= 1.0, "synth: area_max covers less than one pixel");
        require_usage(noise_sigma >= 0.0, "synth: noise_sigma must be non-negative");
    }
};

struct SynthDataset {
    FeatureMap train;                    // (classes * train_per_class, 3, H, W)
    std::vector<int> train_class;
    FeatureMap test;                     // (classes * (test_normal + test_anom), 3, H, W)
    std::vector<int> test_class;
    std::vector<std::uint8_t> test_labels;
    std::vector<int> test_kind;          // -1 for normal images
    AnomalyMask test_masks;              // (N_test, H, W) at image resolution
};

namespace detail {

struct Texture {
    struct Wave {
        double fy, fx, phase, amplitude;
        double color[3];
    };
    std::vector<Wave> waves;

    double value(std::size_t ch, double y, double x, double H, double W) const {
        double v = 0.5;
        for (const auto& w : waves)
            v += w.amplitude * w.color[ch] * std::sin(2.0 * std::numbers::pi * (w.fy * y / H + w.fx * x / W) + w.phase);
        return v;
    }
};

inline Texture class_texture(std::uint64_t seed, std::size_t cls) {
    Rng rng(derive_seed(derive_seed(seed, "texture"), cls));
    Texture t;
    for (int k = 0; k < 3; ++k) {
        Texture::Wave w{};
        do {
            w.fy = static_cast<double>(rng.uniform_int(0, 4));
            w.fx = static_cast<double>(rng.uniform_int(0, 4));
        } while (w.fy == 0.0 && w.fx == 0.0);
        w.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        w.amplitude = rng.uniform(0.08, 0.15);
        for (double& c : w.color) c = rng.uniform(-1.0, 1.0);
        t.waves.push_back(w);
    }
    return t;
}

struct Rect {
    std::size_t y0, x0, h, w;
};

/// Rectangle with area fraction inside [area_min, area_max]; stripes are 2-3 px thick.
inline Rect sample_region(Rng& rng, const SynthBenchSpec& spec, AnomalyKind kind) {
    const double total = static_cast<double>(spec.height * spec.width);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const double area = rng.uniform(spec.area_min, spec.area_max) * total;
        std::size_t h = 0, w = 0;
        if (kind == AnomalyKind::stripe_break) {
            const auto thick = static_cast<std::size_t>(rng.uniform_int(2, 3));
            const auto len = static_cast<std::size_t>(std::lround(area / static_cast<double>(thick)));
            if (rng.bernoulli(0.5)) {
                h = thick;
                w = len;
            } else {
                h = len;
                w = thick;
            }
        } else {
            const double aspect = std::exp(rng.uniform(std::log(0.5), std::log(2.0)));
            h = static_cast<std::size_t>(std::lround(std::sqrt(area * aspect)));
            w = static_cast<std::size_t>(std::lround(area / std::max<double>(1.0, static_cast<double>(h))));
        }
        if (h < 1 || w < 1 || h > spec.height - 2 || w > spec.width - 2) continue;
        const double frac = static_cast<double>(h * w) / total;
        if (frac < spec.area_min || frac > spec.area_max) continue;
        const auto y0 = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(spec.height - h - 1)));
        const auto x0 = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(spec.width - w - 1)));
        return {y0, x0, h, w};
    }
    throw Error(ErrorKind::usage, "synth: cannot place an anomaly region with the configured area range");
}

inline void render_normal(FeatureMap& imgs, std::size_t n, const Texture& tex, double noise, Rng& rng) {
    const double H = static_cast<double>(imgs.h()), W = static_cast<double>(imgs.w());
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < imgs.h(); ++y)
            for (std::size_t x = 0; x < imgs.w(); ++x)
                imgs(n, c, y, x) = static_cast<float>(tex.value(c, static_cast<double>(y), static_cast<double>(x), H, W) +
                                                      noise * rng.normal());
}

inline void apply_anomaly(FeatureMap& imgs, AnomalyMask& masks, std::size_t n, AnomalyKind kind, const Rect& r, Rng& rng) {
    const std::size_t H = imgs.h(), W = imgs.w();
    if (kind == AnomalyKind::patch_swap) {
        // Copy content from a displaced source window of the same image.
        std::size_t sy = 0, sx = 0;
        do {
            sy = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(H - r.h)));
            sx = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(W - r.w)));
        } while (std::max(sy, r.y0) - std::min(sy, r.y0) < r.h / 2 + 2 && std::max(sx, r.x0) - std::min(sx, r.x0) < r.w / 2 + 2);
        FeatureMap copy = imgs.sample(n);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < r.h; ++y)
                for (std::size_t x = 0; x < r.w; ++x) imgs(n, c, r.y0 + y, r.x0 + x) = copy(0, c, sy + y, sx + x);
    } else if (kind == AnomalyKind::intensity_bump) {
        double shift[3];
        const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
        for (double& s : shift) s = sign * rng.uniform(0.15, 0.35);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < r.h; ++y)
                for (std::size_t x = 0; x < r.w; ++x) imgs(n, c, r.y0 + y, r.x0 + x) += static_cast<float>(shift[c]);
    } else {
        // Break: invert the texture around mid-grey inside the stripe.
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < r.h; ++y)
                for (std::size_t x = 0; x < r.w; ++x) {
                    float& v = imgs(n, c, r.y0 + y, r.x0 + x);
                    v = 1.0f - v;
                }
    }
    for (std::size_t y = 0; y < r.h; ++y)
        for (std::size_t x = 0; x < r.w; ++x) masks(n, r.y0 + y, r.x0 + x) = 1;
}

}  // namespace detail

/// Deterministic for a fixed spec (including seed). Image i draws from its own substream.
inline SynthDataset gen_synth_bench(const SynthBenchSpec& spec) {
    spec.validate();
    SynthDataset ds;
    const std::size_t n_train = spec.classes * spec.train_per_class;
    const std::size_t n_test = spec.classes * spec.test_per_class();
    ds.train = FeatureMap(n_train, 3, spec.height, spec.width);
    ds.test = FeatureMap(n_test, 3, spec.height, spec.width);
    ds.test_masks = AnomalyMask(n_test, spec.height, spec.width);

    const std::uint64_t train_seed = derive_seed(spec.seed, "train");
    const std::uint64_t test_seed = derive_seed(spec.seed, "test");
    std::size_t ti = 0, si = 0;
    for (std::size_t cls = 0; cls < spec.classes; ++cls) {
        const auto tex = detail::class_texture(spec.seed, cls);
        for (std::size_t i = 0; i < spec.train_per_class; ++i, ++ti) {
            Rng rng(derive_seed(train_seed, ti));
            detail::render_normal(ds.train, ti, tex, spec.noise_sigma, rng);
            ds.train_class.push_back(static_cast<int>(cls));
        }
        for (std::size_t i = 0; i < spec.test_per_class(); ++i, ++si) {
            Rng rng(derive_seed(test_seed, si));
            detail::render_normal(ds.test, si, tex, spec.noise_sigma, rng);
            ds.test_class.push_back(static_cast<int>(cls));
            if (i < spec.test_normal) {
                ds.test_labels.push_back(0);
                ds.test_kind.push_back(-1);
                continue;
            }
            const auto kind = spec.kinds[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(spec.kinds.size()) - 1))];
            const auto region = detail::sample_region(rng, spec, kind);
            detail::apply_anomaly(ds.test, ds.test_masks, si, kind, region, rng);
            ds.test_labels.push_back(1);
            ds.test_kind.push_back(static_cast<int>(kind));
        }
    }
    return ds;
}

}  // namespace grad
