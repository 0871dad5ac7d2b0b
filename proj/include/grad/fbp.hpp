#pragma once

// Feature Block Paste: feature-level pseudo-anomalies with a random-walk shape,
// a signed intensity, a position, and a Gaussian-blurred footprint.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "grad/error.hpp"
#include "grad/feature_map.hpp"
#include "grad/rng.hpp"

namespace grad {

/// Anything with an inclusive uniform_int(lo, hi).
template <typename G>
concept IntSource = requires(G& g, std::int64_t a) {
    { g.uniform_int(a, a) } -> std::convertible_to<std::int64_t>;
};

/// Binary (2B+1) x (2B+1) walk footprint.
struct RandomWalkMask {
    int block = 0;       // B
    int steps = 0;       // N
    std::vector<std::uint8_t> cells;

    RandomWalkMask() = default;
    explicit RandomWalkMask(int b) : block(b), cells(static_cast<std::size_t>((2 * b + 1) * (2 * b + 1)), 0) {}

    int side() const noexcept { return 2 * block + 1; }
    std::uint8_t at(int r, int c) const noexcept { return cells[static_cast<std::size_t>(r * side() + c)]; }
    std::uint8_t& at(int r, int c) noexcept { return cells[static_cast<std::size_t>(r * side() + c)]; }

    std::size_t marked() const noexcept {
        return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), std::uint8_t{1}));
    }
};

/// Random walk from (B, B): N ~ U{B..2B}, steps (dy, dx) ~ U{-1,0,1}^2, positions clamped
/// to the matrix, every visited cell marked.
template <IntSource Gen>
RandomWalkMask random_walk_mask(int block, Gen& gen) {
    require_usage(block >= 1, "random_walk_mask: block size must be >= 1");
    RandomWalkMask m(block);
    m.steps = static_cast<int>(gen.uniform_int(block, 2 * block));
    int y = block, x = block;
    m.at(y, x) = 1;
    const int hi = 2 * block;
    for (int k = 0; k < m.steps; ++k) {
        const int dy = static_cast<int>(gen.uniform_int(-1, 1));
        const int dx = static_cast<int>(gen.uniform_int(-1, 1));
        y = std::clamp(y + dy, 0, hi);
        x = std::clamp(x + dx, 0, hi);
        m.at(y, x) = 1;
    }
    return m;
}

/// (1, 1, H, W) canvas holding `intensity` at the mask cells, mask centre on `center`.
inline FeatureMapD paste_block(std::size_t H, std::size_t W, const RandomWalkMask& mask, double intensity,
                               std::pair<std::size_t, std::size_t> center) {
    require_usage(H >= 1 && W >= 1, "paste_block: canvas dims must be >= 1");
    require_usage(center.first < H && center.second < W, "paste_block: center out of range");
    FeatureMapD canvas(1, 1, H, W);
    const auto B = static_cast<std::ptrdiff_t>(mask.block);
    for (int r = 0; r < mask.side(); ++r)
        for (int c = 0; c < mask.side(); ++c) {
            if (!mask.at(r, c)) continue;
            const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(center.first) + r - B;
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(center.second) + c - B;
            if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(H) || x >= static_cast<std::ptrdiff_t>(W)) continue;
            canvas(0, 0, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = intensity;
        }
    return canvas;
}

/// Half-sample symmetric reflection of index m into [0, n).
inline std::size_t reflect_index(std::ptrdiff_t m, std::size_t n) noexcept {
    const auto period = static_cast<std::ptrdiff_t>(2 * n);
    std::ptrdiff_t r = m % period;
    if (r < 0) r += period;
    if (r >= static_cast<std::ptrdiff_t>(n)) r = period - 1 - r;
    return static_cast<std::size_t>(r);
}

/// Normalized truncated Gaussian taps, index k in [0, 2*radius] for offset k - radius.
inline std::vector<double> gaussian_kernel(double sigma, int radius) {
    require_usage(sigma > 0.0, "gaussian_blur: sigma must be > 0");
    require_usage(radius >= 1, "gaussian_blur: radius must be >= 1");
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (auto& v : k) v /= sum;
    return k;
}

/// Separable blur of every (n, c) plane with symmetric-reflective borders (mass preserving).
inline FeatureMapD gaussian_blur(const FeatureMapD& canvas, double sigma, int radius) {
    const auto k = gaussian_kernel(sigma, radius);
    const std::size_t H = canvas.h(), W = canvas.w();
    FeatureMapD tmp(canvas.dims(), std::vector<double>(canvas.size(), 0.0));
    FeatureMapD out(canvas.dims(), std::vector<double>(canvas.size(), 0.0));
    for (std::size_t n = 0; n < canvas.n(); ++n)
        for (std::size_t c = 0; c < canvas.c(); ++c) {
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) {
                    double acc = 0.0;
                    for (int t = -radius; t <= radius; ++t)
                        acc += k[static_cast<std::size_t>(t + radius)] *
                               canvas(n, c, y, reflect_index(static_cast<std::ptrdiff_t>(x) + t, W));
                    tmp(n, c, y, x) = acc;
                }
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) {
                    double acc = 0.0;
                    for (int t = -radius; t <= radius; ++t)
                        acc += k[static_cast<std::size_t>(t + radius)] *
                               tmp(n, c, reflect_index(static_cast<std::ptrdiff_t>(y) + t, H), x);
                    out(n, c, y, x) = acc;
                }
        }
    return out;
}

struct FbpParams {
    int block = 2;                                  // B
    double intensity = 1.0;                         // I, signed
    std::pair<std::size_t, std::size_t> center{0, 0};
    std::optional<RandomWalkMask> shape;            // externally supplied footprint, else a fresh walk
    double blur_sigma = 1.0;
    int blur_radius = 2;
    double mask_eps_frac = 0.01;
};

template <typename T>
struct FbpResult {
    BasicFeatureMap<T> features;  // phi_pse_ano
    AnomalyMask mask;             // (1, H, W)
    FeatureMapD blurred;          // (1, 1, H, W) paste tensor after blur
    RandomWalkMask shape;
};

namespace detail {
inline void validate_fbp_params(const FbpParams& p) {
    require_usage(p.block >= 1, "fbp: block size must be >= 1");
    require_usage(p.blur_sigma > 0.0, "fbp: blur sigma must be > 0");
    require_usage(p.blur_radius >= 1, "fbp: blur radius must be >= 1");
    require_usage(p.mask_eps_frac > 0.0 && p.mask_eps_frac < 1.0, "fbp: mask_eps_frac must lie in (0, 1)");
    require_usage(std::isfinite(p.intensity), "fbp: intensity must be finite");
    if (p.shape) {
        require_usage(p.shape->block == p.block &&
                          p.shape->cells.size() == static_cast<std::size_t>(p.shape->side() * p.shape->side()),
                      "fbp: template mask must be (2B+1) x (2B+1)");
        require_usage(p.shape->marked() >= 1, "fbp: template mask has no marked cell");
    }
}
}  // namespace detail

/// Paste a blurred random-walk block onto a (1, C, H, W) map, broadcast across channels.
template <typename T, IntSource Gen>
FbpResult<T> fbp(const BasicFeatureMap<T>& phi_nor, const FbpParams& params, Gen& gen) {
    detail::validate_fbp_params(params);
    require_usage(phi_nor.n() == 1, "fbp: expects a single (1, C, H, W) feature map");
    require_usage(params.center.first < phi_nor.h() && params.center.second < phi_nor.w(),
                  "fbp: center lies outside the feature lattice");
    FbpResult<T> r;
    r.shape = params.shape ? *params.shape : random_walk_mask(params.block, gen);
    const auto canvas = paste_block(phi_nor.h(), phi_nor.w(), r.shape, params.intensity, params.center);
    r.blurred = gaussian_blur(canvas, params.blur_sigma, params.blur_radius);
    r.features = phi_nor;
    r.mask = AnomalyMask(1, phi_nor.h(), phi_nor.w());
    const double threshold = params.mask_eps_frac * std::abs(params.intensity);
    for (std::size_t y = 0; y < phi_nor.h(); ++y)
        for (std::size_t x = 0; x < phi_nor.w(); ++x) {
            const double p = r.blurred(0, 0, y, x);
            if (std::abs(p) > threshold) r.mask(0, y, x) = 1;
            if (p == 0.0) continue;
            for (std::size_t c = 0; c < phi_nor.c(); ++c)
                r.features(0, c, y, x) = static_cast<T>(static_cast<double>(phi_nor(0, c, y, x)) + p);
        }
    return r;
}

enum class SynthesisMode {
    fbp,             // blurred random-walk blocks
    gaussian_noise,  // i.i.d. per-location Gaussian vectors over the whole map, energy-matched to fbp
};

/// Per-sample pseudo-anomaly sampling ranges for training.
struct FbpSamplerConfig {
    double p_anom = 0.5;
    int block_min = 1, block_max = 3;
    double intensity_min = 0.5, intensity_max = 2.0;  // |I| as a multiple of the per-map feature std
    double blur_sigma = 1.0;
    int blur_radius = 2;
    double mask_eps_frac = 0.01;
    SynthesisMode mode = SynthesisMode::fbp;

    void validate() const {
        require_usage(p_anom >= 0.0 && p_anom <= 1.0, "fbp sampler: p_anom must lie in [0, 1]");
        require_usage(block_min >= 1 && block_min <= block_max, "fbp sampler: need 1 <= block_min <= block_max");
        require_usage(intensity_min > 0.0 && intensity_min <= intensity_max,
                      "fbp sampler: need 0 < intensity_min <= intensity_max");
        require_usage(blur_sigma > 0.0 && blur_radius >= 1, "fbp sampler: invalid blur parameters");
        require_usage(mask_eps_frac > 0.0 && mask_eps_frac < 1.0, "fbp sampler: mask_eps_frac must lie in (0, 1)");
    }
};

template <typename T>
struct SynthBatch {
    BasicFeatureMap<T> features;
    AnomalyMask masks;
    std::vector<std::uint8_t> anomalous;  // per sample
};

template <typename T>
double feature_std(const BasicFeatureMap<T>& fm) {
    double mean = 0.0;
    for (T v : fm.data()) mean += static_cast<double>(v);
    mean /= static_cast<double>(fm.size());
    double var = 0.0;
    for (T v : fm.data()) var += (static_cast<double>(v) - mean) * (static_cast<double>(v) - mean);
    return std::sqrt(var / static_cast<double>(fm.size()));
}

/// Independently perturb each sample with probability p_anom. Sample i draws
/// from its own substream derive_seed(seed, i), so the result does not depend
/// on how samples are scheduled.
template <typename T>
SynthBatch<T> fbp_batch(const BasicFeatureMap<T>& batch, const FbpSamplerConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::vector<BasicFeatureMap<T>> parts;
    std::vector<AnomalyMask> masks;
    SynthBatch<T> out;
    for (std::size_t i = 0; i < batch.n(); ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        auto phi = batch.sample(i);
        if (!rng.bernoulli(cfg.p_anom)) {
            parts.push_back(std::move(phi));
            masks.emplace_back(1, batch.h(), batch.w());
            out.anomalous.push_back(0);
            continue;
        }
        FbpParams p;
        p.block = static_cast<int>(rng.uniform_int(cfg.block_min, cfg.block_max));
        const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
        const double scale = std::max(feature_std(phi), 1e-6);
        p.intensity = sign * scale * rng.uniform(cfg.intensity_min, cfg.intensity_max);
        p.center = {static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(batch.h()) - 1)),
                    static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(batch.w()) - 1))};
        p.blur_sigma = cfg.blur_sigma;
        p.blur_radius = cfg.blur_radius;
        p.mask_eps_frac = cfg.mask_eps_frac;
        auto r = fbp(phi, p, rng);
        if (cfg.mode == SynthesisMode::fbp) {
            parts.push_back(std::move(r.features));
            masks.push_back(std::move(r.mask));
        } else {
            // Same total energy as the block would have had, spread i.i.d. over every entry.
            double energy = 0.0;
            for (double v : r.blurred.data()) energy += v * v;
            energy *= static_cast<double>(phi.c());
            const double sigma = std::sqrt(energy / static_cast<double>(phi.size()));
            for (auto& v : phi.data()) v = static_cast<T>(static_cast<double>(v) + rng.normal(0.0, sigma));
            AnomalyMask m(1, batch.h(), batch.w());
            std::fill(m.cells().begin(), m.cells().end(), std::uint8_t{1});
            parts.push_back(std::move(phi));
            masks.push_back(std::move(m));
        }
        out.anomalous.push_back(1);
    }
    out.features = stack<T>(parts);
    out.masks = stack_masks(masks);
    return out;
}

}  // namespace grad
