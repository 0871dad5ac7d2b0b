#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "grad/error.hpp"

namespace grad {

struct Dims4 {
    std::size_t n = 0, c = 0, h = 0, w = 0;

    std::size_t count() const noexcept { return n * c * h * w; }
    bool operator==(const Dims4&) const = default;
};

inline std::string to_string(const Dims4& d) {
    return "(" + std::to_string(d.n) + "," + std::to_string(d.c) + "," + std::to_string(d.h) + "," +
           std::to_string(d.w) + ")";
}

/// Dense (N, C, H, W) array, row-major in (n, c, h, w) order.
///
/// Used for raw images (C = 3), extracted and aligned features,
/// reconstructions, and single-channel score maps.
template <typename T>
class BasicFeatureMap {
public:
    using value_type = T;

    BasicFeatureMap() = default;

    BasicFeatureMap(std::size_t n, std::size_t c, std::size_t h, std::size_t w, T fill = T{})
        : dims_{n, c, h, w} {
        require_usage(n >= 1 && c >= 1 && h >= 1 && w >= 1, "feature map dims must be >= 1, got " + to_string(dims_));
        data_.assign(dims_.count(), fill);
    }

    BasicFeatureMap(Dims4 dims, std::vector<T> data) : dims_(dims), data_(std::move(data)) {
        require_usage(dims.n >= 1 && dims.c >= 1 && dims.h >= 1 && dims.w >= 1,
                      "feature map dims must be >= 1, got " + to_string(dims));
        require_usage(data_.size() == dims.count(), "feature map data length does not match dims " + to_string(dims));
    }

    const Dims4& dims() const noexcept { return dims_; }
    std::size_t n() const noexcept { return dims_.n; }
    std::size_t c() const noexcept { return dims_.c; }
    std::size_t h() const noexcept { return dims_.h; }
    std::size_t w() const noexcept { return dims_.w; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    std::size_t plane() const noexcept { return dims_.h * dims_.w; }

    std::size_t index(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
        return ((n * dims_.c + c) * dims_.h + h) * dims_.w + w;
    }

    T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
        return data_[index(n, c, h, w)];
    }
    const T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
        return data_[index(n, c, h, w)];
    }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    const std::vector<T>& values() const noexcept { return data_; }

    /// Channel vector at one location, widened to double.
    void gather(std::size_t n, std::size_t h, std::size_t w, std::span<double> out) const noexcept {
        const std::size_t stride = plane();
        const T* base = data_.data() + index(n, 0, h, w);
        for (std::size_t c = 0; c < dims_.c; ++c) out[c] = static_cast<double>(base[c * stride]);
    }

    void scatter(std::size_t n, std::size_t h, std::size_t w, std::span<const double> in) noexcept {
        const std::size_t stride = plane();
        T* base = data_.data() + index(n, 0, h, w);
        for (std::size_t c = 0; c < dims_.c; ++c) base[c * stride] = static_cast<T>(in[c]);
    }

    /// Copy of sample `i` as a (1, C, H, W) map.
    BasicFeatureMap sample(std::size_t i) const {
        require_usage(i < dims_.n, "sample index out of range");
        const std::size_t len = dims_.c * plane();
        std::vector<T> out(data_.begin() + static_cast<std::ptrdiff_t>(i * len),
                           data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * len));
        return BasicFeatureMap({1, dims_.c, dims_.h, dims_.w}, std::move(out));
    }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(static_cast<double>(v)); });
    }

    template <typename U>
    BasicFeatureMap<U> cast() const {
        std::vector<U> out(data_.size());
        std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
        return BasicFeatureMap<U>(dims_, std::move(out));
    }

    bool operator==(const BasicFeatureMap&) const = default;

private:
    Dims4 dims_{};
    std::vector<T> data_;
};

using FeatureMap = BasicFeatureMap<float>;
using FeatureMapD = BasicFeatureMap<double>;

/// Stack (1, C, H, W) or (n_i, C, H, W) maps along N.
template <typename T>
BasicFeatureMap<T> stack(std::span<const BasicFeatureMap<T>> parts) {
    require_usage(!parts.empty(), "cannot stack an empty list of feature maps");
    Dims4 d = parts.front().dims();
    std::size_t total = 0;
    for (const auto& p : parts) {
        require_usage(p.c() == d.c && p.h() == d.h && p.w() == d.w,
                      "stack: mismatched dims " + to_string(p.dims()) + " vs " + to_string(d));
        total += p.n();
    }
    std::vector<T> data;
    data.reserve(total * d.c * d.h * d.w);
    for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
    d.n = total;
    return BasicFeatureMap<T>(d, std::move(data));
}

/// Samples `indices` of `src`, in the given order.
template <typename T>
BasicFeatureMap<T> gather_samples(const BasicFeatureMap<T>& src, std::span<const std::size_t> indices) {
    require_usage(!indices.empty(), "gather_samples: empty index list");
    const std::size_t len = src.c() * src.plane();
    std::vector<T> data;
    data.reserve(indices.size() * len);
    for (std::size_t i : indices) {
        require_usage(i < src.n(), "gather_samples: index out of range");
        auto first = src.data().begin() + static_cast<std::ptrdiff_t>(i * len);
        data.insert(data.end(), first, first + static_cast<std::ptrdiff_t>(len));
    }
    return BasicFeatureMap<T>({indices.size(), src.c(), src.h(), src.w()}, std::move(data));
}

/// Ordered per-level feature maps from one extractor pass.
template <typename T>
struct BasicLayerSet {
    std::vector<BasicFeatureMap<T>> layers;
    std::vector<int> level_ids;
};

using LayerSet = BasicLayerSet<float>;

/// Binary per-location annotation, (N, H, W), values 0 or 1.
class AnomalyMask {
public:
    AnomalyMask() = default;

    AnomalyMask(std::size_t n, std::size_t h, std::size_t w) : n_(n), h_(h), w_(w), cells_(n * h * w, 0) {
        require_usage(n >= 1 && h >= 1 && w >= 1, "mask dims must be >= 1");
    }

    AnomalyMask(std::size_t n, std::size_t h, std::size_t w, std::vector<std::uint8_t> cells)
        : n_(n), h_(h), w_(w), cells_(std::move(cells)) {
        require_usage(n >= 1 && h >= 1 && w >= 1, "mask dims must be >= 1");
        require_usage(cells_.size() == n * h * w, "mask data length does not match dims");
        for (auto& v : cells_) require_data(v <= 1, "mask values must be 0 or 1");
    }

    std::size_t n() const noexcept { return n_; }
    std::size_t h() const noexcept { return h_; }
    std::size_t w() const noexcept { return w_; }
    std::size_t plane() const noexcept { return h_ * w_; }

    std::uint8_t& operator()(std::size_t n, std::size_t h, std::size_t w) noexcept {
        return cells_[(n * h_ + h) * w_ + w];
    }
    std::uint8_t operator()(std::size_t n, std::size_t h, std::size_t w) const noexcept {
        return cells_[(n * h_ + h) * w_ + w];
    }

    std::span<const std::uint8_t> cells() const noexcept { return cells_; }
    std::span<std::uint8_t> cells() noexcept { return cells_; }

    std::size_t count(std::size_t sample) const noexcept {
        std::size_t k = 0;
        for (std::size_t i = 0; i < plane(); ++i) k += cells_[sample * plane() + i];
        return k;
    }

    bool any(std::size_t sample) const noexcept { return count(sample) > 0; }

    AnomalyMask sample(std::size_t i) const {
        require_usage(i < n_, "mask sample index out of range");
        std::vector<std::uint8_t> out(cells_.begin() + static_cast<std::ptrdiff_t>(i * plane()),
                                      cells_.begin() + static_cast<std::ptrdiff_t>((i + 1) * plane()));
        return AnomalyMask(1, h_, w_, std::move(out));
    }

    bool operator==(const AnomalyMask&) const = default;

private:
    std::size_t n_ = 0, h_ = 0, w_ = 0;
    std::vector<std::uint8_t> cells_;
};

inline AnomalyMask stack_masks(std::span<const AnomalyMask> parts) {
    require_usage(!parts.empty(), "cannot stack an empty list of masks");
    const std::size_t h = parts.front().h(), w = parts.front().w();
    std::vector<std::uint8_t> cells;
    std::size_t n = 0;
    for (const auto& p : parts) {
        require_usage(p.h() == h && p.w() == w, "stack_masks: mismatched dims");
        cells.insert(cells.end(), p.cells().begin(), p.cells().end());
        n += p.n();
    }
    return AnomalyMask(n, h, w, std::move(cells));
}

/// Max-pool an (N, H, W) mask down to (N, h, w): a cell is anomalous if any
/// covered source pixel is.
inline AnomalyMask downsample_mask_max(const AnomalyMask& src, std::size_t h, std::size_t w) {
    require_usage(h >= 1 && w >= 1 && h <= src.h() && w <= src.w(), "downsample_mask_max: target must not exceed source");
    AnomalyMask out(src.n(), h, w);
    for (std::size_t n = 0; n < src.n(); ++n)
        for (std::size_t y = 0; y < src.h(); ++y)
            for (std::size_t x = 0; x < src.w(); ++x)
                if (src(n, y, x)) out(n, y * h / src.h(), x * w / src.w()) = 1;
    return out;
}

}  // namespace grad
