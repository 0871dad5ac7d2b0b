#pragma once

// Memory-bank baseline: stores training feature vectors and scores each query
// location by the exact Euclidean distance to its nearest entry (linear scan).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "grad/error.hpp"
#include "grad/feature_map.hpp"
#include "grad/rng.hpp"

namespace grad {

template <typename T>
class BasicMemoryBank {
public:
    BasicMemoryBank() = default;
    BasicMemoryBank(std::size_t dim, std::vector<T> entries, double subsample = 1.0)
        : dim_(dim), entries_(std::move(entries)), subsample_(subsample) {
        require_usage(dim_ >= 1, "memory bank: zero dimensionality");
        require_usage(!entries_.empty(), "memory bank: empty bank");
        require_usage(entries_.size() % dim_ == 0, "memory bank: entry storage is not a multiple of the dimensionality");
    }

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return dim_ ? entries_.size() / dim_ : 0; }
    double subsample() const noexcept { return subsample_; }
    std::span<const T> entry(std::size_t i) const noexcept { return {entries_.data() + i * dim_, dim_}; }

    bool operator==(const BasicMemoryBank&) const = default;

    /// Squared distance to the nearest entry and its index.
    std::pair<double, std::size_t> nearest(std::span<const double> q) const {
        require_usage(size() > 0, "memory bank: empty bank");
        require_usage(q.size() == dim_, "memory bank: query dimensionality mismatch");
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        const T* e = entries_.data();
        for (std::size_t i = 0, n = size(); i < n; ++i, e += dim_) {
            double d = 0.0;
            for (std::size_t c = 0; c < dim_; ++c) {
                const double t = q[c] - static_cast<double>(e[c]);
                d += t * t;
            }
            if (d < best) {
                best = d;
                best_i = i;
            }
        }
        return {best, best_i};
    }

private:
    std::size_t dim_ = 0;
    std::vector<T> entries_;
    double subsample_ = 1.0;
};

using MemoryBank = BasicMemoryBank<float>;

/// Collects every location vector of `features` and keeps a seeded random
/// subset of round(subsample * total) entries (at least one), in source order.
template <typename T>
BasicMemoryBank<T> bank_build(const BasicFeatureMap<T>& features, double subsample, std::uint64_t seed) {
    require_usage(features.size() > 0, "bank_build: empty training features");
    require_usage(subsample > 0.0 && subsample <= 1.0, "bank_build: subsample must lie in (0, 1]");
    const std::size_t total = features.n() * features.plane();
    const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(subsample * static_cast<double>(total))));
    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (keep < total) {
        Rng rng(derive_seed(seed, "bank-subsample"));
        for (std::size_t i = 0; i < keep; ++i) {
            const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(total - 1)));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(keep);
        std::sort(idx.begin(), idx.end());
    }
    const std::size_t C = features.c(), plane = features.plane();
    std::vector<T> entries;
    entries.reserve(keep * C);
    for (std::size_t k : idx) {
        const std::size_t n = k / plane, p = k % plane;
        for (std::size_t c = 0; c < C; ++c) entries.push_back(features.data()[(n * C + c) * plane + p]);
    }
    return BasicMemoryBank<T>(C, std::move(entries), subsample);
}

/// (N, 1, H, W) nearest-neighbour distance map.
template <typename T>
BasicFeatureMap<T> bank_score(const BasicMemoryBank<T>& bank, const BasicFeatureMap<T>& aligned) {
    require_usage(bank.size() > 0, "bank_score: empty bank");
    require_usage(aligned.c() == bank.dim(), "bank_score: feature channels " + std::to_string(aligned.c()) +
                                                 " do not match bank dimensionality " + std::to_string(bank.dim()));
    BasicFeatureMap<T> out(aligned.n(), 1, aligned.h(), aligned.w());
    std::vector<double> q(aligned.c());
    for (std::size_t n = 0; n < aligned.n(); ++n)
        for (std::size_t h = 0; h < aligned.h(); ++h)
            for (std::size_t w = 0; w < aligned.w(); ++w) {
                aligned.gather(n, h, w, q);
                out(n, 0, h, w) = static_cast<T>(std::sqrt(bank.nearest(q).first));
            }
    return out;
}

}  // namespace grad
