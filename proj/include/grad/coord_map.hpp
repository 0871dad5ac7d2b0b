#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "grad/error.hpp"
#include "grad/rng.hpp"

namespace grad {

/// Grid query coordinate in [-1, 1]^2: `y` runs along rows, `x` along columns.
struct Coord2 {
    double y = 0.0;
    double x = 0.0;

    bool operator==(const Coord2&) const = default;
};

namespace detail {
inline double lattice_coord(std::size_t i, std::size_t n) noexcept {
    if (n == 1) return 0.0;
    return -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
}

inline std::size_t lattice_index(double c, std::size_t n) noexcept {
    if (n == 1) return 0;
    const double pos = std::round((c + 1.0) * 0.5 * static_cast<double>(n - 1));
    if (pos <= 0.0) return 0;
    return std::min(static_cast<std::size_t>(pos), n - 1);
}
}  // namespace detail

/// Normalized position of lattice cell (h, w) on an H x W lattice; 0 on a degenerate axis.
inline Coord2 local_coords(std::size_t h, std::size_t w, std::size_t H, std::size_t W) {
    require_usage(H >= 1 && W >= 1, "local_coords: lattice dims must be >= 1");
    require_usage(h < H && w < W, "local_coords: index out of range");
    return {detail::lattice_coord(h, H), detail::lattice_coord(w, W)};
}

/// Inverse of local_coords (rounds to the nearest lattice cell).
inline std::pair<std::size_t, std::size_t> local_index(Coord2 c, std::size_t H, std::size_t W) {
    require_usage(H >= 1 && W >= 1, "local_index: lattice dims must be >= 1");
    return {detail::lattice_index(c.y, H), detail::lattice_index(c.x, W)};
}

inline double squash(double t) noexcept { return t / (1.0 + std::abs(t)); }

inline double squash_derivative(double t) noexcept {
    const double d = 1.0 + std::abs(t);
    return 1.0 / (d * d);
}

/// Learned content pathway: coord = squash(W v + b), W is 2 x C (row 0 -> y, row 1 -> x).
template <typename T>
struct BasicContentCoordMap {
    std::size_t channels = 0;
    std::vector<T> weights;  // 2 * channels, row-major
    std::array<T, 2> bias{};

    BasicContentCoordMap() = default;
    explicit BasicContentCoordMap(std::size_t c) : channels(c), weights(2 * c, T{}) {
        require_usage(c >= 1, "content map needs at least one channel");
    }

    /// Pre-squash projection W v + b.
    std::array<double, 2> project(std::span<const double> v) const {
        require_usage(v.size() == channels, "content_coords: vector length " + std::to_string(v.size()) +
                                                 " does not match map channels " + std::to_string(channels));
        std::array<double, 2> u{static_cast<double>(bias[0]), static_cast<double>(bias[1])};
        for (std::size_t c = 0; c < channels; ++c) {
            u[0] += static_cast<double>(weights[c]) * v[c];
            u[1] += static_cast<double>(weights[channels + c]) * v[c];
        }
        return u;
    }

    bool operator==(const BasicContentCoordMap&) const = default;
};

using ContentCoordMap = BasicContentCoordMap<float>;

template <typename T>
Coord2 content_coords(const BasicContentCoordMap<T>& m, std::span<const double> v) {
    const auto u = m.project(v);
    return {squash(u[0]), squash(u[1])};
}

/// Gradients of a scalar loss through content_coords.
struct ContentMapGrad {
    std::vector<double> weights;  // 2 * C, same layout as the map
    std::array<double, 2> bias{};
    std::vector<double> input;    // C
};

/// Adds dL/dW and dL/db into the given buffers; returns nothing for the input.
/// `pre` is the pre-squash projection of `v`.
inline void accumulate_content_grad(std::span<const double> v, const std::array<double, 2>& pre, Coord2 upstream,
                                    std::span<double> d_weights, std::span<double> d_bias) noexcept {
    const std::size_t C = v.size();
    const double gy = upstream.y * squash_derivative(pre[0]);
    const double gx = upstream.x * squash_derivative(pre[1]);
    if (gy != 0.0)
        for (std::size_t c = 0; c < C; ++c) d_weights[c] += gy * v[c];
    if (gx != 0.0)
        for (std::size_t c = 0; c < C; ++c) d_weights[C + c] += gx * v[c];
    d_bias[0] += gy;
    d_bias[1] += gx;
}

template <typename T>
ContentMapGrad content_coords_grad(const BasicContentCoordMap<T>& m, std::span<const double> v, Coord2 upstream) {
    const auto pre = m.project(v);
    ContentMapGrad g;
    g.weights.assign(2 * m.channels, 0.0);
    g.input.assign(m.channels, 0.0);
    accumulate_content_grad(v, pre, upstream, g.weights, g.bias);
    const double gy = upstream.y * squash_derivative(pre[0]);
    const double gx = upstream.x * squash_derivative(pre[1]);
    for (std::size_t c = 0; c < m.channels; ++c)
        g.input[c] = gy * static_cast<double>(m.weights[c]) + gx * static_cast<double>(m.weights[m.channels + c]);
    return g;
}

/// Weights uniform in (-scale, scale), zero bias.
template <typename T>
BasicContentCoordMap<T> init_content_map(std::size_t channels, double scale, std::uint64_t seed) {
    BasicContentCoordMap<T> m(channels);
    Rng rng(derive_seed(seed, "content-map"));
    for (auto& w : m.weights) w = static_cast<T>(rng.uniform(-scale, scale));
    return m;
}

}  // namespace grad
