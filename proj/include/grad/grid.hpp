#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "grad/coord_map.hpp"
#include "grad/error.hpp"
#include "grad/feature_map.hpp"
#include "grad/rng.hpp"

namespace grad {

/// Learnable C-channel lattice of rows x cols nodes spanning [-1, 1]^2.
///
/// Storage is node-major: the C values of one node are contiguous, so a
/// bilinear query reads four short runs regardless of the lattice size.
template <typename T>
class BasicContinuousGrid {
public:
    BasicContinuousGrid() = default;

    BasicContinuousGrid(std::size_t channels, std::size_t rows, std::size_t cols, T fill = T{})
        : channels_(channels), rows_(rows), cols_(cols) {
        require_usage(channels >= 1, "grid needs at least one channel");
        require_usage(rows >= 2 && cols >= 2, "grid needs at least 2 nodes per axis, got " + std::to_string(rows) +
                                                  "x" + std::to_string(cols));
        values_.assign(channels * rows * cols, fill);
    }

    std::size_t channels() const noexcept { return channels_; }
    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t node_count() const noexcept { return rows_ * cols_; }

    std::size_t node_index(std::size_t r, std::size_t c) const noexcept { return r * cols_ + c; }

    std::span<const T> node(std::size_t flat) const noexcept {
        return std::span<const T>(values_).subspan(flat * channels_, channels_);
    }
    std::span<T> node(std::size_t flat) noexcept { return std::span<T>(values_).subspan(flat * channels_, channels_); }

    T value(std::size_t ch, std::size_t r, std::size_t c) const noexcept {
        return values_[node_index(r, c) * channels_ + ch];
    }
    T& value(std::size_t ch, std::size_t r, std::size_t c) noexcept { return values_[node_index(r, c) * channels_ + ch]; }

    std::span<T> values() noexcept { return values_; }
    std::span<const T> values() const noexcept { return values_; }

    bool operator==(const BasicContinuousGrid&) const = default;

private:
    std::size_t channels_ = 0, rows_ = 0, cols_ = 0;
    std::vector<T> values_;
};

using ContinuousGrid = BasicContinuousGrid<float>;

/// The four nodes bracketing a query and their interpolation fractions.
struct GridCell {
    std::size_t r0 = 0, c0 = 0;
    double fy = 0.0, fx = 0.0;
    bool clamped_y = false, clamped_x = false;

    std::array<double, 4> weights() const noexcept {
        return {(1.0 - fy) * (1.0 - fx), (1.0 - fy) * fx, fy * (1.0 - fx), fy * fx};
    }
};

namespace detail {
inline void locate_axis(double c, std::size_t n, std::size_t& i0, double& f, bool& clamped) {
    clamped = c < -1.0 || c > 1.0;
    const double cc = std::clamp(c, -1.0, 1.0);
    const double pos = (cc + 1.0) * 0.5 * static_cast<double>(n - 1);
    i0 = std::min(static_cast<std::size_t>(std::floor(pos)), n - 2);
    f = pos - static_cast<double>(i0);
}
}  // namespace detail

/// Locate a query on a rows x cols lattice; coordinates outside [-1, 1] are clamped.
inline GridCell locate(std::size_t rows, std::size_t cols, Coord2 coord) {
    require_numeric(std::isfinite(coord.y) && std::isfinite(coord.x), "grid_sample: non-finite coordinate");
    GridCell cell;
    detail::locate_axis(coord.y, rows, cell.r0, cell.fy, cell.clamped_y);
    detail::locate_axis(coord.x, cols, cell.c0, cell.fx, cell.clamped_x);
    return cell;
}

template <typename T>
std::array<std::size_t, 4> cell_nodes(const BasicContinuousGrid<T>& g, const GridCell& cell) noexcept {
    const std::size_t n00 = g.node_index(cell.r0, cell.c0);
    return {n00, n00 + 1, n00 + g.cols(), n00 + g.cols() + 1};
}

/// out[c] += scale * sample(c). Hot path shared by inference and training.
template <typename T>
void accumulate_sample(const BasicContinuousGrid<T>& g, const GridCell& cell, double scale, std::span<double> out) noexcept {
    const auto w = cell.weights();
    const auto nodes = cell_nodes(g, cell);
    const T* v00 = g.node(nodes[0]).data();
    const T* v01 = g.node(nodes[1]).data();
    const T* v10 = g.node(nodes[2]).data();
    const T* v11 = g.node(nodes[3]).data();
    const double a = scale * w[0], b = scale * w[1], c = scale * w[2], d = scale * w[3];
    for (std::size_t ch = 0; ch < g.channels(); ++ch)
        out[ch] += a * static_cast<double>(v00[ch]) + b * static_cast<double>(v01[ch]) + c * static_cast<double>(v10[ch]) +
                   d * static_cast<double>(v11[ch]);
}

template <typename T>
std::vector<double> grid_sample(const BasicContinuousGrid<T>& g, Coord2 coord) {
    std::vector<double> out(g.channels(), 0.0);
    accumulate_sample(g, locate(g.rows(), g.cols(), coord), 1.0, out);
    return out;
}

/// Adds the node gradients (bilinear weight times upstream) into `node_grads`,
/// laid out like g.values(), and returns dL/dcoord. The coordinate gradient on a
/// clamped axis is 0. At an interior node line the derivative is taken from the
/// cell above/right of the node (one-sided).
template <typename T>
Coord2 accumulate_sample_grad(const BasicContinuousGrid<T>& g, const GridCell& cell, std::span<const double> upstream,
                              std::span<double> node_grads) noexcept {
    const std::size_t C = g.channels();
    const auto w = cell.weights();
    const auto nodes = cell_nodes(g, cell);
    const T* v00 = g.node(nodes[0]).data();
    const T* v01 = g.node(nodes[1]).data();
    const T* v10 = g.node(nodes[2]).data();
    const T* v11 = g.node(nodes[3]).data();
    double* g00 = node_grads.data() + nodes[0] * C;
    double* g01 = node_grads.data() + nodes[1] * C;
    double* g10 = node_grads.data() + nodes[2] * C;
    double* g11 = node_grads.data() + nodes[3] * C;
    double dfy = 0.0, dfx = 0.0;
    for (std::size_t ch = 0; ch < C; ++ch) {
        const double u = upstream[ch];
        g00[ch] += w[0] * u;
        g01[ch] += w[1] * u;
        g10[ch] += w[2] * u;
        g11[ch] += w[3] * u;
        const double a = v00[ch], b = v01[ch], c = v10[ch], d = v11[ch];
        dfy += u * ((1.0 - cell.fx) * (c - a) + cell.fx * (d - b));
        dfx += u * ((1.0 - cell.fy) * (b - a) + cell.fy * (d - c));
    }
    Coord2 grad;
    grad.y = cell.clamped_y ? 0.0 : dfy * 0.5 * static_cast<double>(g.rows() - 1);
    grad.x = cell.clamped_x ? 0.0 : dfx * 0.5 * static_cast<double>(g.cols() - 1);
    return grad;
}

struct NodeGrad {
    std::size_t row = 0, col = 0;
    std::vector<double> grad;
};

struct SampleGrad {
    std::array<NodeGrad, 4> nodes;  // (r0,c0), (r0,c0+1), (r0+1,c0), (r0+1,c0+1)
    Coord2 coord;
};

template <typename T>
SampleGrad grid_sample_grad(const BasicContinuousGrid<T>& g, Coord2 coord, std::span<const double> upstream) {
    require_usage(upstream.size() == g.channels(), "grid_sample_grad: upstream length does not match channels");
    const GridCell cell = locate(g.rows(), g.cols(), coord);
    std::vector<double> dense(g.values().size(), 0.0);
    SampleGrad out;
    out.coord = accumulate_sample_grad(g, cell, upstream, dense);
    const auto nodes = cell_nodes(g, cell);
    for (std::size_t k = 0; k < 4; ++k) {
        out.nodes[k].row = nodes[k] / g.cols();
        out.nodes[k].col = nodes[k] % g.cols();
        auto first = dense.begin() + static_cast<std::ptrdiff_t>(nodes[k] * g.channels());
        out.nodes[k].grad.assign(first, first + static_cast<std::ptrdiff_t>(g.channels()));
    }
    return out;
}

enum class GridInitKind { zeros, uniform };

struct GridInit {
    GridInitKind kind = GridInitKind::uniform;
    double amplitude = 0.05;
};

template <typename T = float>
BasicContinuousGrid<T> init_grid(std::size_t channels, std::size_t rows, std::size_t cols, GridInit scheme,
                                 std::uint64_t seed) {
    BasicContinuousGrid<T> g(channels, rows, cols);
    if (scheme.kind == GridInitKind::uniform) {
        require_usage(scheme.amplitude >= 0.0, "init_grid: amplitude must be non-negative");
        Rng rng(derive_seed(seed, "grid-init"));
        for (auto& v : g.values()) v = static_cast<T>(rng.uniform(-scheme.amplitude, scheme.amplitude));
    }
    return g;
}

/// Position pathway (local grid) plus content pathway (global grid), summed.
template <typename T>
struct BasicNormalGrid {
    BasicContinuousGrid<T> local;
    BasicContinuousGrid<T> global;
    BasicContentCoordMap<T> content_map;

    std::size_t channels() const noexcept { return local.channels(); }
    bool operator==(const BasicNormalGrid&) const = default;
};

/// Content pathway only.
template <typename T>
struct BasicAbnormalGrid {
    BasicContinuousGrid<T> grid;
    BasicContentCoordMap<T> content_map;

    std::size_t channels() const noexcept { return grid.channels(); }
    bool operator==(const BasicAbnormalGrid&) const = default;
};

using NormalGrid = BasicNormalGrid<float>;
using AbnormalGrid = BasicAbnormalGrid<float>;

template <typename T>
void validate(const BasicNormalGrid<T>& ng) {
    require_usage(ng.local.channels() == ng.global.channels() && ng.content_map.channels == ng.local.channels(),
                  "normal grid: inconsistent channel counts");
}

template <typename T>
void validate(const BasicAbnormalGrid<T>& ag) {
    require_usage(ag.content_map.channels == ag.grid.channels(), "abnormal grid: inconsistent channel counts");
}

/// Normal-grid output for one location: out = local(lc) + global(content(v)).
template <typename T>
void normal_sample_at(const BasicNormalGrid<T>& ng, std::span<const double> v, Coord2 lc, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    accumulate_sample(ng.local, locate(ng.local.rows(), ng.local.cols(), lc), 1.0, out);
    accumulate_sample(ng.global, locate(ng.global.rows(), ng.global.cols(), content_coords(ng.content_map, v)), 1.0, out);
}

template <typename T>
void abnormal_sample_at(const BasicAbnormalGrid<T>& ag, std::span<const double> v, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    accumulate_sample(ag.grid, locate(ag.grid.rows(), ag.grid.cols(), content_coords(ag.content_map, v)), 1.0, out);
}

template <typename T>
BasicFeatureMap<T> sample_normal(const BasicNormalGrid<T>& ng, const BasicFeatureMap<T>& aligned) {
    validate(ng);
    require_usage(aligned.c() == ng.channels(), "sample_normal: feature channels " + std::to_string(aligned.c()) +
                                                    " do not match grid channels " + std::to_string(ng.channels()));
    BasicFeatureMap<T> out(aligned.dims(), std::vector<T>(aligned.size()));
    std::vector<double> v(aligned.c()), s(aligned.c());
    for (std::size_t n = 0; n < aligned.n(); ++n)
        for (std::size_t h = 0; h < aligned.h(); ++h)
            for (std::size_t w = 0; w < aligned.w(); ++w) {
                aligned.gather(n, h, w, v);
                normal_sample_at(ng, v, local_coords(h, w, aligned.h(), aligned.w()), s);
                out.scatter(n, h, w, s);
            }
    return out;
}

template <typename T>
BasicFeatureMap<T> sample_abnormal(const BasicAbnormalGrid<T>& ag, const BasicFeatureMap<T>& aligned) {
    validate(ag);
    require_usage(aligned.c() == ag.channels(), "sample_abnormal: feature channels " + std::to_string(aligned.c()) +
                                                    " do not match grid channels " + std::to_string(ag.channels()));
    BasicFeatureMap<T> out(aligned.dims(), std::vector<T>(aligned.size()));
    std::vector<double> v(aligned.c()), s(aligned.c());
    for (std::size_t n = 0; n < aligned.n(); ++n)
        for (std::size_t h = 0; h < aligned.h(); ++h)
            for (std::size_t w = 0; w < aligned.w(); ++w) {
                aligned.gather(n, h, w, v);
                abnormal_sample_at(ag, v, s);
                out.scatter(n, h, w, s);
            }
    return out;
}

}  // namespace grad
