#pragma once

// Reference implementations written independently of the library: direct
// formulas, brute-force enumeration and finite differences. Tests compare the
// library against these, never against itself.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

namespace oracle {

/// Align-corners source position of output index i: i * (in - 1) / (out - 1).
inline double source_pos(std::size_t i, std::size_t in, std::size_t out) {
    if (out == 1 || in == 1) return 0.0;
    return static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
}

/// Bilinear value of a row-major (h, w) plane at fractional (y, x), both in range.
inline double bilinear_at(const std::vector<double>& plane, std::size_t h, std::size_t w, double y, double x) {
    auto y0 = static_cast<std::size_t>(std::floor(y));
    auto x0 = static_cast<std::size_t>(std::floor(x));
    y0 = std::min(y0, h - 1);
    x0 = std::min(x0, w - 1);
    const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
    const double ty = y - static_cast<double>(y0), tx = x - static_cast<double>(x0);
    auto at = [&](std::size_t r, std::size_t c) { return plane[r * w + c]; };
    return (1 - ty) * (1 - tx) * at(y0, x0) + (1 - ty) * tx * at(y0, x1) + ty * (1 - tx) * at(y1, x0) + ty * tx * at(y1, x1);
}

/// Resize one plane with align-corners bilinear interpolation.
inline std::vector<double> resize_plane(const std::vector<double>& plane, std::size_t h, std::size_t w, std::size_t oh,
                                        std::size_t ow) {
    std::vector<double> out(oh * ow);
    for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) out[i * ow + j] = bilinear_at(plane, h, w, source_pos(i, h, oh), source_pos(j, w, ow));
    return out;
}

/// Grid sample at (y, x) in [-1, 1]^2 (clamped) of one channel stored as a
/// row-major (rows, cols) plane.
inline double grid_sample(const std::vector<double>& plane, std::size_t rows, std::size_t cols, double y, double x) {
    y = std::clamp(y, -1.0, 1.0);
    x = std::clamp(x, -1.0, 1.0);
    return bilinear_at(plane, rows, cols, (y + 1.0) * 0.5 * static_cast<double>(rows - 1),
                       (x + 1.0) * 0.5 * static_cast<double>(cols - 1));
}

/// Mann-Whitney AUROC by enumerating every positive/negative pair.
inline double auroc_pairs(const std::vector<double>& s, const std::vector<std::uint8_t>& l) {
    double credit = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!l[i]) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (l[j]) continue;
            pairs += 1.0;
            if (s[i] > s[j]) credit += 1.0;
            else if (s[i] == s[j]) credit += 0.5;
        }
    }
    return credit / pairs;
}

/// Average precision by enumerating every distinct threshold t in descending
/// order: precision(t) * (recall(t) - recall(previous t)).
inline double aupr_prefix(const std::vector<double>& s, const std::vector<std::uint8_t>& l) {
    std::vector<double> thresholds(s);
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    double P = 0.0;
    for (auto v : l) P += v;
    double ap = 0.0, prev_tp = 0.0;
    for (double t : thresholds) {
        double tp = 0.0, k = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i)
            if (s[i] >= t) {
                k += 1.0;
                tp += l[i];
            }
        ap += (tp / k) * ((tp - prev_tp) / P);
        prev_tp = tp;
    }
    return ap;
}

/// Half-sample symmetric reflection: ... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
inline std::size_t reflect(long m, long n) {
    const long period = 2 * n;
    long r = m % period;
    if (r < 0) r += period;
    return static_cast<std::size_t>(r < n ? r : period - 1 - r);
}

/// Non-separable 2D convolution with the outer product of a normalized 1D
/// Gaussian of half-width `radius`, symmetric borders.
inline std::vector<double> blur2d(const std::vector<double>& plane, std::size_t h, std::size_t w, double sigma, int radius) {
    std::vector<double> k1;
    double sum = 0.0;
    for (int d = -radius; d <= radius; ++d) {
        k1.push_back(std::exp(-0.5 * d * d / (sigma * sigma)));
        sum += k1.back();
    }
    for (auto& v : k1) v /= sum;
    std::vector<double> out(h * w, 0.0);
    for (long y = 0; y < static_cast<long>(h); ++y)
        for (long x = 0; x < static_cast<long>(w); ++x) {
            double acc = 0.0;
            for (int dy = -radius; dy <= radius; ++dy)
                for (int dx = -radius; dx <= radius; ++dx)
                    acc += k1[dy + radius] * k1[dx + radius] *
                           plane[reflect(y + dy, static_cast<long>(h)) * w + reflect(x + dx, static_cast<long>(w))];
            out[y * w + x] = acc;
        }
    return out;
}

/// Nearest-neighbour distance by a plain double loop.
inline double nn_distance(const std::vector<double>& q, const std::vector<std::vector<double>>& bank) {
    double best = INFINITY;
    for (const auto& e : bank) {
        double s = 0.0;
        for (std::size_t i = 0; i < q.size(); ++i) s += (q[i] - e[i]) * (q[i] - e[i]);
        best = std::min(best, std::sqrt(s));
    }
    return best;
}

/// Central finite difference of f at parameter p, restoring p afterwards.
template <typename T>
double central_difference(T& p, double step, const std::function<double()>& f) {
    const T saved = p;
    p = static_cast<T>(static_cast<double>(saved) + step);
    const double up = f();
    p = static_cast<T>(static_cast<double>(saved) - step);
    const double down = f();
    p = saved;
    return (up - down) / (2.0 * step);
}

/// |a - n| / max(|a|, |n|, floor).
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

}  // namespace oracle
