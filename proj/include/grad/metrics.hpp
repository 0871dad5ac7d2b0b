#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "grad/error.hpp"

namespace grad {

struct LabeledScores {
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;  // 1 = anomalous

    void append(std::span<const double> s, std::span<const std::uint8_t> l) {
        require_usage(s.size() == l.size(), "LabeledScores: scores/labels length mismatch");
        scores.insert(scores.end(), s.begin(), s.end());
        labels.insert(labels.end(), l.begin(), l.end());
    }
};

namespace detail {
inline std::vector<std::size_t> order_by_score(const LabeledScores& ls, bool descending) {
    require_usage(ls.scores.size() == ls.labels.size(), "metrics: scores/labels length mismatch");
    for (double s : ls.scores) require_numeric(std::isfinite(s), "metrics: non-finite score");
    std::vector<std::size_t> idx(ls.scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return descending ? ls.scores[a] > ls.scores[b] : ls.scores[a] < ls.scores[b];
    });
    return idx;
}
}  // namespace detail

/// Probability that a random positive outscores a random negative, ties
/// counted 1/2. Exact: pair credit is accumulated in half-units as integers.
inline double auroc(const LabeledScores& ls) {
    const auto idx = detail::order_by_score(ls, false);
    std::uint64_t n_pos = 0, n_neg = 0;
    for (auto l : ls.labels) (l ? n_pos : n_neg) += 1;
    require_data(n_pos > 0 && n_neg > 0, "auroc: need at least one positive and one negative label");
    std::uint64_t credit2 = 0, neg_below = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        std::uint64_t p = 0, n = 0;
        while (j < idx.size() && ls.scores[idx[j]] == ls.scores[idx[i]]) {
            (ls.labels[idx[j]] ? p : n) += 1;
            ++j;
        }
        credit2 += p * (2 * neg_below + n);
        neg_below += n;
        i = j;
    }
    return static_cast<double>(credit2) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

/// Average precision over descending score thresholds, tied scores entering as one block.
inline double aupr(const LabeledScores& ls) {
    const auto idx = detail::order_by_score(ls, true);
    std::uint64_t n_pos = 0;
    for (auto l : ls.labels) n_pos += l ? 1 : 0;
    require_data(n_pos > 0, "aupr: need at least one positive label");
    std::uint64_t tp = 0, fp = 0, tp_prev = 0;
    double ap = 0.0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && ls.scores[idx[j]] == ls.scores[idx[i]]) {
            (ls.labels[idx[j]] ? tp : fp) += 1;
            ++j;
        }
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        ap += precision * (static_cast<double>(tp - tp_prev) / static_cast<double>(n_pos));
        tp_prev = tp;
        i = j;
    }
    return ap;
}

}  // namespace grad
