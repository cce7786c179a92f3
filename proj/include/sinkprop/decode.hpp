#pragma once

// Turning a matrix of rank marginals into one ranking: maximum log-likelihood
// matching, and the expected-rank short-cut that only matches a prefix.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "sinkprop/types.hpp"

namespace sinkprop {

inline constexpr Index kDefaultDecodeCap = 200;

/// ln p, with p <= 0 mapped to a finite sentinel so every assignment scores.
inline constexpr double kLogZeroSentinel = -1e30;

inline double log_marginal(double p) { return p > 0.0 ? std::log(p) : kLogZeroSentinel; }

/// sum_k ln P(s[k], k)
inline double log_likelihood(const Matrix& p, const Permutation& s) {
    require_square(p, "marginal matrix");
    if (s.size() != p.rows()) throw Error(ErrorCode::DimensionMismatch, "permutation size");
    double total = 0.0;
    for (Index k = 0; k < s.size(); ++k) total += log_marginal(p(s[k], k));
    return total;
}

/// Minimum-cost perfect matching on a dense square cost matrix by shortest
/// augmenting paths with dual potentials, O(n^3). Returns the column
/// assigned to each row.
inline std::vector<Index> min_cost_assignment(const Matrix& cost) {
    require_square(cost, "cost matrix");
    const Index n = cost.rows();
    const double inf = std::numeric_limits<double>::infinity();
    // 1-based bookkeeping; row/column 0 is the virtual root.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), min_slack(n + 1);
    std::vector<Index> match(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);

    for (Index row = 1; row <= n; ++row) {
        match[0] = row;
        Index col0 = 0;
        std::fill(min_slack.begin(), min_slack.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[col0] = 1;
            const Index r0 = match[col0];
            double delta = inf;
            Index col1 = 0;
            for (Index c = 1; c <= n; ++c) {
                if (used[c]) continue;
                const double slack = cost(r0 - 1, c - 1) - u[r0] - v[c];
                if (slack < min_slack[c]) {
                    min_slack[c] = slack;
                    way[c] = col0;
                }
                if (min_slack[c] < delta) {
                    delta = min_slack[c];
                    col1 = c;
                }
            }
            for (Index c = 0; c <= n; ++c) {
                if (used[c]) {
                    u[match[c]] += delta;
                    v[c] -= delta;
                } else {
                    min_slack[c] -= delta;
                }
            }
            col0 = col1;
        } while (match[col0] != 0);
        do {
            const Index col1 = way[col0];
            match[col0] = match[col1];
            col0 = col1;
        } while (col0 != 0);
    }

    std::vector<Index> assignment(static_cast<std::size_t>(n));
    for (Index c = 1; c <= n; ++c) assignment[match[c] - 1] = c - 1;
    return assignment;
}

/// argmax_s sum_k ln P(s[k], k).
///
/// Zero marginals carry a penalty B chosen larger than any spread of the
/// finite costs, so the matching minimises the number of zero entries first
/// and the finite log-likelihood second; that is the same ordering the
/// -1e30 sentinel induces, without swamping the finite costs in rounding.
inline Permutation hungarian_decode(const Matrix& p) {
    require_square(p, "marginal matrix");
    const Index n = p.rows();
    if (n == 0) return Permutation{};

    Matrix cost(n, n);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (Index j = 0; j < n; ++j) {
        for (Index k = 0; k < n; ++k) {
            if (p(j, k) > 0.0) {
                cost(j, k) = -std::log(p(j, k));
                lo = std::min(lo, cost(j, k));
                hi = std::max(hi, cost(j, k));
            }
        }
    }
    const double penalty =
        std::isfinite(lo) ? static_cast<double>(n) * (std::abs(lo) + std::abs(hi)) + 1.0 : 1.0;
    for (Index j = 0; j < n; ++j) {
        for (Index k = 0; k < n; ++k) {
            if (!(p(j, k) > 0.0)) cost(j, k) = penalty;
        }
    }

    const std::vector<Index> rank_of_doc = min_cost_assignment(cost);
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j) order[rank_of_doc[j]] = j;
    return Permutation(std::move(order));
}

/// E[rank_j] = sum_k P(j, k) * k with 1-based ranks.
inline Vector expected_ranks(const Matrix& p) {
    const Vector ranks = Vector::LinSpaced(p.cols(), 1.0, static_cast<double>(p.cols()));
    return p * ranks;
}

/// Sort by expected rank (ties by document index), then re-match the top
/// `cap` documents against the first `cap` ranks and keep the rest fixed.
inline Permutation shortcut_decode(const Matrix& p, Index cap = kDefaultDecodeCap) {
    require_square(p, "marginal matrix");
    if (cap < 1) throw Error(ErrorCode::InvalidArgument, "decode cap must be >= 1");
    const Index n = p.rows();
    if (n <= cap) return hungarian_decode(p);

    const Vector er = expected_ranks(p);
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return er(a) < er(b); });

    Matrix sub(cap, cap);
    for (Index i = 0; i < cap; ++i) sub.row(i) = p.row(order[i]).head(cap);
    const Permutation prefix = hungarian_decode(sub);

    std::vector<Index> result = order;
    for (Index k = 0; k < cap; ++k) result[k] = order[prefix[k]];
    return Permutation(std::move(result));
}

} // namespace sinkprop
