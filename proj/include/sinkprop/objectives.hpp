#pragma once

// Rank-linear gains (NDCG@K, P@K, RBP) on explicit permutations and their
// expectations under a matrix of rank marginals.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sinkprop/types.hpp"

namespace sinkprop {

/// Graded relevance labels r_j in {0..R} for the documents of one query.
class RelevanceVector {
public:
    RelevanceVector() = default;

    explicit RelevanceVector(std::vector<int> labels) : labels_(std::move(labels)) {
        if (labels_.empty()) throw Error(ErrorCode::InvalidArgument, "relevance vector is empty");
        for (int r : labels_) {
            if (r < 0) throw Error(ErrorCode::DomainError, "relevance labels must be >= 0");
        }
    }

    Index size() const noexcept { return static_cast<Index>(labels_.size()); }
    int operator[](Index j) const { return labels_[static_cast<std::size_t>(j)]; }
    std::span<const int> labels() const noexcept { return labels_; }
    int max_label() const { return *std::max_element(labels_.begin(), labels_.end()); }
    bool is_binary() const { return max_label() <= 1; }
    bool all_zero() const { return max_label() == 0; }

private:
    std::vector<int> labels_;
};

enum class GainKind { NDCG, Precision, RBP };

inline constexpr double kDefaultRbpAlpha = 0.8;

struct GainSpec {
    GainKind kind = GainKind::NDCG;
    Index k = 10;                    // truncation depth, NDCG and Precision
    double alpha = kDefaultRbpAlpha; // persistence, RBP

    static GainSpec ndcg(Index k) { return {GainKind::NDCG, k, kDefaultRbpAlpha}; }
    static GainSpec precision(Index k) { return {GainKind::Precision, k, kDefaultRbpAlpha}; }
    static GainSpec rbp(double alpha = kDefaultRbpAlpha) { return {GainKind::RBP, 1, alpha}; }

    void validate() const {
        if (kind != GainKind::RBP && k < 1) throw Error(ErrorCode::InvalidArgument, "K must be >= 1");
        if (kind == GainKind::RBP && !(alpha >= 0.0 && alpha <= 1.0)) {
            throw Error(ErrorCode::InvalidArgument, "RBP alpha must lie in [0, 1]");
        }
    }
};

/// l(r_j, k) laid out as a J x J matrix (row = document, column = rank).
using GainTable = Matrix;

/// G(r) = 2^r - 1
inline double gain_g(int r) { return std::exp2(static_cast<double>(r)) - 1.0; }

/// D(k) = 1 for k in {1, 2}, 1/log2(k) beyond (1-based rank).
inline double discount_d(Index k) {
    return k <= 2 ? 1.0 : 1.0 / std::log2(static_cast<double>(k));
}

/// Best achievable DCG@K: labels sorted in nonincreasing order.
inline double ideal_dcg(const RelevanceVector& r, Index k) {
    std::vector<int> sorted(r.labels().begin(), r.labels().end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const Index depth = std::min<Index>(k, r.size());
    double dcg = 0.0;
    for (Index rank = 0; rank < depth; ++rank) dcg += gain_g(sorted[rank]) * discount_d(rank + 1);
    return dcg;
}

namespace detail {

inline void require_binary(const RelevanceVector& r) {
    if (!r.is_binary()) {
        throw Error(ErrorCode::NonBinaryRelevance, "precision requires binary relevance labels");
    }
}

} // namespace detail

/// Gain of an explicit ranking, evaluated straight from the metric definitions.
inline double exact_gain(const Permutation& s, const RelevanceVector& r, const GainSpec& g) {
    g.validate();
    if (s.size() != r.size()) {
        throw Error(ErrorCode::DimensionMismatch, "permutation and relevance sizes differ");
    }
    const Index n = s.size();
    switch (g.kind) {
    case GainKind::NDCG: {
        const double ideal = ideal_dcg(r, g.k);
        if (ideal == 0.0) return 0.0;
        double dcg = 0.0;
        for (Index rank = 0; rank < std::min(g.k, n); ++rank) {
            dcg += gain_g(r[s[rank]]) * discount_d(rank + 1);
        }
        return dcg / ideal;
    }
    case GainKind::Precision: {
        detail::require_binary(r);
        double hits = 0.0;
        for (Index rank = 0; rank < std::min(g.k, n); ++rank) hits += r[s[rank]];
        return hits / static_cast<double>(g.k);
    }
    case GainKind::RBP: {
        double sum = 0.0;
        double weight = 1.0;
        for (Index rank = 0; rank < n; ++rank) {
            sum += r[s[rank]] * weight;
            weight *= g.alpha;
        }
        return (1.0 - g.alpha) * sum;
    }
    }
    return 0.0;
}

/// The rank-linear coefficients l(r_j, k); zero for NDCG when the ideal DCG is zero.
inline GainTable gain_table(const RelevanceVector& r, const GainSpec& g) {
    g.validate();
    const Index n = r.size();
    GainTable table = GainTable::Zero(n, n);
    switch (g.kind) {
    case GainKind::NDCG: {
        const double ideal = ideal_dcg(r, g.k);
        if (ideal == 0.0) break;
        for (Index k = 0; k < std::min(g.k, n); ++k) {
            const double d = discount_d(k + 1) / ideal;
            for (Index j = 0; j < n; ++j) table(j, k) = gain_g(r[j]) * d;
        }
        break;
    }
    case GainKind::Precision: {
        detail::require_binary(r);
        const double inv_k = 1.0 / static_cast<double>(g.k);
        for (Index k = 0; k < std::min(g.k, n); ++k) {
            for (Index j = 0; j < n; ++j) table(j, k) = r[j] * inv_k;
        }
        break;
    }
    case GainKind::RBP: {
        double weight = 1.0 - g.alpha;
        for (Index k = 0; k < n; ++k) {
            for (Index j = 0; j < n; ++j) table(j, k) = r[j] * weight;
            weight *= g.alpha;
        }
        break;
    }
    }
    return table;
}

/// sum_{j,k} l(r_j, k) * P(j, k). Near-doubly-stochastic inputs are used as is.
inline double expected_gain(const Matrix& p, const RelevanceVector& r, const GainSpec& g) {
    if (p.rows() != r.size() || p.cols() != r.size()) {
        throw Error(ErrorCode::DimensionMismatch, "marginal matrix does not match relevance size");
    }
    return gain_table(r, g).cwiseProduct(p).sum();
}

/// d expected_gain / dP; constant in P.
inline GainTable expected_gain_grad(const Matrix& p, const RelevanceVector& r, const GainSpec& g) {
    if (p.rows() != r.size() || p.cols() != r.size()) {
        throw Error(ErrorCode::DimensionMismatch, "marginal matrix does not match relevance size");
    }
    return gain_table(r, g);
}

} // namespace sinkprop
