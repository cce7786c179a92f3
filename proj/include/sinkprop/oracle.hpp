#pragma once

// Brute-force references for tests: explicit permutation enumeration,
// mixtures over permutations, and central finite differences. Nothing here
// reuses the marginal-based code paths it is meant to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "sinkprop/objectives.hpp"
#include "sinkprop/types.hpp"

namespace sinkprop::oracle {

inline constexpr Index kMaxEnumeration = 8;

/// All J! permutations in lexicographic order.
inline std::vector<Permutation> enumerate_permutations(Index n) {
    if (n > kMaxEnumeration) throw Error(ErrorCode::TooLarge, "enumeration limited to J <= 8");
    if (n < 0) throw Error(ErrorCode::InvalidArgument, "J must be >= 0");
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::vector<Permutation> out;
    do {
        out.emplace_back(order);
    } while (std::next_permutation(order.begin(), order.end()));
    return out;
}

/// A distribution over rankings given as explicit (weight, permutation) pairs.
class PermutationMixture {
public:
    PermutationMixture() = default;

    explicit PermutationMixture(std::vector<std::pair<double, Permutation>> components)
        : components_(std::move(components)) {
        double total = 0.0;
        for (const auto& [w, s] : components_) {
            if (w < 0.0) throw Error(ErrorCode::InvalidArgument, "mixture weights must be >= 0");
            if (s.size() != components_.front().second.size()) {
                throw Error(ErrorCode::DimensionMismatch, "mixture permutations differ in size");
            }
            total += w;
        }
        if (components_.empty() || std::abs(total - 1.0) > 1e-12) {
            throw Error(ErrorCode::InvalidArgument, "mixture weights must sum to 1");
        }
    }

    static PermutationMixture uniform(Index n) {
        auto all = enumerate_permutations(n);
        const double w = 1.0 / static_cast<double>(all.size());
        std::vector<std::pair<double, Permutation>> c;
        for (auto& s : all) c.emplace_back(w, std::move(s));
        return PermutationMixture(std::move(c));
    }

    const std::vector<std::pair<double, Permutation>>& components() const { return components_; }
    Index dim() const { return components_.empty() ? 0 : components_.front().second.size(); }

private:
    std::vector<std::pair<double, Permutation>> components_;
};

/// sum_m w_m S_m
inline Matrix mixture_marginals(const PermutationMixture& mix) {
    const Index n = mix.dim();
    Matrix p = Matrix::Zero(n, n);
    for (const auto& [w, s] : mix.components()) {
        for (Index k = 0; k < n; ++k) p(s[k], k) += w;
    }
    return p;
}

/// sum_m w_m * gain(s_m), scoring each ranking explicitly.
inline double brute_force_expected_gain(const PermutationMixture& mix, const RelevanceVector& r,
                                        const GainSpec& g) {
    if (mix.dim() > kMaxEnumeration) throw Error(ErrorCode::TooLarge, "mixture too large");
    double total = 0.0;
    for (const auto& [w, s] : mix.components()) total += w * exact_gain(s, r, g);
    return total;
}

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h.
inline Vector finite_diff(const std::function<double(const Vector&)>& f, const Vector& x,
                          double h = 1e-6) {
    if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "step must be positive");
    Vector grad(x.size());
    Vector probe = x;
    for (Index i = 0; i < x.size(); ++i) {
        probe(i) = x(i) + h;
        const double up = f(probe);
        probe(i) = x(i) - h;
        const double down = f(probe);
        probe(i) = x(i);
        grad(i) = (up - down) / (2.0 * h);
    }
    return grad;
}

/// ||a - b|| / max(||a||, ||b||); absolute when both norms are below 1e-6.
inline double relative_error(const Vector& analytic, const Vector& numeric) {
    const double scale = std::max(analytic.norm(), numeric.norm());
    const double diff = (analytic - numeric).norm();
    return scale > 1e-6 ? diff / scale : diff;
}

/// Best sum_k ln P(s[k], k) over all permutations, zeros scored as -1e30.
inline double brute_force_best_log_likelihood(const Matrix& p) {
    double best = -std::numeric_limits<double>::infinity();
    for (const Permutation& s : enumerate_permutations(p.rows())) {
        double total = 0.0;
        for (Index k = 0; k < s.size(); ++k) {
            total += p(s[k], k) > 0.0 ? std::log(p(s[k], k)) : -1e30;
        }
        best = std::max(best, total);
    }
    return best;
}

} // namespace sinkprop::oracle
