#pragma once

// Pre-Sinkhorn parameterizations: maps from per-document scores phi(x_j) to a
// nonnegative J x J matrix, each with a reverse-mode closure back to the scores.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sinkprop/types.hpp"

namespace sinkprop {

enum class ParamKind { LogitLogistic, SmoothedIndicator };

constexpr std::string_view to_string(ParamKind kind) noexcept {
    return kind == ParamKind::LogitLogistic ? "logit-logistic" : "smoothed-indicator";
}

inline ParamKind parse_param_kind(std::string_view text) {
    if (text == "logit-logistic" || text == "ll") return ParamKind::LogitLogistic;
    if (text == "smoothed-indicator" || text == "smooth") return ParamKind::SmoothedIndicator;
    throw Error(ErrorCode::InvalidArgument, "unknown parameterization '" + std::string(text) + "'");
}

/// Number of score columns phi(x) must provide.
constexpr Index score_dim(ParamKind kind) noexcept {
    return kind == ParamKind::LogitLogistic ? 2 : 1;
}

struct ThetaRow {
    double mu = 0.0;
    double sigma = 1.0;
};

/// Forward result of a parameterization for one query. `backward` maps
/// dU/dA to dU/d(inputs); it is empty for a pass that was never run.
struct PreSinkhornPass {
    Matrix matrix;
    std::vector<Index> order;
    std::function<Matrix(const Matrix&)> backward;
};

// ---------------------------------------------------------------------------
// Linear feature map

/// Scores for J documents: row j is W^T x_j, i.e. X (J x M) times W (M x D).
inline Matrix linear_phi(const Matrix& w, const Matrix& x) {
    if (x.cols() != w.rows()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "feature dimension " + std::to_string(x.cols()) + " vs weight rows " +
                        std::to_string(w.rows()));
    }
    return x * w;
}

/// dU/dW given dU/d(scores).
inline Matrix linear_phi_backward(const Matrix& x, const Matrix& grad_scores) {
    if (x.rows() != grad_scores.rows()) {
        throw Error(ErrorCode::DimensionMismatch, "score gradient does not match feature rows");
    }
    return x.transpose() * grad_scores;
}

// ---------------------------------------------------------------------------
// Logit-logistic partitioned measure

namespace detail {

inline double logistic(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double logit(double u) { return std::log(u) - std::log1p(-u); }

inline void require_positive_sigma(double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw Error(ErrorCode::NonPositiveSigma, "sigma must be positive and finite");
    }
}

} // namespace detail

/// Density of a variable on (0, 1) whose logit is logistic(mu, sigma).
inline double ll_pdf(double u, ThetaRow theta) {
    if (!(u > 0.0 && u < 1.0)) throw Error(ErrorCode::DomainError, "u must lie in (0, 1)");
    detail::require_positive_sigma(theta.sigma);
    const double z = (detail::logit(u) - theta.mu) / theta.sigma;
    const double f = detail::logistic(z);
    return f * (1.0 - f) / theta.sigma * (1.0 / u + 1.0 / (1.0 - u));
}

inline double ll_cdf(double u, ThetaRow theta) {
    if (!(u > 0.0 && u < 1.0)) throw Error(ErrorCode::DomainError, "u must lie in (0, 1)");
    detail::require_positive_sigma(theta.sigma);
    return detail::logistic((detail::logit(u) - theta.mu) / theta.sigma);
}

namespace detail {

struct CdfPoint {
    double value;
    double d_mu;
    double d_sigma;
};

// CDF at bin edge e/n with derivatives; edges 0 and n are exact.
inline CdfPoint ll_cdf_at_edge(Index e, Index n, ThetaRow theta) {
    if (e <= 0) return {0.0, 0.0, 0.0};
    if (e >= n) return {1.0, 0.0, 0.0};
    const double u = static_cast<double>(e) / static_cast<double>(n);
    const double z = (logit(u) - theta.mu) / theta.sigma;
    const double f = logistic(z);
    const double dens = f * (1.0 - f);
    return {f, -dens / theta.sigma, -dens * z / theta.sigma};
}

} // namespace detail

/// Row j holds the mass of document j's logit-logistic distribution in each
/// of J equal-width bins on (0, 1). The closure returns a J x 2 matrix of
/// (dU/dmu_j, dU/dsigma_j).
inline PreSinkhornPass ll_bin_matrix(std::span<const ThetaRow> thetas) {
    const Index n = static_cast<Index>(thetas.size());
    if (n < 1) throw Error(ErrorCode::InvalidArgument, "need at least one document");
    for (const ThetaRow& t : thetas) detail::require_positive_sigma(t.sigma);

    Matrix a(n, n);
    Matrix d_mu(n, n + 1);
    Matrix d_sigma(n, n + 1);
    for (Index j = 0; j < n; ++j) {
        double prev = 0.0;
        for (Index e = 0; e <= n; ++e) {
            const auto point = detail::ll_cdf_at_edge(e, n, thetas[j]);
            d_mu(j, e) = point.d_mu;
            d_sigma(j, e) = point.d_sigma;
            if (e > 0) a(j, e - 1) = point.value - prev;
            prev = point.value;
        }
        // The last bin takes whatever the others leave, so a left-to-right
        // sum of the row is exactly 1 in floating point.
        double head = 0.0;
        for (Index k = 0; k + 1 < n; ++k) head += a(j, k);
        a(j, n - 1) = std::max(0.0, 1.0 - head);
    }

    PreSinkhornPass pass;
    pass.matrix = std::move(a);
    pass.backward = [n, d_mu = std::move(d_mu), d_sigma = std::move(d_sigma)](const Matrix& g) {
        // A_{jk} = F(edge k+1) - F(edge k)
        Matrix out(n, 2);
        for (Index j = 0; j < n; ++j) {
            double gm = 0.0;
            double gs = 0.0;
            for (Index k = 0; k < n; ++k) {
                gm += g(j, k) * (d_mu(j, k + 1) - d_mu(j, k));
                gs += g(j, k) * (d_sigma(j, k + 1) - d_sigma(j, k));
            }
            out(j, 0) = gm;
            out(j, 1) = gs;
        }
        return out;
    };
    return pass;
}

// ---------------------------------------------------------------------------
// Smoothed indicator

/// Document indices sorted by decreasing score, ties by ascending index.
inline std::vector<Index> sort_by_score(const Vector& scores) {
    std::vector<Index> order(static_cast<std::size_t>(scores.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return scores(a) > scores(b); });
    return order;
}

/// A_{jk} = exp(-(phi_j - phi_{s[k]})^2 / (2 sigma^2)) where s sorts the
/// scores. The sort is held fixed by the closure, which returns J x 1.
inline PreSinkhornPass smoothed_indicator_matrix(const Vector& scores, double sigma) {
    const Index n = scores.size();
    if (n < 1) throw Error(ErrorCode::InvalidArgument, "need at least one document");
    detail::require_positive_sigma(sigma);

    PreSinkhornPass pass;
    pass.order = sort_by_score(scores);
    const double inv_var = 1.0 / (sigma * sigma);

    // diff(j, k) = phi_j - phi_{s[k]}
    Matrix diff(n, n);
    for (Index k = 0; k < n; ++k) diff.col(k) = scores.array() - scores(pass.order[k]);
    pass.matrix = (-0.5 * inv_var * diff.array().square()).exp().matrix();

    pass.backward = [n, inv_var, order = pass.order, diff = std::move(diff),
                     a = pass.matrix](const Matrix& g) {
        const Matrix c = (g.array() * a.array() * diff.array() * inv_var).matrix();
        Matrix out = -c.rowwise().sum();
        const Eigen::RowVectorXd col = c.colwise().sum();
        for (Index k = 0; k < n; ++k) out(order[k], 0) += col(k);
        return out;
    };
    return pass;
}

// ---------------------------------------------------------------------------
// Score-level interface used by training

/// Builds the pre-Sinkhorn matrix from a J x score_dim(kind) score matrix.
/// Logit-logistic scores are (mu, log sigma) per document; the smoothed
/// indicator uses the single score column and the model-level `sigma`.
inline PreSinkhornPass presinkhorn_forward(ParamKind kind, const Matrix& scores, double sigma) {
    if (scores.cols() != score_dim(kind)) {
        throw Error(ErrorCode::DimensionMismatch,
                    std::string(to_string(kind)) + " expects " +
                        std::to_string(score_dim(kind)) + " score columns");
    }
    if (kind == ParamKind::SmoothedIndicator) return smoothed_indicator_matrix(scores.col(0), sigma);

    const Index n = scores.rows();
    std::vector<ThetaRow> thetas(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j) thetas[j] = {scores(j, 0), std::exp(scores(j, 1))};
    PreSinkhornPass pass = ll_bin_matrix(thetas);
    pass.backward = [inner = std::move(pass.backward), thetas](const Matrix& g) {
        Matrix out = inner(g);
        for (Index j = 0; j < out.rows(); ++j) out(j, 1) *= thetas[j].sigma;
        return out;
    };
    return pass;
}

/// dU/d(scores) from dU/dA for a pass produced by presinkhorn_forward.
inline Matrix presinkhorn_backward(const PreSinkhornPass& pass, const Matrix& grad_a) {
    if (!pass.backward) throw Error(ErrorCode::StaleClosure, "no forward state for this pass");
    require_same_shape(pass.matrix, grad_a, ErrorCode::DimensionMismatch,
                       "gradient does not match pre-Sinkhorn matrix");
    return pass.backward(grad_a);
}

} // namespace sinkprop
