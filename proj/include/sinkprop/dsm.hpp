#pragma once

// Incomplete Sinkhorn normalization and its reverse-mode derivative.
//
// The forward pass alternates column and row normalization a fixed number of
// times and records every intermediate matrix; the backward pass walks the
// recorded stages in reverse, applying the Jacobian-vector product of each
// normalization.

#include <algorithm>
#include <cmath>
#include <vector>

#include "sinkprop/types.hpp"

namespace sinkprop {

inline constexpr int kDefaultSinkhornIterations = 5;
inline constexpr double kDefaultEpsilon = 1e-6;

/// Stage 0 is the smoothed input; stage 2t+1 follows the t-th column
/// normalization and stage 2t+2 the t-th row normalization.
struct SinkhornTape {
    int iterations = 0;
    std::vector<Matrix> stages;

    Index dim() const { return stages.empty() ? 0 : stages.front().rows(); }
};

struct SinkhornResult {
    Matrix output;
    SinkhornTape tape;
};

struct BalanceReport {
    double max_row_residual = 0.0;
    double max_col_residual = 0.0;

    double max() const { return std::max(max_row_residual, max_col_residual); }
};

namespace detail {

inline void require_finite(const Matrix& m) {
    if (!m.allFinite()) throw Error(ErrorCode::NonFinite, "non-finite entry during normalization");
}

} // namespace detail

inline Matrix row_normalize(const Matrix& a) {
    require_square(a, "row_normalize input");
    const Vector sums = a.rowwise().sum();
    for (Index j = 0; j < sums.size(); ++j) {
        if (!std::isfinite(sums(j))) throw Error(ErrorCode::NonFinite, "row sum overflow");
        if (!(sums(j) > 0.0)) {
            throw Error(ErrorCode::ZeroRowSum, "row " + std::to_string(j) + " has zero sum");
        }
    }
    return sums.cwiseInverse().asDiagonal() * a;
}

inline Matrix col_normalize(const Matrix& a) {
    require_square(a, "col_normalize input");
    const Eigen::RowVectorXd sums = a.colwise().sum();
    for (Index k = 0; k < sums.size(); ++k) {
        if (!std::isfinite(sums(k))) throw Error(ErrorCode::NonFinite, "column sum overflow");
        if (!(sums(k) > 0.0)) {
            throw Error(ErrorCode::ZeroColSum, "column " + std::to_string(k) + " has zero sum");
        }
    }
    return a * sums.cwiseInverse().asDiagonal();
}

/// Z^i(A + epsilon), where Z^0 is the identity and Z^i = T_R(T_C(Z^{i-1})).
inline SinkhornResult sinkhorn_forward(const Matrix& a, int iterations = kDefaultSinkhornIterations,
                                       double epsilon = kDefaultEpsilon) {
    require_square(a, "sinkhorn input");
    if (iterations < 0) throw Error(ErrorCode::InvalidArgument, "iterations must be >= 0");
    if (!(epsilon >= 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be >= 0");
    detail::require_finite(a);
    if ((a.array() < 0.0).any()) throw Error(ErrorCode::DomainError, "sinkhorn input is negative");

    SinkhornTape tape;
    tape.iterations = iterations;
    tape.stages.reserve(2 * static_cast<std::size_t>(iterations) + 1);
    tape.stages.push_back(a.array() + epsilon);
    for (int t = 0; t < iterations; ++t) {
        tape.stages.push_back(col_normalize(tape.stages.back()));
        detail::require_finite(tape.stages.back());
        tape.stages.push_back(row_normalize(tape.stages.back()));
        detail::require_finite(tape.stages.back());
    }
    Matrix out = tape.stages.back();
    return {std::move(out), std::move(tape)};
}

/// Reverse step of T_R. With row sums s_j of the input and A' = T_R(A):
///   dU/dA_{jk} = (G_{jk} - sum_k' A'_{jk'} G_{jk'}) / s_j
inline Matrix row_normalize_backward(const Matrix& input, const Matrix& output, const Matrix& grad) {
    const Vector sums = input.rowwise().sum();
    const Vector inner = output.cwiseProduct(grad).rowwise().sum();
    return sums.cwiseInverse().asDiagonal() * (grad.colwise() - inner);
}

/// Reverse step of T_C; the transpose of row_normalize_backward.
inline Matrix col_normalize_backward(const Matrix& input, const Matrix& output, const Matrix& grad) {
    const Eigen::RowVectorXd sums = input.colwise().sum();
    const Eigen::RowVectorXd inner = output.cwiseProduct(grad).colwise().sum();
    return (grad.rowwise() - inner) * sums.cwiseInverse().asDiagonal();
}

/// Given dU/d(output), returns dU/dA for the smoothed input A (and hence for
/// the raw input, since the additive smoothing has unit Jacobian).
inline Matrix sinkhorn_backward(const SinkhornTape& tape, const Matrix& grad_out) {
    if (tape.stages.size() != 2 * static_cast<std::size_t>(tape.iterations) + 1) {
        throw Error(ErrorCode::TapeMismatch, "tape length does not match its iteration count");
    }
    require_same_shape(tape.stages.back(), grad_out, ErrorCode::TapeMismatch,
                       "gradient does not match tape dimension");

    Matrix grad = grad_out;
    for (std::size_t s = tape.stages.size() - 1; s >= 1; --s) {
        grad = s % 2 == 0 ? row_normalize_backward(tape.stages[s - 1], tape.stages[s], grad)
                          : col_normalize_backward(tape.stages[s - 1], tape.stages[s], grad);
    }
    return grad;
}

inline BalanceReport balance_residual(const Matrix& p) {
    BalanceReport report;
    if (p.size() == 0) return report;
    report.max_row_residual = (p.rowwise().sum().array() - 1.0).abs().maxCoeff();
    report.max_col_residual = (p.colwise().sum().array() - 1.0).abs().maxCoeff();
    return report;
}

} // namespace sinkprop
