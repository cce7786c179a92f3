#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sinkprop/error.hpp"

namespace sinkprop {

/// Dense row-major storage is not required anywhere; Eigen's default
/// column-major layout is used throughout.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline void require_square(const Matrix& m, std::string_view what) {
    if (m.rows() != m.cols()) {
        throw Error(ErrorCode::DimensionMismatch,
                    std::string(what) + " must be square, got " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()));
    }
}

inline void require_same_shape(const Matrix& a, const Matrix& b, ErrorCode code,
                               std::string_view what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw Error(code, std::string(what) + ": " + std::to_string(a.rows()) + "x" +
                              std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                              std::to_string(b.cols()));
    }
}

/// A ranking of J documents: `at(k)` is the document shown at (0-based) rank k.
class Permutation {
public:
    Permutation() = default;

    /// Throws InvalidArgument unless `order` is a bijection on {0..J-1}.
    explicit Permutation(std::vector<Index> order) : order_(std::move(order)) {
        std::vector<char> seen(order_.size(), 0);
        for (Index doc : order_) {
            if (doc < 0 || static_cast<std::size_t>(doc) >= order_.size() || seen[doc]) {
                throw Error(ErrorCode::InvalidArgument, "not a permutation");
            }
            seen[doc] = 1;
        }
    }

    static Permutation identity(Index n) {
        std::vector<Index> order(static_cast<std::size_t>(n));
        for (Index k = 0; k < n; ++k) order[k] = k;
        return Permutation(std::move(order));
    }

    Index size() const noexcept { return static_cast<Index>(order_.size()); }
    Index operator[](Index rank) const { return order_[static_cast<std::size_t>(rank)]; }
    std::span<const Index> order() const noexcept { return order_; }

    /// Rank of every document, i.e. the inverse permutation.
    std::vector<Index> ranks() const {
        std::vector<Index> r(order_.size());
        for (std::size_t k = 0; k < order_.size(); ++k) r[order_[k]] = static_cast<Index>(k);
        return r;
    }

    /// S with S(j, k) = 1 iff document j sits at rank k.
    Matrix to_matrix() const {
        Matrix s = Matrix::Zero(size(), size());
        for (Index k = 0; k < size(); ++k) s(order_[k], k) = 1.0;
        return s;
    }

    friend bool operator==(const Permutation&, const Permutation&) = default;

private:
    std::vector<Index> order_;
};

} // namespace sinkprop
