#include <catch_amalgamated.hpp>

#include <random>

#include "sinkprop/decode.hpp"
#include "sinkprop/dsm.hpp"
#include "sinkprop/oracle.hpp"
#include "support/random.hpp"

using namespace sinkprop;
using Catch::Matchers::WithinAbs;
using sinkprop::testing::random_permutation;
using sinkprop::testing::random_positive;

namespace {

Matrix near_dsm(std::mt19937_64& rng, Index n, double spread = 3.0) {
    Matrix a = random_positive(rng, n, 0.0, 1.0);
    a = (spread * a).array().exp().matrix();
    return sinkhorn_forward(a, 5).output;
}

} // namespace

TEST_CASE("hungarian decode examples", "[decode]") {
    Matrix p(2, 2);
    p << 0.9, 0.1, 0.1, 0.9;
    CHECK(hungarian_decode(p) == Permutation::identity(2));

    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const Index n = 1 + static_cast<Index>(rng() % 30);
        const Permutation s = random_permutation(rng, n);
        const Matrix smoothed = (s.to_matrix().array() + 1e-6).matrix();
        CHECK(hungarian_decode(smoothed) == s);
        CHECK(hungarian_decode(s.to_matrix()) == s);
    }
    CHECK(hungarian_decode(Matrix(0, 0)).size() == 0);
}

TEST_CASE("hungarian decode matches exhaustive search", "[decode][property]") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 300; ++trial) {
        const Index n = 1 + static_cast<Index>(rng() % 7);
        const Matrix p = trial % 3 == 0 ? near_dsm(rng, n) : random_positive(rng, n, 0.001, 1.0);
        const Permutation s = hungarian_decode(p);
        CHECK(s.size() == n);
        CHECK_THAT(log_likelihood(p, s), WithinAbs(oracle::brute_force_best_log_likelihood(p), 1e-9));
    }
}

TEST_CASE("hungarian decode with zero marginals", "[decode]") {
    // Only the anti-diagonal is feasible without zeros.
    Matrix p(3, 3);
    p << 0.0, 0.0, 0.2, 0.0, 0.5, 0.9, 0.8, 0.1, 0.0;
    const Permutation s = hungarian_decode(p);
    CHECK(s == Permutation({2, 1, 0}));

    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const Index n = 2 + static_cast<Index>(rng() % 6);
        Matrix q = random_positive(rng, n, 0.01, 1.0);
        for (Index i = 0; i < q.size(); ++i) {
            if (rng() % 3 == 0) q.data()[i] = 0.0;
        }
        CHECK(log_likelihood(q, hungarian_decode(q)) == oracle::brute_force_best_log_likelihood(q));
    }
}

TEST_CASE("hungarian decode is row-permutation equivariant", "[decode][property]") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const Index n = 2 + static_cast<Index>(rng() % 10);
        const Matrix p = random_positive(rng, n, 0.01, 1.0);
        const Permutation perm = random_permutation(rng, n);
        // Row i of the permuted matrix is document perm[i] of the original.
        Matrix q(n, n);
        for (Index i = 0; i < n; ++i) q.row(i) = p.row(perm[i]);
        const Permutation a = hungarian_decode(p);
        const Permutation b = hungarian_decode(q);
        for (Index k = 0; k < n; ++k) CHECK(perm[b[k]] == a[k]);
    }
}

TEST_CASE("expected ranks", "[decode]") {
    CHECK(expected_ranks(Matrix::Identity(3, 3)) == Vector::LinSpaced(3, 1, 3));
    CHECK(expected_ranks(Matrix::Constant(3, 3, 1.0 / 3.0)).isApprox(Vector::Constant(3, 2.0)));
    Matrix p = Matrix::Zero(3, 3);
    p.row(0) << 0.5, 0.0, 0.5;
    CHECK(expected_ranks(p)(0) == 2.0);
}

TEST_CASE("shortcut decode", "[decode]") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const Index n = 1 + static_cast<Index>(rng() % 12);
        const Matrix p = near_dsm(rng, n);
        const Index cap = n + static_cast<Index>(rng() % 3);
        CHECK_THAT(log_likelihood(p, shortcut_decode(p, cap)),
                   WithinAbs(log_likelihood(p, hungarian_decode(p)), 1e-12));

        const Permutation s = random_permutation(rng, n);
        const Matrix smoothed = (s.to_matrix().array() + 1e-6).matrix();
        const Index any_cap = 1 + static_cast<Index>(rng() % (n + 2));
        CHECK(shortcut_decode(smoothed, any_cap) == s);
    }

    CHECK_THROWS_AS(shortcut_decode(Matrix::Identity(3, 3), 0), Error);
}

TEST_CASE("shortcut prefix matching never loses to the expected-rank sort", "[decode][property]") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix p = near_dsm(rng, 50, 6.0);
        const Vector er = expected_ranks(p);
        std::vector<Index> order(50);
        std::iota(order.begin(), order.end(), Index{0});
        std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return er(a) < er(b); });
        const double sorted_score = log_likelihood(p, Permutation(order));
        CHECK(log_likelihood(p, shortcut_decode(p, 10)) >= sorted_score);

        // Larger caps never score lower on a fixed matrix.
        double prev = -std::numeric_limits<double>::infinity();
        for (Index cap = 1; cap <= 50; cap += 7) {
            const double score = log_likelihood(p, shortcut_decode(p, cap));
            CHECK(score >= prev - 1e-9);
            prev = score;
        }
    }
}
