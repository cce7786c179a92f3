#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "sinkprop/objectives.hpp"
#include "sinkprop/oracle.hpp"
#include "support/random.hpp"

using namespace sinkprop;
using Catch::Matchers::WithinAbs;
using sinkprop::testing::flatten;
using sinkprop::testing::random_labels;
using sinkprop::testing::random_permutation;
using sinkprop::testing::unflatten;

namespace {

std::vector<GainSpec> all_specs(Index k) {
    return {GainSpec::ndcg(k), GainSpec::precision(k), GainSpec::rbp(0.8), GainSpec::rbp(0.3)};
}

} // namespace

TEST_CASE("gain and discount functions", "[objectives]") {
    CHECK(gain_g(0) == 0.0);
    CHECK(gain_g(1) == 1.0);
    CHECK(gain_g(3) == 7.0);
    CHECK(discount_d(1) == 1.0);
    CHECK(discount_d(2) == 1.0);
    CHECK_THAT(discount_d(4), WithinAbs(0.5, 1e-15));
    CHECK_THAT(discount_d(8), WithinAbs(1.0 / 3.0, 1e-15));
}

TEST_CASE("ideal DCG", "[objectives]") {
    CHECK(ideal_dcg(RelevanceVector({0, 0, 0}), 3) == 0.0);
    CHECK(ideal_dcg(RelevanceVector({0, 0, 0}), 1) == 0.0);
    CHECK(ideal_dcg(RelevanceVector({1, 0}), 2) == 1.0);
    CHECK(ideal_dcg(RelevanceVector({0, 2}), 1) == 3.0);
    // K beyond J truncates at J.
    CHECK(ideal_dcg(RelevanceVector({0, 2}), 10) == 3.0);
}

TEST_CASE("exact gains", "[objectives]") {
    const RelevanceVector r({1, 0});
    CHECK(exact_gain(Permutation::identity(2), r, GainSpec::ndcg(2)) == 1.0);
    CHECK(exact_gain(Permutation({1, 0}), r, GainSpec::precision(1)) == 0.0);
    CHECK_THAT(exact_gain(Permutation::identity(1), RelevanceVector({1}), GainSpec::rbp(0.8)),
               WithinAbs(0.2, 1e-15));

    // NDCG is zero, not NaN, when no document is relevant.
    CHECK(exact_gain(Permutation::identity(3), RelevanceVector({0, 0, 0}), GainSpec::ndcg(3)) == 0.0);

    // P@K with K > J keeps K as the divisor.
    CHECK_THAT(exact_gain(Permutation::identity(2), RelevanceVector({1, 1}), GainSpec::precision(4)),
               WithinAbs(0.5, 1e-15));

    // Worked NDCG@3: r = [0, 2, 1], ranking [2, 0, 1] -> (1*1 + 0 + 3/log2(3)) / (3 + 1).
    const double dcg = 1.0 + 3.0 / std::log2(3.0);
    CHECK_THAT(exact_gain(Permutation({2, 0, 1}), RelevanceVector({0, 2, 1}), GainSpec::ndcg(3)),
               WithinAbs(dcg / 4.0, 1e-15));
}

TEST_CASE("precision rejects graded labels", "[objectives]") {
    const RelevanceVector graded({2, 0});
    for (auto call : {+[](const RelevanceVector& r) {
                          exact_gain(Permutation::identity(2), r, GainSpec::precision(1));
                      },
                      +[](const RelevanceVector& r) {
                          expected_gain(Matrix::Identity(2, 2), r, GainSpec::precision(1));
                      }}) {
        try {
            call(graded);
            FAIL("expected NonBinaryRelevance");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::NonBinaryRelevance);
        }
    }
}

TEST_CASE("expected gain examples", "[objectives]") {
    std::mt19937_64 rng(1);
    const RelevanceVector r({2, 0, 1, 3, 0});
    const RelevanceVector binary({1, 0, 1, 1, 0});
    for (int trial = 0; trial < 20; ++trial) {
        const Permutation s = random_permutation(rng, 5);
        for (const GainSpec& g : all_specs(3)) {
            const RelevanceVector& rel = g.kind == GainKind::Precision ? binary : r;
            CHECK_THAT(expected_gain(s.to_matrix(), rel, g), WithinAbs(exact_gain(s, rel, g), 1e-14));
        }
    }

    CHECK_THAT(expected_gain(Matrix::Constant(2, 2, 0.5), RelevanceVector({1, 0}), GainSpec::precision(1)),
               WithinAbs(0.5, 1e-15));

    const RelevanceVector r4({3, 1, 0, 2});
    const Permutation s1 = random_permutation(rng, 4);
    const Permutation s2 = random_permutation(rng, 4);
    const Matrix mix = 0.5 * s1.to_matrix() + 0.5 * s2.to_matrix();
    const GainSpec g = GainSpec::ndcg(4);
    CHECK_THAT(expected_gain(mix, r4, g),
               WithinAbs(0.5 * exact_gain(s1, r4, g) + 0.5 * exact_gain(s2, r4, g), 1e-14));

    try {
        expected_gain(Matrix::Identity(3, 3), r4, g);
        FAIL("expected DimensionMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DimensionMismatch);
    }
}

TEST_CASE("expected gain gradient", "[objectives][gradient]") {
    const RelevanceVector r({2, 0, 1, 3});
    const GainSpec g = GainSpec::ndcg(2);
    const GainTable t = expected_gain_grad(Matrix::Identity(4, 4), r, g);
    const double ideal = ideal_dcg(r, 2);
    for (Index j = 0; j < 4; ++j) {
        CHECK_THAT(t(j, 0), WithinAbs(gain_g(r[j]) * discount_d(1) / ideal, 1e-15));
        CHECK_THAT(t(j, 1), WithinAbs(gain_g(r[j]) * discount_d(2) / ideal, 1e-15));
        CHECK(t(j, 2) == 0.0);
        CHECK(t(j, 3) == 0.0);
    }

    std::mt19937_64 rng(2);
    const RelevanceVector binary({1, 0, 1, 1});
    for (const GainSpec& spec : all_specs(3)) {
        const RelevanceVector& rel = spec.kind == GainKind::Precision ? binary : r;
        const Matrix p = sinkprop::testing::random_positive(rng, 4, 0.0, 1.0);
        auto f = [&](const Vector& x) { return expected_gain(unflatten(x, 4, 4), rel, spec); };
        const Vector fd = oracle::finite_diff(f, flatten(p), 1e-4);
        CHECK((fd - flatten(expected_gain_grad(p, rel, spec))).cwiseAbs().maxCoeff() <= 1e-8);
        // Independent of P.
        CHECK(expected_gain_grad(p, rel, spec) == expected_gain_grad(Matrix::Zero(4, 4), rel, spec));
    }
}

TEST_CASE("gain bounds and linearity", "[objectives][property]") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const Index n = 1 + static_cast<Index>(rng() % 8);
        const Index k = 1 + static_cast<Index>(rng() % 10);
        const RelevanceVector graded(random_labels(rng, n, 4));
        const RelevanceVector binary(random_labels(rng, n, 1));
        const Permutation s = random_permutation(rng, n);

        const double ndcg = exact_gain(s, graded, GainSpec::ndcg(k));
        CHECK(ndcg >= 0.0);
        CHECK(ndcg <= 1.0 + 1e-15);
        const double p = exact_gain(s, binary, GainSpec::precision(k));
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
        const double alpha = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        const double rbp = exact_gain(s, binary, GainSpec::rbp(alpha));
        CHECK(rbp >= 0.0);
        CHECK(rbp <= 1.0 - std::pow(alpha, static_cast<double>(n)) + 1e-15);

        const Matrix p1 = sinkprop::testing::random_positive(rng, n, 0.0, 1.0);
        const Matrix p2 = sinkprop::testing::random_positive(rng, n, 0.0, 1.0);
        const double lam = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        for (const GainSpec& g : all_specs(k)) {
            const RelevanceVector& rel = g.kind == GainKind::Precision ? binary : graded;
            const double lhs = expected_gain(lam * p1 + (1.0 - lam) * p2, rel, g);
            const double rhs = lam * expected_gain(p1, rel, g) + (1.0 - lam) * expected_gain(p2, rel, g);
            CHECK_THAT(lhs, WithinAbs(rhs, 1e-12));
        }
    }
}

TEST_CASE("gain spec validation", "[objectives]") {
    CHECK_THROWS_AS(gain_table(RelevanceVector({1}), GainSpec::ndcg(0)), Error);
    CHECK_THROWS_AS(gain_table(RelevanceVector({1}), GainSpec::rbp(1.5)), Error);
    CHECK_THROWS_AS(RelevanceVector(std::vector<int>{}), Error);
    CHECK_THROWS_AS(RelevanceVector({-1}), Error);
}
