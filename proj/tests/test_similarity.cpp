#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "doctest.h"
#include "oracles.hpp"
#include "scale/similarity.hpp"

using namespace scale;

namespace {

Matrix random_unit_rows(std::size_t rows, std::size_t cols, RngState& rng) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = rng.next_normal();
    return l2_normalize_rows(m);
}

}  // namespace

TEST_CASE("pairwise_sne two identical vectors") {
    Matrix z(2, 2);
    z.at(0, 0) = 1.0;
    z.at(1, 0) = 1.0;
    SimilarityMatrix sim = pairwise_sne(z, 1.0);
    CHECK(sim.conditional.at(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(sim.conditional.at(1, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(sim.row_normalized.at(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(sim.row_normalized.at(0, 0) == 0.0);
}

TEST_CASE("pairwise_sne three orthonormal vectors") {
    Matrix z(3, 3);
    for (int i = 0; i < 3; ++i) z.at(i, i) = 1.0;
    SimilarityMatrix sim = pairwise_sne(z, 1.0);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            if (i != j) CHECK(sim.conditional.at(i, j) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("pairwise_sne matches the naive oracle") {
    RngState rng(17);
    Matrix z = random_unit_rows(6, 4, rng);
    SimilarityMatrix sim = pairwise_sne(z, 0.1);
    Matrix ref = oracle::sne_reference(z, 0.1);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j)
            CHECK(std::abs(sim.row_normalized.at(i, j) - ref.at(i, j)) < 1e-12);
}

TEST_CASE("similarity contracts across kappas") {
    RngState rng(23);
    for (double kappa : {0.05, 0.1, 0.5, 1.0}) {
        Matrix z = random_unit_rows(8, 5, rng);
        SimilarityMatrix sim = pairwise_sne(z, kappa);
        for (std::size_t i = 0; i < sim.size; ++i) {
            double cond_sum = 0.0, norm_sum = 0.0;
            for (std::size_t j = 0; j < sim.size; ++j) {
                cond_sum += sim.conditional.at(i, j);
                norm_sum += sim.row_normalized.at(i, j);
                CHECK(std::abs(sim.symmetric_raw.at(i, j) - sim.symmetric_raw.at(j, i)) <= 1e-12);
            }
            CHECK(std::abs(cond_sum - 1.0) < 1e-9);
            CHECK(std::abs(norm_sum - 1.0) < 1e-9);
            CHECK(sim.conditional.at(i, i) == 0.0);
            CHECK(sim.symmetric_raw.at(i, i) == 0.0);
            CHECK(sim.row_normalized.at(i, i) == 0.0);
        }
    }
}

TEST_CASE("pairwise_sne rejects degenerate input") {
    Matrix one(1, 3);
    CHECK_THROWS_AS(pairwise_sne(one, 0.1), std::invalid_argument);
    Matrix two(2, 3);
    CHECK_THROWS_AS(pairwise_sne(two, 0.0), std::invalid_argument);
}

namespace {

// Hand-built similarity table: 4 anchors, fixture entries on the eligible
// block so threshold arithmetic can be done by hand.
SimilarityMatrix fixture_similarity() {
    SimilarityMatrix sim;
    sim.size = 4;
    sim.kappa = 0.1;
    sim.conditional = Matrix(4, 4);
    sim.symmetric_raw = Matrix(4, 4);
    sim.row_normalized = Matrix(4, 4);
    // Row-stochastic with the fixture multiset {0.1, 0.2, 0.3, 0.4} spread
    // over the off-diagonal entries of rows 0 and 1.
    double vals[4][4] = {{0.0, 0.4, 0.3, 0.3},
                         {0.2, 0.0, 0.4, 0.4},
                         {0.1, 0.2, 0.0, 0.7},
                         {0.3, 0.3, 0.4, 0.0}};
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) sim.row_normalized.at(i, j) = vals[i][j];
    return sim;
}

}  // namespace

TEST_CASE("adaptive_threshold endpoints and hand fixture") {
    SimilarityMatrix sim = fixture_similarity();
    // Eligible entries (anchors 0..3): all off-diagonal values.
    double values[] = {0.4, 0.3, 0.3, 0.2, 0.4, 0.4, 0.1, 0.2, 0.7, 0.3, 0.3, 0.4};
    double mean = 0.0, mx = 0.0;
    for (double v : values) {
        mean += v;
        mx = std::max(mx, v);
    }
    mean /= 12.0;

    CHECK(adaptive_threshold(sim, 0.0, 2) == doctest::Approx(mean).epsilon(1e-12));
    CHECK(adaptive_threshold(sim, 1.0, 2) == doctest::Approx(mx).epsilon(1e-12));
    CHECK(adaptive_threshold(sim, 0.05, 2) ==
          doctest::Approx(mean + 0.05 * (mx - mean)).epsilon(1e-12));
    CHECK_THROWS_AS(adaptive_threshold(sim, 0.05, 0), std::invalid_argument);
}

TEST_CASE("adaptive_threshold hand arithmetic on a two-anchor block") {
    // Eligible block restricted to anchors {0, 1}: entries 0.4 and 0.2.
    SimilarityMatrix sim = fixture_similarity();
    double mean = 0.3, mx = 0.4;
    CHECK(adaptive_threshold(sim, 0.05, 1) ==
          doctest::Approx(mean + 0.05 * (mx - mean)).epsilon(1e-12));
}

TEST_CASE("adaptive_threshold value fixture: 0.25 + 0.05 * 0.15") {
    // Eligible multiset is three copies each of {0.1, 0.2, 0.3, 0.4}:
    // mean 0.25, max 0.4, so mu = 0.05 gives 0.2575.
    SimilarityMatrix sim;
    sim.size = 4;
    sim.kappa = 0.1;
    sim.row_normalized = Matrix(4, 4);
    double vals[4][4] = {{0.0, 0.1, 0.2, 0.3},
                         {0.4, 0.0, 0.1, 0.2},
                         {0.3, 0.4, 0.0, 0.1},
                         {0.2, 0.3, 0.4, 0.0}};
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) sim.row_normalized.at(i, j) = vals[i][j];
    CHECK(adaptive_threshold(sim, 0.05, 2) == doctest::Approx(0.2575).epsilon(1e-12));
}

TEST_CASE("pseudo_positive_sets extremes and fixture") {
    SimilarityMatrix sim = fixture_similarity();

    // Threshold above everything: partner only.
    PseudoPositiveSets high = pseudo_positive_sets(sim, 10.0, 2);
    for (std::size_t i = 0; i < 4; ++i) {
        REQUIRE(high.members[i].size() == 1);
        CHECK(high.members[i][0] == partner_of(i));
    }

    // Threshold -inf: everything except self.
    PseudoPositiveSets low =
        pseudo_positive_sets(sim, -std::numeric_limits<double>::infinity(), 2);
    for (std::size_t i = 0; i < 4; ++i) CHECK(low.members[i].size() == 3);

    // Per-entry comparison oracle at an interior threshold.
    double thr = 0.25;
    PseudoPositiveSets mid = pseudo_positive_sets(sim, thr, 2);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            if (i == j) continue;
            bool expected = sim.row_normalized.at(i, j) > thr || j == partner_of(i);
            bool got = std::find(mid.members[i].begin(), mid.members[i].end(), j) !=
                       mid.members[i].end();
            CHECK(got == expected);
        }
}

TEST_CASE("raising the threshold never adds members") {
    RngState rng(29);
    Matrix z = random_unit_rows(10, 4, rng);
    SimilarityMatrix sim = pairwise_sne(z, 0.1);
    double lo = adaptive_threshold(sim, 0.1, 5);
    double hi = adaptive_threshold(sim, 0.6, 5);
    PseudoPositiveSets a = pseudo_positive_sets(sim, lo, 5);
    PseudoPositiveSets b = pseudo_positive_sets(sim, hi, 5);
    for (std::size_t i = 0; i < a.members.size(); ++i) {
        CHECK(b.members[i].size() <= a.members[i].size());
        for (std::size_t j : b.members[i]) {
            bool in_lo =
                std::find(a.members[i].begin(), a.members[i].end(), j) != a.members[i].end();
            CHECK(in_lo);
        }
    }
}

TEST_CASE("membership is invariant under rigid rotation") {
    RngState rng(31);
    Matrix z = random_unit_rows(8, 2, rng);
    // 2-D rotation by a fixed angle.
    double c = std::cos(0.7), s = std::sin(0.7);
    Matrix zr(8, 2);
    for (std::size_t i = 0; i < 8; ++i) {
        zr.at(i, 0) = c * z.at(i, 0) - s * z.at(i, 1);
        zr.at(i, 1) = s * z.at(i, 0) + c * z.at(i, 1);
    }
    SimilarityMatrix sim0 = pairwise_sne(z, 0.1);
    SimilarityMatrix sim1 = pairwise_sne(zr, 0.1);
    double thr0 = adaptive_threshold(sim0, 0.05, 4);
    double thr1 = adaptive_threshold(sim1, 0.05, 4);
    PseudoPositiveSets a = pseudo_positive_sets(sim0, thr0, 4);
    PseudoPositiveSets b = pseudo_positive_sets(sim1, thr1, 4);
    for (std::size_t i = 0; i < a.members.size(); ++i) CHECK(a.members[i] == b.members[i]);
}

TEST_CASE("per-row thresholds are accepted") {
    RngState rng(37);
    Matrix z = random_unit_rows(6, 3, rng);
    SimilarityMatrix sim = pairwise_sne(z, 0.1);
    auto thresholds = adaptive_threshold_per_row(sim, 0.05, 3);
    REQUIRE(thresholds.size() == 6);
    PseudoPositiveSets sets = pseudo_positive_sets(sim, thresholds, 3);
    for (std::size_t i = 0; i < sets.members.size(); ++i) {
        bool has_partner = std::find(sets.members[i].begin(), sets.members[i].end(),
                                     partner_of(i)) != sets.members[i].end();
        CHECK(has_partner);
    }
}
