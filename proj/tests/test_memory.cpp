#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include "doctest.h"
#include "scale/encoder.hpp"
#include "scale/memory.hpp"

using namespace scale;

namespace {

Matrix column_vector(std::initializer_list<double> values) {
    Matrix m(values.size(), 1);
    std::size_t i = 0;
    for (double v : values) m.at(i++, 0) = v;
    return m;
}

// Tight cluster of `count` points around (cx, cy).
void add_cluster(std::vector<std::array<double, 2>>& pts, double cx, double cy,
                 std::size_t count, RngState& rng, double spread = 0.05) {
    for (std::size_t i = 0; i < count; ++i)
        pts.push_back({cx + spread * rng.next_normal(), cy + spread * rng.next_normal()});
}

Matrix to_matrix(const std::vector<std::array<double, 2>>& pts) {
    Matrix m(pts.size(), 2);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        m.at(i, 0) = pts[i][0];
        m.at(i, 1) = pts[i][1];
    }
    return m;
}

}  // namespace

TEST_CASE("sample_batch basics and uniformity") {
    MemoryBuffer buf;
    buf.capacity = 100;
    RngState rng(1);

    // Empty buffer gives an empty batch.
    Matrix empty = sample_batch(buf, 10, rng);
    CHECK(empty.rows == 0);

    buf.items = Matrix(100, 2);
    for (std::size_t i = 0; i < 100; ++i) buf.items.at(i, 0) = static_cast<double>(i);

    // m >= size gives a permutation of everything.
    Matrix all = sample_batch(buf, 200, rng);
    CHECK(all.rows == 100);
    std::set<double> seen;
    for (std::size_t i = 0; i < 100; ++i) seen.insert(all.at(i, 0));
    CHECK(seen.size() == 100);

    // Monte Carlo uniformity: selection count within 4 sigma of the mean.
    std::vector<int> hits(100, 0);
    const int draws = 10000;
    for (int d = 0; d < draws; ++d) {
        Matrix s = sample_batch(buf, 10, rng);
        for (std::size_t i = 0; i < s.rows; ++i) hits[static_cast<std::size_t>(s.at(i, 0))]++;
    }
    double expect = draws * 0.1;
    double sigma = std::sqrt(draws * 0.1 * 0.9);
    for (int h : hits) CHECK(std::abs(h - expect) < 4.0 * sigma);
}

TEST_CASE("psa_select under capacity returns everything") {
    Matrix pts = column_vector({0.3, 0.7, 0.1});
    auto idx = psa_select(pts, 5);
    CHECK(idx == std::vector<std::size_t>({0, 1, 2}));
}

TEST_CASE("psa_select five-point line fixture") {
    // Split at 0.5 -> {0.0, 0.1, 0.4} center 0.2 picks 0.1;
    // {0.9, 1.0} center 0.95 ties, lowest index wins -> 0.9.
    Matrix pts = column_vector({0.0, 0.1, 0.4, 0.9, 1.0});
    auto idx = psa_select(pts, 2);
    CHECK(idx == std::vector<std::size_t>({1, 3}));
}

TEST_CASE("psa_select count equals capacity") {
    RngState rng(2);
    Matrix pts(8, 3);
    for (double& v : pts.data) v = rng.next_double();
    auto idx = psa_select(pts, 8);
    CHECK(idx.size() == 8);
}

TEST_CASE("psa_select covers both clusters of an imbalanced mix") {
    RngState rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<std::array<double, 2>> pts;
        add_cluster(pts, 0.0, 0.0, 90, rng);
        add_cluster(pts, 5.0, 5.0, 10, rng);
        auto idx = psa_select(to_matrix(pts), 10);
        CHECK(idx.size() == 10);
        bool has_major = false, has_minor = false;
        for (std::size_t i : idx) (i < 90 ? has_major : has_minor) = true;
        CHECK(has_major);
        CHECK(has_minor);
    }
}

TEST_CASE("psa_select point set is permutation invariant") {
    RngState rng(11);
    Matrix pts(12, 2);
    for (double& v : pts.data) v = rng.next_double() * 10.0;
    auto base = psa_select(pts, 4);

    // Reverse the row order and map indices back.
    Matrix rev(12, 2);
    for (std::size_t i = 0; i < 12; ++i) {
        rev.at(i, 0) = pts.at(11 - i, 0);
        rev.at(i, 1) = pts.at(11 - i, 1);
    }
    auto perm = psa_select(rev, 4);
    std::set<std::pair<double, double>> a, b;
    for (std::size_t i : base) a.insert({pts.at(i, 0), pts.at(i, 1)});
    for (std::size_t i : perm) b.insert({rev.at(i, 0), rev.at(i, 1)});
    CHECK(a == b);
}

TEST_CASE("psa_select duplicate points pad deterministically") {
    // Three distinct locations, many duplicates; M exceeds the number of
    // distinct locations so padding kicks in.
    Matrix pts = column_vector({1.0, 1.0, 1.0, 2.0, 2.0, 5.0, 5.0, 5.0});
    auto idx = psa_select(pts, 5);
    CHECK(idx.size() == 5);
    std::set<std::size_t> uniq(idx.begin(), idx.end());
    CHECK(uniq.size() == 5);  // indices stay distinct even if points repeat
}

TEST_CASE("minred_select angle fixture") {
    // Angles 0, 10, 180 degrees; the 0/10 pair are mutual nearest; tie on
    // the removal score discards the lower index (the 0-degree vector).
    Matrix pts(3, 2);
    auto put = [&](std::size_t i, double deg) {
        pts.at(i, 0) = std::cos(deg * std::acos(-1.0) / 180.0);
        pts.at(i, 1) = std::sin(deg * std::acos(-1.0) / 180.0);
    };
    put(0, 0.0);
    put(1, 10.0);
    put(2, 180.0);
    auto idx = minred_select(pts, 2);
    CHECK(idx == std::vector<std::size_t>({1, 2}));
}

TEST_CASE("minred_select identical vectors keep the highest indices") {
    Matrix pts(5, 2);
    for (std::size_t i = 0; i < 5; ++i) pts.at(i, 0) = 1.0;
    auto idx = minred_select(pts, 2);
    CHECK(idx == std::vector<std::size_t>({3, 4}));
}

TEST_CASE("minred_select identity under capacity") {
    Matrix pts(3, 2, 1.0);
    auto idx = minred_select(pts, 3);
    CHECK(idx == std::vector<std::size_t>({0, 1, 2}));
}

TEST_CASE("random_select basics") {
    RngState rng(3);
    auto all = random_select(4, 10, rng);
    CHECK(all == std::vector<std::size_t>({0, 1, 2, 3}));

    RngState a(9), b(9);
    CHECK(random_select(100, 10, a) == random_select(100, 10, b));

    // Uniformity.
    std::vector<int> hits(50, 0);
    const int draws = 10000;
    RngState rng2(5);
    for (int d = 0; d < draws; ++d)
        for (std::size_t i : random_select(50, 5, rng2)) hits[i]++;
    double expect = draws * 0.1;
    double sigma = std::sqrt(draws * 0.1 * 0.9);
    for (int h : hits) CHECK(std::abs(h - expect) < 4.0 * sigma);
}

TEST_CASE("kmeans_select with one cluster equals random selection") {
    RngState rng(41);
    Matrix feats(30, 2);
    for (double& v : feats.data) v = rng.next_double();
    RngState a(7), b(7);
    CHECK(kmeans_select(feats, 12, 1, a) == random_select(30, 12, b));
}

TEST_CASE("kmeans_select quotas") {
    RngState rng(13);
    // Two separated clusters, 80/20.
    std::vector<std::array<double, 2>> pts;
    add_cluster(pts, 0.0, 0.0, 80, rng);
    add_cluster(pts, 10.0, 10.0, 20, rng);
    auto idx = kmeans_select(to_matrix(pts), 10, 2, rng);
    CHECK(idx.size() == 10);
    std::size_t major = 0, minor = 0;
    for (std::size_t i : idx) (i < 80 ? major : minor)++;
    CHECK(major == 8);
    CHECK(minor == 2);

    // Quota sum always equals M across random sizes.
    RngState rng2(17);
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t n = 20 + rng2.next_below(60);
        Matrix feats(n, 2);
        for (double& v : feats.data) v = rng2.next_double() * 4.0;
        std::size_t M = 5 + rng2.next_below(n - 5);
        std::size_t k = 1 + rng2.next_below(4);
        auto got = kmeans_select(feats, M, k, rng2);
        CHECK(got.size() == M);
    }

    Matrix small(3, 2);
    RngState rng3(1);
    CHECK_THROWS_AS(kmeans_select(small, 2, 5, rng3), std::invalid_argument);
}

TEST_CASE("memory_update keeps everything under capacity") {
    RngState rng(19), init_rng(20);
    EncoderParams enc = encoder_init({2, 4, 3}, init_rng);
    MemoryBuffer buf;
    buf.capacity = 10;
    Matrix incoming(4, 2);
    for (double& v : incoming.data) v = rng.next_double();
    memory_update(buf, incoming, {0, 0, 1, 1}, enc, MemoryPolicy::psa, rng);
    CHECK(buf.size() == 4);
    CHECK(buf.hidden_labels == std::vector<int>({0, 0, 1, 1}));
}

TEST_CASE("memory_update capacity never exceeded for any policy") {
    RngState init_rng(23);
    EncoderParams enc = encoder_init({2, 4, 3}, init_rng);
    for (MemoryPolicy policy : {MemoryPolicy::psa, MemoryPolicy::minred, MemoryPolicy::random,
                                MemoryPolicy::kmeans, MemoryPolicy::oracle}) {
        RngState rng(31);
        MemoryBuffer buf;
        buf.capacity = 8;
        for (int round = 0; round < 6; ++round) {
            Matrix incoming(5, 2);
            for (double& v : incoming.data) v = rng.next_double();
            std::vector<int> labels(5, round % 3);
            memory_update(buf, incoming, labels, enc, policy, rng, 2);
            CHECK(buf.size() <= buf.capacity);
        }
        CHECK(buf.size() == 8);
    }
}

TEST_CASE("memory_update oracle policy balances classes") {
    RngState init_rng(29), rng(37);
    EncoderParams enc = encoder_init({2, 4, 3}, init_rng);
    MemoryBuffer buf;
    buf.capacity = 9;
    // 20 of class 0, 20 of class 1, 20 of class 2.
    Matrix incoming(60, 2);
    std::vector<int> labels(60);
    for (std::size_t i = 0; i < 60; ++i) {
        incoming.at(i, 0) = rng.next_double();
        incoming.at(i, 1) = rng.next_double();
        labels[i] = static_cast<int>(i / 20);
    }
    memory_update(buf, incoming, labels, enc, MemoryPolicy::oracle, rng);
    std::vector<int> counts(3, 0);
    for (int y : buf.hidden_labels) counts[static_cast<std::size_t>(y)]++;
    CHECK(counts[0] == 3);
    CHECK(counts[1] == 3);
    CHECK(counts[2] == 3);
}

TEST_CASE("psa retains old classes through a sequential toy stream") {
    // Two phases: class 0 floods in first, then class 1. With PSA the
    // buffer should still hold class-0 samples after phase two.
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
        RngState rng(seed), init_rng(seed + 100);
        EncoderParams enc = encoder_init({2, 8, 4}, init_rng);
        MemoryBuffer buf;
        buf.capacity = 16;
        for (int round = 0; round < 8; ++round) {
            Matrix incoming(8, 2);
            std::vector<int> labels(8, 0);
            for (std::size_t i = 0; i < 8; ++i) {
                incoming.at(i, 0) = rng.next_normal() * 0.1;
                incoming.at(i, 1) = rng.next_normal() * 0.1;
            }
            memory_update(buf, incoming, labels, enc, MemoryPolicy::psa, rng);
        }
        for (int round = 0; round < 8; ++round) {
            Matrix incoming(8, 2);
            std::vector<int> labels(8, 1);
            for (std::size_t i = 0; i < 8; ++i) {
                incoming.at(i, 0) = 4.0 + rng.next_normal() * 0.1;
                incoming.at(i, 1) = 4.0 + rng.next_normal() * 0.1;
            }
            memory_update(buf, incoming, labels, enc, MemoryPolicy::psa, rng);
        }
        int class0 = 0;
        for (int y : buf.hidden_labels)
            if (y == 0) ++class0;
        CHECK(class0 >= 1);
    }
}

TEST_CASE("psa spreads at least as evenly as random on the 90/10 fixture") {
    std::vector<double> psa_share, random_share;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RngState rng(seed);
        std::vector<std::array<double, 2>> pts;
        add_cluster(pts, 0.0, 0.0, 90, rng);
        add_cluster(pts, 5.0, 5.0, 10, rng);
        Matrix feats = to_matrix(pts);

        auto psa = psa_select(feats, 10);
        RngState sel_rng(seed + 1000);
        auto rnd = random_select(100, 10, sel_rng);

        auto minority = [&](const std::vector<std::size_t>& idx) {
            std::size_t count = 0;
            for (std::size_t i : idx)
                if (i >= 90) ++count;
            return static_cast<double>(count) / static_cast<double>(idx.size());
        };
        psa_share.push_back(minority(psa));
        random_share.push_back(minority(rnd));
    }
    std::sort(psa_share.begin(), psa_share.end());
    std::sort(random_share.begin(), random_share.end());
    double psa_median = (psa_share[9] + psa_share[10]) / 2.0;
    double random_median = (random_share[9] + random_share[10]) / 2.0;
    CHECK(psa_median >= random_median);
}
