#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <set>

#include "attnkit/random.hpp"
#include "attnkit/sequences.hpp"
#include "oracles.hpp"

using namespace attnkit;
using namespace attnkit::sequences;
using attnkit::testing::om_oracle;

namespace {

ProbeSequence seq(const std::string& letters, const std::string& id = "p") {
    ProbeSequence s;
    s.person_id = id;
    for (char c : letters) s.states.push_back(static_cast<std::size_t>(c - 'A'));
    return s;
}

ProbeSequence random_seq(Rng& rng, std::size_t max_len, std::size_t symbols) {
    ProbeSequence s;
    const std::size_t len = 1 + uniform_index(rng, max_len);
    for (std::size_t i = 0; i < len; ++i) s.states.push_back(uniform_index(rng, symbols));
    return s;
}

struct Point {
    double x, y;
};

DistanceMatrix euclidean(const std::vector<Point>& p) {
    DistanceMatrix d;
    d.n = p.size();
    d.values.assign(d.n * d.n, 0.0);
    for (std::size_t i = 0; i < d.n; ++i)
        for (std::size_t j = 0; j < d.n; ++j) d(i, j) = std::hypot(p[i].x - p[j].x, p[i].y - p[j].y);
    return d;
}

// Ward from scratch: merge the pair with the smallest 2 |A||B| / (|A|+|B|) |cA - cB|^2.
std::vector<double> ward_oracle_heights(const std::vector<Point>& p) {
    struct C {
        double x, y;
        double n;
    };
    std::vector<C> cl;
    for (const auto& q : p) cl.push_back({q.x, q.y, 1});
    std::vector<double> heights;
    while (cl.size() > 1) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < cl.size(); ++i)
            for (std::size_t j = i + 1; j < cl.size(); ++j) {
                const double dx = cl[i].x - cl[j].x, dy = cl[i].y - cl[j].y;
                const double v = 2 * cl[i].n * cl[j].n / (cl[i].n + cl[j].n) * (dx * dx + dy * dy);
                if (v < best) {
                    best = v;
                    bi = i;
                    bj = j;
                }
            }
        const double n = cl[bi].n + cl[bj].n;
        cl[bi] = {(cl[bi].x * cl[bi].n + cl[bj].x * cl[bj].n) / n, (cl[bi].y * cl[bi].n + cl[bj].y * cl[bj].n) / n, n};
        cl.erase(cl.begin() + static_cast<std::ptrdiff_t>(bj));
        heights.push_back(std::sqrt(best));
    }
    return heights;
}

std::vector<int> random_labels(Rng& rng, std::size_t n, std::size_t k) {
    std::vector<int> l(n);
    for (std::size_t i = 0; i < n; ++i) l[i] = static_cast<int>(i < k ? i : uniform_index(rng, k));
    return l;
}

}  // namespace

TEST(AlphabetTest, EncodeAndErrors) {
    Alphabet a({"OnTask", "MW", "Other"});
    EXPECT_EQ(a.encode("MW"), 1u);
    EXPECT_THROW(a.encode("Sleep"), Error);
    EXPECT_THROW(Alphabet({"A", "A"}), Error);
    EXPECT_THROW(Alphabet({}), Error);
    EXPECT_THROW(make_sequence(a, "p", {}), Error);
    EXPECT_EQ(make_sequence(a, "p", {"Other", "OnTask"}).states, (std::vector<std::size_t>{2, 0}));
}

TEST(OmDistance, Examples) {
    const OmCosts unit;
    EXPECT_EQ(om_distance(seq("ABCA"), seq("ABCA"), unit, 4), 0.0);
    EXPECT_EQ(om_distance(seq("AAB"), seq("AAC"), unit, 4), 1.0);
    EXPECT_EQ(om_distance(seq("AB"), seq("AABB"), unit, 4), 2.0);
    EXPECT_EQ(om_oracle(seq("AB"), seq("AABB"), unit), 2.0);
    EXPECT_THROW(om_distance(seq("AE"), seq("A"), unit, 4), Error);
}

TEST(OmDistance, MatchesPairingOracle) {
    Rng rng(31);
    for (int t = 0; t < 200; ++t) {
        const auto a = random_seq(rng, 10, 4), b = random_seq(rng, 10, 4);
        const OmCosts costs = t % 2 ? OmCosts{1.0, 1.0} : OmCosts{1.0, 1.5 + static_cast<double>(t % 3)};
        EXPECT_EQ(om_distance(a, b, costs, 4), om_oracle(a, b, costs)) << "trial " << t;
    }
}

TEST(OmDistance, MetricAxiomsAndBound) {
    Rng rng(37);
    const OmCosts unit;
    for (int t = 0; t < 1000; ++t) {
        const auto a = random_seq(rng, 8, 4), b = random_seq(rng, 8, 4), c = random_seq(rng, 8, 4);
        const double ab = om_distance(a, b, unit, 4), ba = om_distance(b, a, unit, 4);
        EXPECT_EQ(ab, ba);
        EXPECT_EQ(ab == 0.0, a.states == b.states);
        EXPECT_LE(om_distance(a, c, unit, 4), ab + om_distance(b, c, unit, 4));
        EXPECT_LE(ab, static_cast<double>(std::max(a.states.size(), b.states.size())));
    }
}

TEST(DistanceMatrixTest, IdenticalPairAndParallelAgreement) {
    const auto d = distance_matrix({seq("AB"), seq("AB")}, {}, 4);
    EXPECT_EQ(d.values, (std::vector<double>{0, 0, 0, 0}));
    EXPECT_THROW(distance_matrix({seq("A")}, {}, 4), Error);
    Rng rng(41);
    std::vector<ProbeSequence> seqs;
    for (int i = 0; i < 60; ++i) seqs.push_back(random_seq(rng, 15, 5));
    const auto p = distance_matrix(seqs, {1.0, 2.0}, 5);
    const auto s = distance_matrix_serial(seqs, {1.0, 2.0}, 5);
    EXPECT_EQ(p.values, s.values);
    for (std::size_t i = 0; i < p.n; ++i)
        for (std::size_t j = 0; j < p.n; ++j) EXPECT_EQ(p(i, j), p(j, i));
}

TEST(Ward, MatchesCentroidOracle) {
    Rng rng(43);
    for (int t = 0; t < 30; ++t) {
        std::vector<Point> pts;
        for (int i = 0; i < 12; ++i) pts.push_back({100 * uniform01(rng), 100 * uniform01(rng)});
        const auto dg = ward_cluster(euclidean(pts), WardInput::Squared);
        const auto want = ward_oracle_heights(pts);
        ASSERT_EQ(dg.merges.size(), pts.size() - 1);
        for (std::size_t s = 0; s < want.size(); ++s) EXPECT_NEAR(dg.merges[s].height, want[s], 1e-9);
        for (std::size_t s = 1; s < dg.merges.size(); ++s) EXPECT_GE(dg.merges[s].height, dg.merges[s - 1].height - 1e-12);
        EXPECT_EQ(dg.merges.back().size, pts.size());
    }
}

TEST(Cut, BoundaryCasesAndDeterminism) {
    Rng rng(47);
    std::vector<ProbeSequence> seqs;
    for (int i = 0; i < 10; ++i) seqs.push_back(random_seq(rng, 10, 3));
    const auto d = distance_matrix(seqs, {}, 3);
    const auto dg = ward_cluster(d);
    auto all = cut(dg, 10);
    std::sort(all.begin(), all.end());
    EXPECT_EQ(all, (std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10}));
    EXPECT_EQ(cut(dg, 1), std::vector<int>(10, 1));
    EXPECT_THROW(cut(dg, 11), Error);
    EXPECT_THROW(cut(dg, 0), Error);
    EXPECT_EQ(cut(dg, 3), cut(ward_cluster(d), 3));
    // Labels are numbered by descending cluster size.
    const auto l = cut(dg, 4);
    std::vector<std::size_t> sizes(4, 0);
    for (int v : l) ++sizes[static_cast<std::size_t>(v - 1)];
    EXPECT_TRUE(std::is_sorted(sizes.rbegin(), sizes.rend()));
}

TEST(Diagnostics, PlantedBlobs) {
    std::vector<Point> pts;
    Rng rng(53);
    for (int i = 0; i < 10; ++i) pts.push_back({standard_normal(rng), standard_normal(rng)});
    for (int i = 0; i < 10; ++i) pts.push_back({20 + standard_normal(rng), standard_normal(rng)});
    std::vector<int> labels(20, 1);
    std::fill(labels.begin() + 10, labels.end(), 2);
    const auto diag = diagnostics(euclidean(pts), labels);
    EXPECT_GT(diag.average_silhouette_width, 0.5);
    EXPECT_NEAR(diag.huberts_c, 0.0, 1e-12);
    EXPECT_GT(diag.point_biserial, 0.9);
    EXPECT_EQ(cut(ward_cluster(euclidean(pts)), 2), labels);
}

TEST(Diagnostics, EqualDissimilaritiesAndErrors) {
    DistanceMatrix d;
    d.n = 6;
    d.values.assign(36, 1.0);
    for (std::size_t i = 0; i < 6; ++i) d(i, i) = 0.0;
    const auto diag = diagnostics(d, {1, 1, 1, 2, 2, 2});
    EXPECT_EQ(diag.point_biserial, 0.0);
    EXPECT_EQ(diag.average_silhouette_width, 0.0);
    EXPECT_THROW(diagnostics(d, {1, 1, 1, 1, 1, 1}), Error);
    EXPECT_THROW(diagnostics(d, {1, 2}), Error);
}

TEST(Diagnostics, RangesOnRandomClusterings) {
    Rng rng(59);
    for (int t = 0; t < 100; ++t) {
        std::vector<ProbeSequence> seqs;
        const std::size_t n = 5 + uniform_index(rng, 20);
        for (std::size_t i = 0; i < n; ++i) seqs.push_back(random_seq(rng, 12, 4));
        const auto d = distance_matrix(seqs, {}, 4);
        const auto diag = diagnostics(d, random_labels(rng, n, 2 + uniform_index(rng, std::min<std::size_t>(4, n - 1))));
        EXPECT_GE(diag.average_silhouette_width, -1.0);
        EXPECT_LE(diag.average_silhouette_width, 1.0);
        EXPECT_GE(diag.huberts_c, 0.0);
        EXPECT_LE(diag.huberts_c, 1.0);
        EXPECT_GE(diag.point_biserial, -1.0);
        EXPECT_LE(diag.point_biserial, 1.0);
        for (const auto& r : diagnostics_range(d, ward_cluster(d), 6)) {
            EXPECT_GE(r.average_silhouette_width, -1.0);
            EXPECT_LE(r.average_silhouette_width, 1.0);
            EXPECT_GE(r.huberts_c, 0.0);
            EXPECT_LE(r.huberts_c, 1.0);
        }
    }
}
