#include "oracles.hpp"

#include "tailbreak/error.hpp"
#include "tailbreak/structure.hpp"

#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <random>
#include <sstream>

using namespace tailbreak;

namespace {

std::vector<std::string> labels(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(std::string(1, static_cast<char>('A' + i)));
    return out;
}

LabeledMatrix random_distance(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(0.01, 1.0);
    LabeledMatrix m(labels(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            m(i, j) = m(j, i) = u(rng);
        }
    }
    return m;
}

Panel single_date_panel(const std::vector<double>& column) {
    const Date d{std::chrono::year{2020}, std::chrono::month{1}, std::chrono::day{1}};
    return Panel(labels(column.size()), {d}, column);
}

}  // namespace

TEST(Frobenius, VectorHandValues) {
    EXPECT_EQ(frobenius_vector_series(single_date_panel({0, 0, 0})).values[0], 0.0);
    EXPECT_EQ(frobenius_vector_series(single_date_panel({3, 4})).values[0], 5.0);
    EXPECT_DOUBLE_EQ(frobenius_vector_series(single_date_panel({1, 1, 1, 1, 1})).values[0], std::sqrt(5.0));
}

TEST(Frobenius, MatrixHandValues) {
    EXPECT_EQ(frobenius_matrix(LabeledMatrix(labels(2))), 0.0);
    EXPECT_EQ(frobenius_matrix(LabeledMatrix(labels(2), {1, 1, 1, 1})), 2.0);
    EXPECT_DOUBLE_EQ(frobenius_matrix(LabeledMatrix(labels(3), {1, 0, 0, 0, 1, 0, 0, 0, 1})), std::sqrt(3.0));
}

TEST(Affinity, HandCase) {
    const auto a = affinity(LabeledMatrix(labels(2), {0, 2, 2, 0}));
    EXPECT_EQ(a(0, 0), 1.0);
    EXPECT_EQ(a(0, 1), 0.0);
    EXPECT_EQ(a(1, 0), 0.0);
    EXPECT_EQ(a(1, 1), 1.0);
}

TEST(Affinity, DegenerateMatrix) {
    try {
        affinity(LabeledMatrix(labels(3)));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::degenerate);
    }
}

TEST(Affinity, PropertiesOnRandomInput) {
    std::mt19937_64 rng(23);
    for (int rep = 0; rep < 200; ++rep) {
        const auto d = random_distance(rng, 2 + rng() % 8);
        const auto a = affinity(d);
        for (std::size_t i = 0; i < a.size(); ++i) {
            EXPECT_EQ(a(i, i), 1.0);
            for (std::size_t j = 0; j < a.size(); ++j) {
                EXPECT_GE(a(i, j), 0.0);
                EXPECT_LE(a(i, j), 1.0);
                EXPECT_EQ(a(i, j), a(j, i));
            }
        }
    }
}

TEST(Inconsistency, HandDifferenceAndZero) {
    const LabeledMatrix a(labels(2), {1, 0.25, 0.25, 1});
    const LabeledMatrix b(labels(2), {1, 0.75, 0.75, 1});
    const auto inc = behaviour_inconsistency(a, b);
    EXPECT_EQ(inc.matrix(0, 1), -0.5);
    EXPECT_EQ(inc.matrix(0, 0), 0.0);
    EXPECT_EQ(inc.kind, InconsistencyKind::behaviour);
    const auto ta = time_inconsistency(a, a);
    const auto bb = behaviour_inconsistency(b, b);
    for (double v : ta.matrix.entries()) EXPECT_EQ(v, 0.0);
    for (double v : bb.matrix.entries()) EXPECT_EQ(v, 0.0);
}

TEST(Inconsistency, LabelMismatch) {
    const LabeledMatrix a({"A", "B"}, {1, 0, 0, 1});
    const LabeledMatrix b({"B", "A"}, {1, 0, 0, 1});
    EXPECT_THROW(time_inconsistency(a, b), Error);
}

TEST(Inconsistency, EntriesBounded) {
    std::mt19937_64 rng(29);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = 2 + rng() % 7;
        const auto inc = time_inconsistency(affinity(random_distance(rng, n)), affinity(random_distance(rng, n)));
        for (double v : inc.matrix.entries()) {
            EXPECT_GE(v, -1.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(Anomaly, ZeroAndSinglePair) {
    for (const auto& s : anomaly_scores(LabeledMatrix(labels(3)))) EXPECT_EQ(s.score, 0.0);
    LabeledMatrix m(labels(4));
    m(1, 3) = m(3, 1) = -0.4;
    const auto r = anomaly_scores(m);
    EXPECT_EQ(r[0].label, "B");
    EXPECT_DOUBLE_EQ(r[0].score, 0.4);
    EXPECT_EQ(r[1].label, "D");
    EXPECT_DOUBLE_EQ(r[1].score, 0.4);
    EXPECT_EQ(r[2].score, 0.0);
    EXPECT_EQ(r[2].label, "A");
    EXPECT_EQ(top_k(r, 3).size(), 3u);
    EXPECT_EQ(top_k(r, 10).size(), 4u);
}

TEST(Anomaly, NegationInvariant) {
    std::mt19937_64 rng(31);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t n = 2 + rng() % 7;
        const auto inc = time_inconsistency(affinity(random_distance(rng, n)), affinity(random_distance(rng, n)));
        LabeledMatrix neg(inc.matrix.labels());
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) neg(i, j) = -inc.matrix(i, j);
        }
        const auto a = anomaly_scores(inc.matrix);
        const auto b = anomaly_scores(neg);
        for (std::size_t i = 0; i < n; ++i) {
            EXPECT_EQ(a[i].label, b[i].label);
            EXPECT_EQ(a[i].score, b[i].score);
        }
    }
}

TEST(Anomaly, RankingCsv) {
    std::ostringstream out;
    write_ranking(out, {{"B", 0.5}, {"A", 0.25}});
    EXPECT_EQ(out.str(), "label,score\nB,0.5\nA,0.25\n");
}

TEST(Cluster, TwoLabels) {
    const auto d = hcluster(LabeledMatrix(labels(2), {0, 0.7, 0.7, 0}));
    ASSERT_EQ(d.merges.size(), 1u);
    EXPECT_EQ(d.merges[0].height, 0.7);
    EXPECT_EQ(d.merges[0].size, 2);
}

TEST(Cluster, ThreeLabelHandCase) {
    const auto d = hcluster(LabeledMatrix(labels(3), {0, 1, 5, 1, 0, 5, 5, 5, 0}), Linkage::average);
    ASSERT_EQ(d.merges.size(), 2u);
    EXPECT_EQ(d.merges[0].a, 0);
    EXPECT_EQ(d.merges[0].b, 1);
    EXPECT_EQ(d.merges[0].height, 1.0);
    EXPECT_EQ(d.merges[1].a, 2);
    EXPECT_EQ(d.merges[1].b, 3);
    EXPECT_EQ(d.merges[1].height, 5.0);
    EXPECT_EQ(d.merges[1].size, 3);
}

TEST(Cluster, MatchesBruteForceOracle) {
    std::mt19937_64 rng(37);
    for (int linkage = 0; linkage < 3; ++linkage) {
        for (int rep = 0; rep < 100; ++rep) {
            const std::size_t n = 2 + rng() % 7;
            const auto m = random_distance(rng, n);
            const std::vector<double> raw(m.entries().begin(), m.entries().end());
            const auto expect = oracle::brute_linkage(raw, n, linkage);
            const auto got = hcluster(m, static_cast<Linkage>(linkage));
            ASSERT_EQ(got.merges.size(), expect.size());
            for (std::size_t s = 0; s < expect.size(); ++s) {
                EXPECT_EQ(got.merges[s].a, expect[s].a);
                EXPECT_EQ(got.merges[s].b, expect[s].b);
                EXPECT_NEAR(got.merges[s].height, expect[s].height, 1e-12);
                EXPECT_EQ(got.merges[s].size, expect[s].size);
            }
        }
    }
}

TEST(Cluster, TiesTakeSmallestIds) {
    const auto d = hcluster(LabeledMatrix(labels(4), {0, 1, 1, 1, 1, 0, 1, 1, 1, 1, 0, 1, 1, 1, 1, 0}));
    EXPECT_EQ(d.merges[0].a, 0);
    EXPECT_EQ(d.merges[0].b, 1);
    EXPECT_EQ(d.merges[1].a, 2);
    EXPECT_EQ(d.merges[1].b, 3);
    EXPECT_EQ(d.merges[2].a, 4);
    EXPECT_EQ(d.merges[2].b, 5);
}

TEST(Cluster, OutlierSeparatesFirst) {
    // E is far from a tight group
    LabeledMatrix m(labels(5));
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = i + 1; j < 5; ++j) {
            m(i, j) = m(j, i) = (i == 4 || j == 4) ? 0.9 : 0.1 + 0.01 * static_cast<double>(i + j);
        }
    }
    const auto d = hcluster(m);
    const auto [small, big] = root_split(d);
    EXPECT_EQ(small, (std::vector<int>{4}));
    EXPECT_EQ(big.size(), 4u);
    const auto h = separation_heights(d);
    EXPECT_EQ(std::max_element(h.begin(), h.end()) - h.begin(), 4);
    EXPECT_EQ(h[4], d.merges.back().height);
}

TEST(Cluster, AffinityAndInconsistencyConversions) {
    const LabeledMatrix a(labels(3), {1, 0.9, 0.2, 0.9, 1, 0.3, 0.2, 0.3, 1});
    const auto da = hcluster_affinity(a);
    EXPECT_NEAR(da.merges[0].height, 0.1, 1e-15);
    EXPECT_EQ(da.merges[0].a, 0);
    EXPECT_EQ(da.merges[0].b, 1);
    const LabeledMatrix inc(labels(3), {0, -0.5, 0.5, -0.5, 0, 0.25, 0.5, 0.25, 0});
    const auto di = hcluster_inconsistency({inc, InconsistencyKind::time, "pre", "post"});
    // max is 0.5, so A-C merge first at height 0
    EXPECT_EQ(di.merges[0].a, 0);
    EXPECT_EQ(di.merges[0].b, 2);
    EXPECT_EQ(di.merges[0].height, 0.0);
}

TEST(Cluster, NewickAndJson) {
    const auto d = hcluster(LabeledMatrix({"A", "B c", "C"}, {0, 1, 5, 1, 0, 5, 5, 5, 0}));
    EXPECT_EQ(to_newick(d), "(C:5,(A:1,'B c':1):4);");
    const auto doc = nlohmann::json::parse(to_merge_json(d));
    EXPECT_EQ(doc["linkage"], "average");
    ASSERT_EQ(doc["merges"].size(), 2u);
    EXPECT_EQ(doc["merges"][1]["height"], 5.0);
    EXPECT_EQ(doc["labels"][1], "B c");
}

TEST(Cluster, LinkageNames) {
    EXPECT_EQ(parse_linkage("complete"), Linkage::complete);
    EXPECT_EQ(to_string(Linkage::single), "single");
    EXPECT_THROW(parse_linkage("ward"), Error);
}
