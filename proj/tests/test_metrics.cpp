#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "htcit/metrics.hpp"
#include "oracles.hpp"

using namespace htcit;

namespace {

BinaryMatrix m(const oracle::Adj& a) { return BinaryMatrix::from_nested(a); }

}  // namespace

TEST(Shd, Examples) {
    const oracle::Adj chain{{0, 1, 0}, {0, 0, 1}, {0, 0, 0}};
    EXPECT_EQ(shd(m(chain), m(chain)), 0u);
    EXPECT_EQ(shd(m(oracle::empty(3)), m(chain)), 2u);
    EXPECT_EQ(shd(m({{0, 0}, {1, 0}}), m({{0, 1}, {0, 0}})), 1u);
    EXPECT_THROW(shd(BinaryMatrix(2), BinaryMatrix(3)), std::invalid_argument);
}

TEST(Shd, MatchesEditCountOnAllSmallDagPairs) {
    for (std::size_t d = 1; d <= 4; ++d) {
        const auto dags = oracle::all_dags(d);
        std::vector<BinaryMatrix> ms;
        for (const auto& a : dags) ms.push_back(m(a));
        for (std::size_t x = 0; x < dags.size(); ++x)
            for (std::size_t y = 0; y < dags.size(); ++y)
                ASSERT_EQ(shd(ms[x], ms[y]), oracle::shd(dags[x], dags[y])) << "d=" << d;
    }
}

TEST(Shd, MetricAxiomsOnRandomTriples) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> dens(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t d = 1 + trial % 6;
        const auto a = m(oracle::random_dag(d, dens(rng), rng));
        const auto b = m(oracle::random_dag(d, dens(rng), rng));
        const auto c = m(oracle::random_dag(d, dens(rng), rng));
        ASSERT_EQ(shd(a, a), 0u);
        ASSERT_EQ(shd(a, b), shd(b, a));
        ASSERT_EQ(shd(a, b) == 0, a == b);
        ASSERT_LE(shd(a, c), shd(a, b) + shd(b, c));
    }
}

TEST(Sid, Examples) {
    const oracle::Adj edge{{0, 1}, {0, 0}};
    EXPECT_EQ(sid(m(edge), m(edge)), 0u);
    EXPECT_EQ(sid(m(oracle::empty(2)), m(edge)), 1u);
    // Reversed edge: both interventions are mis-estimated.
    EXPECT_EQ(sid(m({{0, 0}, {1, 0}}), m(edge)), 2u);
    EXPECT_THROW(sid(m({{0, 1}, {1, 0}}), m(edge)), std::invalid_argument);
    EXPECT_THROW(sid(BinaryMatrix(2), BinaryMatrix(3)), std::invalid_argument);
}

TEST(Sid, MatchesAdjustmentOracleOnAllSmallDagPairs) {
    for (std::size_t d = 1; d <= 4; ++d) {
        const auto dags = oracle::all_dags(d);
        std::vector<BinaryMatrix> ms;
        for (const auto& a : dags) ms.push_back(m(a));
        if (d == 4) {
            ASSERT_EQ(dags.size(), 543u);
        }
        for (std::size_t x = 0; x < dags.size(); ++x) {
            ASSERT_EQ(sid(ms[x], ms[x]), 0u);
            for (std::size_t y = 0; y < dags.size(); ++y)
                ASSERT_EQ(sid(ms[x], ms[y]), oracle::sid(dags[x], dags[y])) << "d=" << d << " est " << x << " truth " << y;
        }
    }
}

TEST(Sid, SupergraphOfTruthIsStillConsistent) {
    // Adding edges consistent with the causal order keeps every parent set a
    // valid adjustment set, so the SID stays 0.
    const oracle::Adj truth{{0, 1, 0}, {0, 0, 1}, {0, 0, 0}};
    const oracle::Adj full{{0, 1, 1}, {0, 0, 1}, {0, 0, 0}};
    EXPECT_EQ(sid(m(full), m(truth)), 0u);
    EXPECT_EQ(shd(m(full), m(truth)), 1u);
}

TEST(F1, Examples) {
    const oracle::Adj chain{{0, 1, 0}, {0, 0, 1}, {0, 0, 0}};
    EXPECT_DOUBLE_EQ(f1(m(chain), m(chain)), 1.0);
    EXPECT_DOUBLE_EQ(f1(BinaryMatrix(3), BinaryMatrix(3)), 1.0);
    EXPECT_DOUBLE_EQ(f1(BinaryMatrix(3), m(chain)), 0.0);
    EXPECT_DOUBLE_EQ(f1(m(chain), BinaryMatrix(3)), 0.0);
    // e = 2 true edges plus k = 1 spurious: 2e / (2e + k).
    const oracle::Adj plus{{0, 1, 1}, {0, 0, 1}, {0, 0, 0}};
    EXPECT_DOUBLE_EQ(f1(m(plus), m(chain)), 4.0 / 5.0);
}

TEST(F1, OneOnlyForIdenticalEdgeSets) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t d = 2 + trial % 5;
        const auto a = m(oracle::random_dag(d, 0.5, rng));
        const auto b = m(oracle::random_dag(d, 0.5, rng));
        const double v = f1(a, b);
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
        if (a.count() > 0) {
            ASSERT_EQ(v == 1.0, a == b);
        }
    }
}

TEST(Dis, Examples) {
    const oracle::Adj edge{{0, 1}, {0, 0}};
    EXPECT_DOUBLE_EQ(dis(m(edge), m(edge)), 0.0);
    EXPECT_DOUBLE_EQ(dis(m(edge), BinaryMatrix(2)), 1.0);
    EXPECT_DOUBLE_EQ(dis(m({{0, 0}, {1, 0}}), m(edge)), std::sqrt(2.0));
}

TEST(Dis, SquareIsTheEntrywiseHammingCount) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t d = 1 + trial % 6;
        const auto a = oracle::random_dag(d, 0.5, rng), b = oracle::random_dag(d, 0.5, rng);
        int diff = 0;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) diff += a[i][j] != b[i][j];
        const double v = dis(m(a), m(b));
        ASSERT_NEAR(v * v, diff, 1e-9);
    }
}

TEST(NPrune, Accounting) {
    const oracle::Adj og{{0, 1, 1}, {0, 0, 1}, {0, 0, 0}};
    const oracle::Adj fin{{0, 1, 0}, {0, 0, 1}, {0, 0, 0}};
    EXPECT_EQ(n_prune(m(og), m(og)), 0u);
    EXPECT_EQ(n_prune(m(og), m(fin)), 1u);
    EXPECT_THROW(n_prune(m(fin), m(og)), std::invalid_argument);
    // A complete ordering over d = 10 leaves 45 - e edges to prune.
    BinaryMatrix complete(10), sparse(10);
    for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = i + 1; j < 10; ++j) complete.set(i, j);
    for (std::size_t i = 0; i + 1 < 10; ++i) sparse.set(i, i + 1);
    EXPECT_EQ(n_prune(complete, sparse), 45u - 9u);
}
