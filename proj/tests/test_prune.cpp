#include <random>

#include <gtest/gtest.h>

#include "htcit/metrics.hpp"
#include "htcit/ordering.hpp"
#include "htcit/prune.hpp"
#include "oracles.hpp"

using namespace htcit;

namespace {

OrderingGraph graph_of(const BinaryMatrix& a) {
    OrderingGraph og;
    og.a_tp = a;
    og.derived_from = PValueMatrix{Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(a.size())), 0.01};
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a.size(); ++j)
            if (a(i, j)) og.derived_from.p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 0.0;
    return og;
}

Dag chain(std::size_t d) {
    BinaryMatrix adj(d);
    for (std::size_t i = 0; i + 1 < d; ++i) adj.set(i, i + 1);
    return Dag(adj);
}

}  // namespace

TEST(Prune, EmptyOrderingGivesEmptyDag) {
    ScmConfig cfg;
    cfg.d = 4;
    cfg.e = 3;
    cfg.n = 200;
    const auto ds = simulate(cfg, chain(4));
    const Dag g = prune(ds, graph_of(BinaryMatrix(4)), {});
    EXPECT_EQ(g.size(), 4u);
    EXPECT_EQ(g.num_edges(), 0u);
}

TEST(Prune, ChainDropsTheShortcut) {
    int clean = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        ScmConfig cfg;
        cfg.d = 3;
        cfg.e = 2;
        cfg.n = 2000;
        cfg.seed = seed;
        const Dag truth = chain(3);
        const auto ds = simulate(cfg, truth);
        const Dag g = prune(ds, graph_of(reachability(truth.adjacency())), {});
        if (g == truth) ++clean;
    }
    EXPECT_GE(clean, 9);
}

TEST(Prune, SubgraphOfOrderingAndMonotoneInBeta) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        ScmConfig cfg;
        cfg.d = 8;
        cfg.e = 8;
        cfg.n = 400;
        cfg.seed = seed;
        const Dag truth = sample_dag(8, 8, seed);
        const auto ds = simulate(cfg, truth);
        // Candidate graph: reachability plus every forward pair of a topological order.
        BinaryMatrix cand(8);
        const auto order = truth.topological_order();
        for (std::size_t a = 0; a < 8; ++a)
            for (std::size_t b = a + 1; b < 8; ++b)
                if ((a + b + seed) % 2 == 0 || reachability(truth.adjacency())(order[a], order[b])) cand.set(order[a], order[b]);
        const OrderingGraph og = graph_of(cand);
        std::optional<Dag> looser;
        for (double beta : {0.5, 0.1, 0.01, 0.001, 1e-6}) {
            PruneConfig pc;
            pc.beta = beta;
            const PruneOutcome out = prune_detailed(ds, og, pc);
            EXPECT_TRUE(out.dag.adjacency().subset_of(cand));
            EXPECT_EQ(out.candidate_edges, cand.count());
            EXPECT_EQ(n_prune(cand, out.dag.adjacency()), cand.count() - out.dag.num_edges());
            for (std::size_t i = 0; i < 8; ++i)
                for (std::size_t j = 0; j < 8; ++j) {
                    const double p = out.p_values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                    if (cand(i, j)) {
                        EXPECT_GE(p, 0.0);
                        EXPECT_LE(p, 1.0);
                    } else {
                        EXPECT_TRUE(std::isnan(p));
                    }
                }
            if (looser) {
                EXPECT_TRUE(out.dag.adjacency().subset_of(looser->adjacency())) << "beta " << beta;
            }
            looser = out.dag;
        }
    }
}

TEST(Prune, PolynomialBasisAlsoWorks) {
    ScmConfig cfg;
    cfg.d = 3;
    cfg.e = 2;
    cfg.n = 1000;
    cfg.seed = 1;
    const Dag truth = chain(3);
    const auto ds = simulate(cfg, truth);
    PruneConfig pc;
    pc.basis = Basis::Polynomial;
    pc.degree = 3;
    const Dag g = prune(ds, graph_of(reachability(truth.adjacency())), pc);
    EXPECT_TRUE(g.has_edge(0, 1));
    EXPECT_TRUE(g.has_edge(1, 2));
}

TEST(Prune, OracleSignificanceRecoversTruth) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t d = 2 + trial % 5;
        const oracle::Adj adj = oracle::random_dag(d, 0.5, rng);
        const BinaryMatrix truth = BinaryMatrix::from_nested(adj);
        const BinaryMatrix closure = BinaryMatrix::from_nested(oracle::descendants(adj));
        auto sig = [&](std::size_t j, std::span<const std::size_t> parents) {
            std::vector<double> p;
            for (std::size_t i : parents) p.push_back(truth(i, j) ? 0.0 : 1.0);
            return p;
        };
        const PruneOutcome out = prune_with(closure, sig, 0.001);
        ASSERT_EQ(out.dag.adjacency(), truth);
    }
}

TEST(Prune, RankDeficientDesignFallsBackWithWarning) {
    ScmConfig cfg;
    cfg.d = 8;
    cfg.e = 7;
    cfg.n = 40;
    const Dag truth = chain(8);
    const auto ds = simulate(cfg, truth);
    const OrderingGraph og = graph_of(reachability(truth.adjacency()));
    const PruneOutcome out = prune_detailed(ds, og, {});
    EXPECT_FALSE(out.warnings.empty());
    EXPECT_TRUE(out.dag.adjacency().subset_of(og.a_tp));
}

TEST(Prune, Preconditions) {
    ScmConfig cfg;
    cfg.d = 2;
    cfg.e = 1;
    cfg.n = 10;
    const auto ds = simulate(cfg, chain(2));
    EXPECT_THROW(prune(ds, graph_of(BinaryMatrix(2)), {}), std::invalid_argument);
    cfg.n = 100;
    const auto ok = simulate(cfg, chain(2));
    BinaryMatrix cyc(2);
    cyc.set(0, 1);
    cyc.set(1, 0);
    EXPECT_THROW(prune(ok, graph_of(cyc), {}), std::invalid_argument);
    EXPECT_THROW(prune(ok, graph_of(BinaryMatrix(3)), {}), std::invalid_argument);
    PruneConfig bad;
    bad.beta = 1.0;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = {};
    bad.knots = 2;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Prune, BasisExpansionShape) {
    Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(100, -2.0, 2.0);
    PruneConfig pc;
    const Eigen::MatrixXd b = basis_expansion(x, pc);
    EXPECT_EQ(b.rows(), 100);
    EXPECT_GE(b.cols(), 3);
    EXPECT_TRUE(b.allFinite());
    pc.basis = Basis::Polynomial;
    EXPECT_EQ(basis_expansion(x, pc).cols(), 3);
}
