#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "htcit/kerneltest.hpp"
#include "htcit/rng.hpp"

using namespace htcit;

namespace {

std::vector<double> normals(std::size_t n, Rng& rng) {
    std::normal_distribution<double> g;
    std::vector<double> v(n);
    for (auto& x : v) x = g(rng);
    return v;
}

struct Triple {
    std::vector<double> x, y;
    Eigen::MatrixXd z;
};

// x -> z -> y
Triple chain(std::size_t n, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    std::normal_distribution<double> g;
    Triple t{std::vector<double>(n), std::vector<double>(n), Eigen::MatrixXd(n, 1)};
    for (std::size_t r = 0; r < n; ++r) {
        t.x[r] = g(rng);
        t.z(r, 0) = std::sin(t.x[r]) + t.x[r] + 0.5 * g(rng);
        t.y[r] = std::tanh(t.z(r, 0)) + 0.5 * g(rng);
    }
    return t;
}

// x -> z <- y
Triple collider(std::size_t n, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    std::normal_distribution<double> g;
    Triple t{std::vector<double>(n), std::vector<double>(n), Eigen::MatrixXd(n, 1)};
    for (std::size_t r = 0; r < n; ++r) {
        t.x[r] = g(rng);
        t.y[r] = g(rng);
        t.z(r, 0) = t.x[r] + t.y[r] + 0.5 * g(rng);
    }
    return t;
}

}  // namespace

TEST(Hsic, PerfectDependence) {
    Rng rng = make_rng(1);
    const auto x = normals(200, rng);
    const TestResult r = hsic_test(x, x, {});
    EXPECT_LT(r.p_value, 1e-6);
    EXPECT_GT(r.statistic, 0.0);
    EXPECT_EQ(r.n_used, 200u);
}

TEST(Hsic, CalibratedUnderIndependence) {
    Rng rng = make_rng(2);
    std::size_t rejections = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto x = normals(300, rng);
        const auto y = normals(300, rng);
        const TestResult r = hsic_test(x, y, {});
        ASSERT_GE(r.statistic, 0.0);
        ASSERT_GE(r.p_value, 0.0);
        ASSERT_LE(r.p_value, 1.0);
        if (r.p_value <= 0.01) ++rejections;
    }
    const double rate = rejections / 1000.0;
    EXPECT_GE(rate, 0.002);
    EXPECT_LE(rate, 0.03);
}

TEST(Hsic, GammaAgreesWithPermutation) {
    Rng rng = make_rng(3);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> strength(0.0, 0.6);
    KernelConfig perm;
    perm.null_method = NullMethod::Permutation;
    perm.permutations = 2000;
    int agree = 0;
    for (int pair = 0; pair < 50; ++pair) {
        const double a = strength(rng);
        std::vector<double> x(150), y(150);
        for (std::size_t r = 0; r < x.size(); ++r) {
            x[r] = g(rng);
            y[r] = a * std::sin(2.0 * x[r]) + g(rng);
        }
        perm.seed = static_cast<std::uint64_t>(pair);
        const bool gamma_rejects = hsic_test(x, y, {}).p_value <= 0.01;
        const TestResult pr = hsic_test(x, y, perm);
        EXPECT_EQ(pr.permutations, 2000u);
        if (gamma_rejects == (pr.p_value <= 0.01)) ++agree;
    }
    EXPECT_GE(agree, 45);
}

TEST(Hsic, SymmetricStatistic) {
    Rng rng = make_rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = normals(100, rng);
        auto y = normals(100, rng);
        for (std::size_t r = 0; r < y.size(); ++r) y[r] += 0.3 * x[r] * x[r];
        const double a = hsic_test(x, y, {}).statistic;
        const double b = hsic_test(y, x, {}).statistic;
        EXPECT_NEAR(a, b, 1e-12 * std::abs(a));
    }
}

TEST(Hsic, AffineInvariantDecision) {
    Rng rng = make_rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = normals(120, rng);
        auto y = normals(120, rng);
        for (std::size_t r = 0; r < y.size(); ++r) y[r] += 0.2 * trial / 20.0 * std::cos(x[r]);
        std::vector<double> xs(x), ys(y);
        for (auto& v : xs) v = 3.5 * v - 7.0;
        for (auto& v : ys) v = -0.01 * v + 100.0;
        const double p = hsic_test(x, y, {}).p_value;
        const double q = hsic_test(xs, ys, {}).p_value;
        EXPECT_NEAR(p, q, 1e-9);
        for (double alpha : {0.001, 0.01, 0.05, 0.1}) {
            // A decision can only differ if p sits on the threshold to rounding.
            if (std::abs(p - alpha) > 1e-9) {
                EXPECT_EQ(p <= alpha, q <= alpha);
            }
        }
    }
}

TEST(Hsic, PermutationPValuesAreOnTheGridAndSuperUniform) {
    Rng rng = make_rng(6);
    KernelConfig cfg;
    cfg.null_method = NullMethod::Permutation;
    cfg.permutations = 199;
    std::vector<double> ps;
    for (int trial = 0; trial < 500; ++trial) {
        cfg.seed = static_cast<std::uint64_t>(trial);
        const auto x = normals(60, rng);
        const auto y = normals(60, rng);
        const double p = hsic_test(x, y, cfg).p_value;
        const double k = p * 200.0;
        ASSERT_NEAR(k, std::round(k), 1e-9);
        ASSERT_GE(k, 1.0 - 1e-9);
        ps.push_back(p);
    }
    for (double u : {0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9}) {
        const double ecdf = static_cast<double>(std::count_if(ps.begin(), ps.end(), [&](double p) { return p <= u; })) / ps.size();
        EXPECT_LE(ecdf, u + 0.03) << "u = " << u;
    }
}

TEST(Hsic, DegenerateInputs) {
    Rng rng = make_rng(7);
    const auto x = normals(50, rng);
    const std::vector<double> flat(50, 2.0);
    EXPECT_THROW(hsic_test(x, flat, {}), DegenerateInputError);
    EXPECT_THROW(hsic_test(flat, x, {}), DegenerateInputError);
    const std::vector<double> short_x(10, 0.0);
    EXPECT_THROW(hsic_test(short_x, short_x, {}), std::invalid_argument);
    auto nan_x = x;
    nan_x[3] = std::nan("");
    EXPECT_THROW(hsic_test(nan_x, x, {}), std::invalid_argument);
    const std::vector<double> other(49, 0.0);
    EXPECT_THROW(hsic_test(x, other, {}), std::invalid_argument);
}

TEST(Hsic, SubsampleCapBoundsSampleCount) {
    Rng rng = make_rng(8);
    const auto x = normals(500, rng);
    auto y = normals(500, rng);
    KernelConfig cfg;
    cfg.subsample_cap = 100;
    EXPECT_EQ(hsic_test(x, y, cfg).n_used, 100u);
}

TEST(KernelConfig, Validation) {
    KernelConfig cfg;
    cfg.ridge = 0.0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.null_method = NullMethod::Permutation;
    cfg.permutations = 50;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = {};
    EXPECT_DOUBLE_EQ(cfg.effective_ridge(500), 0.5);
}

TEST(Kci, ChainIsConditionallyIndependent) {
    int accepted = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Triple t = chain(500, 100 + seed);
        if (kci_test(t.x, t.y, t.z, {}).p_value > 0.01) ++accepted;
    }
    EXPECT_GE(accepted, 8);
}

TEST(Kci, ColliderIsConditionallyDependent) {
    int rejected = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Triple t = collider(500, 200 + seed);
        if (kci_test(t.x, t.y, t.z, {}).p_value <= 0.01) ++rejected;
    }
    EXPECT_GE(rejected, 8);
}

TEST(Kci, EmptyConditioningDelegatesToHsic) {
    Rng rng = make_rng(9);
    const auto x = normals(80, rng);
    auto y = normals(80, rng);
    for (std::size_t r = 0; r < y.size(); ++r) y[r] += 0.4 * x[r];
    for (NullMethod m : {NullMethod::GammaApprox, NullMethod::Permutation}) {
        KernelConfig cfg;
        cfg.null_method = m;
        cfg.seed = 3;
        const TestResult a = kci_test(x, y, Eigen::MatrixXd(80, 0), cfg);
        const TestResult b = hsic_test(x, y, cfg);
        EXPECT_EQ(a.statistic, b.statistic);
        EXPECT_EQ(a.p_value, b.p_value);
    }
}

TEST(Kci, ConstantConditioningColumnIsDroppedWithWarning) {
    const Triple t = chain(200, 5);
    Eigen::MatrixXd z(200, 2);
    z.col(0).setConstant(1.0);
    z.col(1) = t.z.col(0);
    const TestResult r = kci_test(t.x, t.y, z, {});
    EXPECT_TRUE(r.warning);
    EXPECT_EQ(r.dropped_z_columns, std::vector<std::size_t>{0});
    const TestResult clean = kci_test(t.x, t.y, t.z, {});
    EXPECT_NEAR(r.p_value, clean.p_value, 1e-12);

    // Nothing left to condition on: falls back to the marginal test.
    const TestResult marginal = kci_test(t.x, t.y, Eigen::MatrixXd::Ones(200, 1), {});
    EXPECT_TRUE(marginal.warning);
    EXPECT_NEAR(marginal.p_value, hsic_test(t.x, t.y, {}).p_value, 1e-12);
}

TEST(Kci, DegenerateInputs) {
    const Triple t = chain(100, 6);
    const std::vector<double> flat(100, 0.0);
    EXPECT_THROW(kci_test(flat, t.y, t.z, {}), DegenerateInputError);
    EXPECT_THROW(kci_test(t.x, flat, t.z, {}), DegenerateInputError);
    EXPECT_THROW(kci_test(t.x, t.y, Eigen::MatrixXd::Zero(50, 1), {}), std::invalid_argument);
}

TEST(Kci, CalibratedWithMultivariateConditioning) {
    // y depends on z only; x depends on z only.
    Rng rng = make_rng(10);
    std::normal_distribution<double> g;
    int rejections = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 300;
        Eigen::MatrixXd z(n, 3);
        std::vector<double> x(n), y(n);
        for (std::size_t r = 0; r < n; ++r) {
            for (Eigen::Index c = 0; c < 3; ++c) z(static_cast<Eigen::Index>(r), c) = g(rng);
            const auto row = static_cast<Eigen::Index>(r);
            x[r] = std::sin(z(row, 0)) + 0.5 * z(row, 1) + 0.5 * g(rng);
            y[r] = std::cos(z(row, 0)) + 0.5 * z(row, 2) + 0.5 * g(rng);
        }
        if (kci_test(x, y, z, {}).p_value <= 0.01) ++rejections;
    }
    EXPECT_LE(rejections, 10);
}

TEST(Kci, ContextReuseMatchesOneShot) {
    const Triple t = chain(150, 7);
    const KciContext ctx(t.x, t.z, {});
    const TestResult a = ctx.test(std::span<const double>(t.y));
    const TestResult b = kci_test(t.x, t.y, t.z, {});
    EXPECT_EQ(a.p_value, b.p_value);
    EXPECT_EQ(a.statistic, b.statistic);
}
