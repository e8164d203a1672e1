// Kernel (conditional) independence tests with Gaussian kernels.
//
// hsic_test: marginal HSIC with a gamma moment-matched null or a
// permutation null.
//
// kci_test: kernel conditional independence test. The kernel of x is built
// on the augmented vector (x, z/2); both Gram matrices are residualized on z
// through kernel ridge regression, R_z = eps (K_z + eps I)^{-1}, and the
// statistic tr(R K_x R R K_y R) is referred to a gamma distribution whose
// first two moments follow the weighted chi-square null.
//
// All Gram matrices are represented by centered low-rank factors from a
// pivoted incomplete Cholesky decomposition; with the default tolerance the
// neglected trace is below 1e-6 n.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Cholesky>
#include <boost/math/special_functions/gamma.hpp>

#include "htcit/kernels.hpp"
#include "htcit/rng.hpp"

namespace htcit {

enum class NullMethod { GammaApprox, Permutation };

enum class BandwidthRule { MedianHeuristic, Fixed };

struct KernelConfig {
    BandwidthRule bandwidth_rule = BandwidthRule::MedianHeuristic;
    double fixed_bandwidth = 1.0;
    /// Kernel ridge regularizer; multiplied by n when ridge_per_sample is set.
    double ridge = 1e-3;
    bool ridge_per_sample = true;
    NullMethod null_method = NullMethod::GammaApprox;
    std::size_t permutations = 500;
    std::optional<std::size_t> subsample_cap;
    std::uint64_t seed = 0;
    double lowrank_tol = 1e-6;
    std::size_t max_rank = 300;

    double effective_ridge(std::size_t n) const { return ridge_per_sample ? ridge * static_cast<double>(n) : ridge; }

    void validate() const {
        if (!(ridge > 0.0)) throw std::invalid_argument("KernelConfig: ridge must be > 0");
        if (bandwidth_rule == BandwidthRule::Fixed && !(fixed_bandwidth > 0.0))
            throw std::invalid_argument("KernelConfig: fixed bandwidth must be > 0");
        if (null_method == NullMethod::Permutation && permutations < 99)
            throw std::invalid_argument("KernelConfig: permutation null needs at least 99 permutations");
        if (subsample_cap && *subsample_cap < 20) throw std::invalid_argument("KernelConfig: subsample_cap must be >= 20");
        if (!(lowrank_tol >= 0.0) || max_rank < 1) throw std::invalid_argument("KernelConfig: invalid low-rank settings");
    }
};

struct TestResult {
    double statistic = 0.0;  // tr(K~ L~) / n^2 on the centered (residualized) Gram matrices
    double p_value = 1.0;
    NullMethod null_method = NullMethod::GammaApprox;
    std::size_t permutations = 0;  // permutations used, 0 for the gamma null
    std::size_t n_used = 0;
    std::vector<std::size_t> dropped_z_columns;  // constant conditioning columns
    bool warning = false;
};

namespace detail {

inline constexpr std::size_t kMinSamples = 20;

inline double gamma_upper_tail(double stat, double mean, double var) {
    const double shape = mean * mean / var;
    const double scale = var / mean;
    const double p = boost::math::gamma_q(shape, std::max(stat, 0.0) / scale);
    return std::clamp(p, 0.0, 1.0);
}

inline bool usable_moments(double mean, double var) {
    return std::isfinite(mean) && std::isfinite(var) && mean > 0.0 && var > 0.0;
}

/// Permutation p-value for ||A^T P B||_F^2; lies on the grid k / (B + 1).
inline double permutation_pvalue(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double observed,
                                 std::size_t count, std::uint64_t seed) {
    Rng rng = make_rng(derive_seed(seed, 0x9e77));
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(a.rows()));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    Eigen::MatrixXd pb(b.rows(), b.cols());
    std::size_t exceed = 0;
    const double slack = 1e-12 * std::max(1.0, std::abs(observed));
    for (std::size_t k = 0; k < count; ++k) {
        std::shuffle(perm.begin(), perm.end(), rng);
        for (Eigen::Index r = 0; r < b.rows(); ++r) pb.row(r) = b.row(perm[static_cast<std::size_t>(r)]);
        const double s = (a.transpose() * pb).squaredNorm();
        if (s >= observed - slack) ++exceed;
    }
    return static_cast<double>(exceed + 1) / static_cast<double>(count + 1);
}

inline double bandwidth_for(const Eigen::Ref<const Eigen::MatrixXd>& x, const KernelConfig& cfg) {
    return cfg.bandwidth_rule == BandwidthRule::Fixed ? cfg.fixed_bandwidth : kernels::median_pairwise_distance(x);
}

inline Eigen::MatrixXd gather_rows(const Eigen::Ref<const Eigen::MatrixXd>& m, const std::vector<Eigen::Index>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(rows[k]);
    return out;
}

}  // namespace detail

/// Centered low-rank factor of the Gaussian Gram matrix of one standardized
/// variable: H K H ~= F F^T.
struct KernelFactor {
    Eigen::MatrixXd f;
    std::size_t n() const { return static_cast<std::size_t>(f.rows()); }
};

inline KernelFactor make_kernel_factor(const Eigen::Ref<const Eigen::MatrixXd>& standardized, const KernelConfig& cfg) {
    const double sigma = detail::bandwidth_for(standardized, cfg);
    return {kernels::center_columns(kernels::incomplete_cholesky(standardized, sigma, cfg.lowrank_tol, cfg.max_rank))};
}

inline KernelFactor make_kernel_factor(std::span<const double> x, const KernelConfig& cfg, const char* what = "x") {
    Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
    const Eigen::MatrixXd s = kernels::standardize(v, what);
    return make_kernel_factor(s, cfg);
}

/// HSIC on precomputed centered factors. Symmetric in its arguments.
inline TestResult hsic_from_factors(const KernelFactor& fx, const KernelFactor& fy, const KernelConfig& cfg) {
    if (fx.n() != fy.n()) throw std::invalid_argument("hsic: factors have different sample counts");
    const double n = static_cast<double>(fx.n());
    const Eigen::MatrixXd cross = fx.f.transpose() * fy.f;
    const double stat = cross.squaredNorm();  // tr(Kc Lc)

    TestResult res;
    res.n_used = fx.n();
    res.statistic = stat / (n * n);
    res.null_method = cfg.null_method;
    if (cfg.null_method == NullMethod::Permutation) {
        res.permutations = cfg.permutations;
        res.p_value = detail::permutation_pvalue(fx.f, fy.f, stat, cfg.permutations, cfg.seed);
        return res;
    }
    const double tr_k = fx.f.squaredNorm();
    const double tr_l = fy.f.squaredNorm();
    const double fro_k = (fx.f.transpose() * fx.f).squaredNorm();
    const double fro_l = (fy.f.transpose() * fy.f).squaredNorm();
    const double mean = tr_k * tr_l / n;
    const double var = 2.0 * fro_k * fro_l / (n * n);
    res.p_value = detail::usable_moments(mean, var) ? detail::gamma_upper_tail(stat, mean, var) : 1.0;
    return res;
}

/// Marginal HSIC independence test of two scalar samples.
inline TestResult hsic_test(std::span<const double> x, std::span<const double> y, const KernelConfig& cfg) {
    cfg.validate();
    if (x.size() != y.size()) throw std::invalid_argument("hsic_test: x and y have different lengths");
    if (x.size() < detail::kMinSamples) throw std::invalid_argument("hsic_test: need at least 20 samples");
    if (cfg.subsample_cap && x.size() > *cfg.subsample_cap) {
        const auto rows = kernels::subsample_rows(x.size(), *cfg.subsample_cap, cfg.seed);
        std::vector<double> xs, ys;
        for (auto r : rows) {
            xs.push_back(x[static_cast<std::size_t>(r)]);
            ys.push_back(y[static_cast<std::size_t>(r)]);
        }
        KernelConfig inner = cfg;
        inner.subsample_cap.reset();
        return hsic_test(xs, ys, inner);
    }
    const KernelFactor fx = make_kernel_factor(x, cfg, "x");
    const KernelFactor fy = make_kernel_factor(y, cfg, "y");
    return hsic_from_factors(fx, fy, cfg);
}

/// Conditional test state for a fixed (x, z): the residualizing operator and
/// the residualized kernel of x are computed once and reused across many y.
class KciContext {
public:
    KciContext(std::span<const double> x, const Eigen::Ref<const Eigen::MatrixXd>& z, const KernelConfig& cfg)
        : cfg_(cfg) {
        cfg_.validate();
        n_ = x.size();
        if (static_cast<std::size_t>(z.rows()) != n_ && z.cols() > 0)
            throw std::invalid_argument("kci_test: z has a different number of rows than x");
        if (n_ < detail::kMinSamples) throw std::invalid_argument("kci_test: need at least 20 samples");

        Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(n_));
        const Eigen::VectorXd xs = kernels::standardize(xv, "x");

        std::vector<Eigen::Index> keep;
        for (Eigen::Index c = 0; c < z.cols(); ++c) {
            if (!z.col(c).allFinite()) throw std::invalid_argument("kci_test: z contains non-finite values");
            if (kernels::is_constant(z.col(c)))
                dropped_.push_back(static_cast<std::size_t>(c));
            else
                keep.push_back(c);
        }

        if (keep.empty()) {
            marginal_ = true;
            fx_ = make_kernel_factor(Eigen::MatrixXd(xs), cfg_);
            return;
        }

        Eigen::MatrixXd zs(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(keep.size()));
        for (std::size_t k = 0; k < keep.size(); ++k)
            zs.col(static_cast<Eigen::Index>(k)) = kernels::standardize(z.col(keep[k]), "z column");

        const double eps = cfg_.effective_ridge(n_);
        fz_ = make_kernel_factor(zs, cfg_).f;
        Eigen::MatrixXd m = fz_.transpose() * fz_;
        m.diagonal().array() += eps;
        solver_.compute(m);

        Eigen::MatrixXd xa(static_cast<Eigen::Index>(n_), 1 + zs.cols());
        xa.col(0) = xs;
        xa.rightCols(zs.cols()) = 0.5 * zs;
        ax_ = residualize(make_kernel_factor(xa, cfg_).f);
        kx_ = ax_ * ax_.transpose();
    }

    std::size_t n() const noexcept { return n_; }
    bool marginal() const noexcept { return marginal_; }
    const std::vector<std::size_t>& dropped_columns() const noexcept { return dropped_; }

    TestResult test(std::span<const double> y) const {
        if (y.size() != n_) throw std::invalid_argument("kci_test: y has a different length than x");
        KernelFactor fy = make_kernel_factor(y, cfg_, "y");
        return test(fy);
    }

    /// Test against a precomputed centered factor of y (unresidualized).
    TestResult test(const KernelFactor& fy) const {
        if (fy.n() != n_) throw std::invalid_argument("kci_test: factor has a different sample count");
        TestResult res;
        if (marginal_) {
            res = hsic_from_factors(fx_, fy, cfg_);
        } else {
            const Eigen::MatrixXd ay = residualize(fy.f);
            const double n = static_cast<double>(n_);
            const double stat = (ax_.transpose() * ay).squaredNorm();
            res.n_used = n_;
            res.statistic = stat / (n * n);
            res.null_method = cfg_.null_method;

            bool use_perm = cfg_.null_method == NullMethod::Permutation;
            if (!use_perm) {
                // Moments of sum_k lambda_k chi^2_1 with lambda the spectrum of
                // (K_x~ o K_y~): mean = trace, var = 2 * squared Frobenius norm.
                const Eigen::MatrixXd ky = ay * ay.transpose();
                const double mean = kx_.diagonal().dot(ky.diagonal());
                const double var = 2.0 * (kx_.array() * ky.array()).square().sum();
                if (detail::usable_moments(mean, var)) {
                    res.p_value = detail::gamma_upper_tail(stat, mean, var);
                } else {
                    use_perm = true;
                    res.warning = true;
                }
            }
            if (use_perm) {
                res.null_method = NullMethod::Permutation;
                res.permutations = std::max<std::size_t>(cfg_.permutations, 99);
                res.p_value = detail::permutation_pvalue(ax_, ay, stat, res.permutations, cfg_.seed);
            }
        }
        res.dropped_z_columns = dropped_;
        if (!dropped_.empty()) res.warning = true;
        return res;
    }

private:
    // R_z G = G - F (eps I + F^T F)^{-1} F^T G
    Eigen::MatrixXd residualize(const Eigen::MatrixXd& g) const {
        return g - fz_ * solver_.solve(fz_.transpose() * g);
    }

    KernelConfig cfg_;
    std::size_t n_ = 0;
    bool marginal_ = false;
    std::vector<std::size_t> dropped_;
    KernelFactor fx_;
    Eigen::MatrixXd fz_;
    Eigen::LLT<Eigen::MatrixXd> solver_;
    Eigen::MatrixXd ax_;
    Eigen::MatrixXd kx_;
};

/// Kernel conditional independence test of x and y given the columns of z.
/// With no conditioning columns this is exactly hsic_test.
inline TestResult kci_test(std::span<const double> x, std::span<const double> y,
                           const Eigen::Ref<const Eigen::MatrixXd>& z, const KernelConfig& cfg) {
    cfg.validate();
    if (x.size() != y.size()) throw std::invalid_argument("kci_test: x and y have different lengths");
    if (z.cols() == 0) return hsic_test(x, y, cfg);
    if (static_cast<std::size_t>(z.rows()) != x.size())
        throw std::invalid_argument("kci_test: z has a different number of rows than x");
    if (cfg.subsample_cap && x.size() > *cfg.subsample_cap) {
        const auto rows = kernels::subsample_rows(x.size(), *cfg.subsample_cap, cfg.seed);
        std::vector<double> xs, ys;
        for (auto r : rows) {
            xs.push_back(x[static_cast<std::size_t>(r)]);
            ys.push_back(y[static_cast<std::size_t>(r)]);
        }
        KernelConfig inner = cfg;
        inner.subsample_cap.reset();
        return kci_test(xs, ys, detail::gather_rows(z, rows), inner);
    }
    return KciContext(x, z, cfg).test(y);
}

}  // namespace htcit
