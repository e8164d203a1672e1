// Pruning of the ordering graph by additive-model significance tests.
//
// For each node j the later-slice value X_j^t is regressed on spline
// expansions of its candidate parents { X_i^t : A(i, j) = 1 }, plus (by
// default) a nuisance block for its own earlier-slice value X_j^tau, which
// carries the lagged self-effect. A candidate is kept when the F-test for
// dropping its block has p <= beta.
#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/QR>
#include <Eigen/Cholesky>
#include <boost/math/distributions/fisher_f.hpp>

#include "htcit/graph.hpp"
#include "htcit/ordering.hpp"
#include "htcit/simgen.hpp"

namespace htcit {

enum class Basis { CubicSpline, Polynomial };

inline const char* to_string(Basis b) { return b == Basis::CubicSpline ? "spline" : "poly"; }
inline Basis parse_basis(const std::string& s) {
    if (s == "spline" || s == "cubic_spline") return Basis::CubicSpline;
    if (s == "poly" || s == "polynomial") return Basis::Polynomial;
    throw std::invalid_argument("unknown basis '" + s + "' (expected spline or poly)");
}

struct PruneConfig {
    double beta = 0.001;
    Basis basis = Basis::CubicSpline;
    std::size_t knots = 10;
    std::size_t degree = 3;
    std::size_t min_samples = 20;
    bool include_lag = true;

    void validate() const {
        if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("PruneConfig: beta must lie in (0, 1)");
        if (basis == Basis::CubicSpline && knots < 4) throw std::invalid_argument("PruneConfig: need at least 4 knots");
        if (basis == Basis::Polynomial && degree < 1) throw std::invalid_argument("PruneConfig: degree must be >= 1");
    }
};

struct PruneOutcome {
    Dag dag;
    Eigen::MatrixXd p_values;  // p(i, j) for candidate edges i -> j, NaN elsewhere
    std::vector<std::string> warnings;
    std::size_t candidate_edges = 0;
};

namespace detail {

inline double quantile_sorted(const std::vector<double>& s, double q) {
    const double pos = q * static_cast<double>(s.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, s.size() - 1);
    const double w = pos - static_cast<double>(lo);
    return s[lo] * (1.0 - w) + s[hi] * w;
}

}  // namespace detail

/// Basis expansion of one covariate (without intercept). Cubic splines use
/// the truncated power basis with knots at empirical quantiles; every column
/// is rescaled to unit standard deviation. Constant columns are dropped.
inline Eigen::MatrixXd basis_expansion(const Eigen::Ref<const Eigen::VectorXd>& x, const PruneConfig& cfg) {
    const Eigen::Index n = x.size();
    const double mean = x.mean();
    const double sd = std::sqrt((x.array() - mean).square().sum() / static_cast<double>(std::max<Eigen::Index>(n - 1, 1)));
    const Eigen::VectorXd u = sd > 0.0 ? Eigen::VectorXd((x.array() - mean) / sd) : Eigen::VectorXd(x.array() - mean);

    std::vector<Eigen::VectorXd> cols;
    const std::size_t deg = cfg.basis == Basis::CubicSpline ? 3 : cfg.degree;
    Eigen::VectorXd pw = Eigen::VectorXd::Ones(n);
    for (std::size_t k = 0; k < deg; ++k) {
        pw = pw.cwiseProduct(u);
        cols.push_back(pw);
    }
    if (cfg.basis == Basis::CubicSpline) {
        std::vector<double> sorted(u.data(), u.data() + n);
        std::sort(sorted.begin(), sorted.end());
        double last = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 1; k <= cfg.knots; ++k) {
            const double knot = detail::quantile_sorted(sorted, static_cast<double>(k) / static_cast<double>(cfg.knots + 1));
            if (!(knot > last)) continue;  // tied quantiles
            last = knot;
            cols.push_back((u.array() - knot).max(0.0).cube().matrix());
        }
    }

    Eigen::MatrixXd out(n, static_cast<Eigen::Index>(cols.size()));
    Eigen::Index c = 0;
    for (auto& v : cols) {
        const double m = v.mean();
        const double s = std::sqrt((v.array() - m).square().sum() / static_cast<double>(std::max<Eigen::Index>(n - 1, 1)));
        if (!(s > 1e-12)) continue;
        out.col(c++) = (v.array() - m) / s;
    }
    return out.leftCols(c);
}

namespace detail {

struct LsFit {
    double rss = 0.0;
    Eigen::Index rank = 0;
};

inline LsFit least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    if (x.cols() == 0) return {y.squaredNorm(), 0};
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    qr.setThreshold(1e-10);
    const Eigen::VectorXd beta = qr.solve(y);
    return {(y - x * beta).squaredNorm(), qr.rank()};
}

inline LsFit ridge_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda) {
    if (x.cols() == 0) return {y.squaredNorm(), 0};
    Eigen::MatrixXd g = x.transpose() * x;
    g.diagonal().array() += lambda;
    const Eigen::VectorXd beta = g.ldlt().solve(x.transpose() * y);
    return {(y - x * beta).squaredNorm(), std::min<Eigen::Index>(x.cols(), x.rows())};
}

inline double f_test_pvalue(double rss_reduced, double rss_full, double df1, double df2) {
    if (df1 <= 0.0) return 1.0;
    if (df2 <= 0.0) return 1.0;
    const double gain = std::max(rss_reduced - rss_full, 0.0);
    if (!(rss_full > 1e-300)) return gain > 0.0 ? 0.0 : 1.0;
    const double f = (gain / df1) / (rss_full / df2);
    boost::math::fisher_f_distribution<double> dist(df1, df2);
    return std::clamp(boost::math::cdf(boost::math::complement(dist, f)), 0.0, 1.0);
}

inline Eigen::MatrixXd hstack(const std::vector<const Eigen::MatrixXd*>& blocks, Eigen::Index n) {
    Eigen::Index cols = 0;
    for (auto* b : blocks) cols += b->cols();
    Eigen::MatrixXd out(n, cols);
    Eigen::Index c = 0;
    for (auto* b : blocks) {
        out.middleCols(c, b->cols()) = *b;
        c += b->cols();
    }
    return out;
}

}  // namespace detail

/// Per-candidate p-values for the additive model y ~ nuisance + sum_k f_k(candidate_k).
/// Columns of `candidates` are the candidate covariates; `nuisance` columns
/// are always included and never tested. Sets `warning` when the design is
/// rank-deficient or too wide for a joint fit, in which case each candidate
/// is tested alone against the nuisance model with a ridge-stabilized fit.
inline std::vector<double> additive_significance(const Eigen::Ref<const Eigen::VectorXd>& y,
                                                 const Eigen::Ref<const Eigen::MatrixXd>& candidates,
                                                 const Eigen::Ref<const Eigen::MatrixXd>& nuisance,
                                                 const PruneConfig& cfg, std::string* warning = nullptr) {
    const Eigen::Index n = y.size();
    const Eigen::VectorXd yc = y.array() - y.mean();  // intercept absorbed by centering

    std::vector<Eigen::MatrixXd> blocks;
    for (Eigen::Index c = 0; c < candidates.cols(); ++c) blocks.push_back(basis_expansion(candidates.col(c), cfg));
    std::vector<Eigen::MatrixXd> nuis;
    for (Eigen::Index c = 0; c < nuisance.cols(); ++c) nuis.push_back(basis_expansion(nuisance.col(c), cfg));

    std::vector<const Eigen::MatrixXd*> all;
    for (auto& b : nuis) all.push_back(&b);
    for (auto& b : blocks) all.push_back(&b);
    const Eigen::MatrixXd full = detail::hstack(all, n);

    std::vector<double> pv(blocks.size(), 1.0);
    const Eigen::Index min_resid_df = 5;
    const bool too_wide = full.cols() + 1 + min_resid_df > n;
    detail::LsFit ff;
    if (!too_wide) ff = detail::least_squares(full, yc);

    if (too_wide || ff.rank < full.cols()) {
        if (warning)
            *warning = too_wide ? "design too wide for a joint fit; candidates tested one at a time with ridge fits"
                                : "rank-deficient design; candidates tested one at a time with ridge fits";
        std::vector<const Eigen::MatrixXd*> base;
        for (auto& b : nuis) base.push_back(&b);
        const Eigen::MatrixXd reduced = detail::hstack(base, n);
        const double lambda = 1e-8 * static_cast<double>(n);
        const detail::LsFit fr = detail::ridge_fit(reduced, yc, lambda);
        for (std::size_t k = 0; k < blocks.size(); ++k) {
            auto with = base;
            with.push_back(&blocks[k]);
            const Eigen::MatrixXd x = detail::hstack(with, n);
            const detail::LsFit fk = detail::ridge_fit(x, yc, lambda);
            const double df1 = static_cast<double>(blocks[k].cols());
            const double df2 = static_cast<double>(n - 1 - x.cols());
            pv[k] = detail::f_test_pvalue(fr.rss, fk.rss, df1, df2);
        }
        return pv;
    }

    const double df2 = static_cast<double>(n - 1 - ff.rank);
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        std::vector<const Eigen::MatrixXd*> others;
        for (auto& b : nuis) others.push_back(&b);
        for (std::size_t q = 0; q < blocks.size(); ++q)
            if (q != k) others.push_back(&blocks[q]);
        const detail::LsFit fr = detail::least_squares(detail::hstack(others, n), yc);
        pv[k] = detail::f_test_pvalue(fr.rss, ff.rss, static_cast<double>(ff.rank - fr.rank), df2);
    }
    return pv;
}

/// Keeps candidate edge i -> j of `candidates` iff significance(j, parents)[k] <= beta
/// for the k-th candidate parent i of j.
template <class Significance>
    requires std::invocable<Significance&, std::size_t, std::span<const std::size_t>>
PruneOutcome prune_with(const BinaryMatrix& candidates, Significance&& significance, double beta,
                        std::vector<std::string> labels = {}) {
    if (!is_acyclic(candidates)) throw std::invalid_argument("prune: ordering graph must be acyclic");
    const std::size_t d = candidates.size();
    PruneOutcome out;
    out.p_values = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d),
                                             std::numeric_limits<double>::quiet_NaN());
    BinaryMatrix kept(d);
    for (std::size_t j = 0; j < d; ++j) {
        const std::vector<std::size_t> parents = candidates.column(j);
        if (parents.empty()) continue;
        out.candidate_edges += parents.size();
        const std::vector<double> pv = significance(j, std::span<const std::size_t>(parents));
        if (pv.size() != parents.size()) throw std::logic_error("prune: significance returned the wrong number of p-values");
        for (std::size_t k = 0; k < parents.size(); ++k) {
            out.p_values(static_cast<Eigen::Index>(parents[k]), static_cast<Eigen::Index>(j)) = pv[k];
            if (pv[k] <= beta) kept.set(parents[k], j);
        }
    }
    out.dag = Dag(std::move(kept), std::move(labels));
    return out;
}

inline PruneOutcome prune_detailed(const TwoSliceDataset& data, const OrderingGraph& og, const PruneConfig& cfg) {
    cfg.validate();
    data.validate();
    if (og.size() != data.d()) throw std::invalid_argument("prune: ordering graph does not match the dataset");
    if (data.n() < cfg.min_samples)
        throw std::invalid_argument("prune: need at least " + std::to_string(cfg.min_samples) + " samples");
    std::vector<std::string> warnings;
    auto sig = [&](std::size_t j, std::span<const std::size_t> parents) {
        const auto n = static_cast<Eigen::Index>(data.n());
        Eigen::MatrixXd cand(n, static_cast<Eigen::Index>(parents.size()));
        for (std::size_t k = 0; k < parents.size(); ++k)
            cand.col(static_cast<Eigen::Index>(k)) = data.x_t.col(static_cast<Eigen::Index>(parents[k]));
        Eigen::MatrixXd nuis(n, cfg.include_lag ? 1 : 0);
        if (cfg.include_lag) nuis.col(0) = data.x_tau.col(static_cast<Eigen::Index>(j));
        std::string warning;
        auto pv = additive_significance(data.x_t.col(static_cast<Eigen::Index>(j)), cand, nuis, cfg, &warning);
        if (!warning.empty()) warnings.push_back("node " + std::to_string(j) + ": " + warning);
        return pv;
    };
    auto labels = data.labels.empty() ? Dag::default_labels(data.d()) : data.labels;
    PruneOutcome out = prune_with(og.a_tp, sig, cfg.beta, std::move(labels));
    out.warnings = std::move(warnings);
    return out;
}

/// Final DAG: the ordering-graph edges whose additive-model test has p <= beta.
inline Dag prune(const TwoSliceDataset& data, const OrderingGraph& og, const PruneConfig& cfg) {
    return prune_detailed(data, og, cfg).dag;
}

}  // namespace htcit
