// Gaussian-kernel primitives shared by the independence tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Cholesky>

#include "htcit/rng.hpp"

namespace htcit {

/// Thrown when an input carries no variation, so no kernel bandwidth exists.
class DegenerateInputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

namespace kernels {

inline bool is_constant(const Eigen::Ref<const Eigen::VectorXd>& v) {
    if (v.size() < 2) return true;
    const double mean = v.mean();
    const double sd = std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
    return !(sd > 1e-12 * (1.0 + std::abs(mean)));
}

/// Zero mean, unit sample variance. Throws DegenerateInputError on a
/// constant or non-finite vector.
inline Eigen::VectorXd standardize(const Eigen::Ref<const Eigen::VectorXd>& v, const char* what = "input") {
    if (!v.allFinite()) throw std::invalid_argument(std::string(what) + " contains non-finite values");
    if (is_constant(v)) throw DegenerateInputError(std::string(what) + " is constant; kernel bandwidth is undefined");
    const double mean = v.mean();
    Eigen::VectorXd c = v.array() - mean;
    const double sd = std::sqrt(c.squaredNorm() / static_cast<double>(v.size() - 1));
    return c / sd;
}

/// Median of pairwise Euclidean distances between rows. At most `max_rows`
/// evenly strided rows enter the computation.
inline double median_pairwise_distance(const Eigen::Ref<const Eigen::MatrixXd>& x, std::size_t max_rows = 1000) {
    const auto n = static_cast<std::size_t>(x.rows());
    const std::size_t m = std::min(n, max_rows);
    std::vector<Eigen::Index> rows(m);
    for (std::size_t k = 0; k < m; ++k) rows[k] = static_cast<Eigen::Index>(k * n / m);
    std::vector<double> dist;
    dist.reserve(m * (m - 1) / 2);
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = a + 1; b < m; ++b) dist.push_back((x.row(rows[a]) - x.row(rows[b])).norm());
    if (dist.empty()) return 1.0;
    auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
    std::nth_element(dist.begin(), mid, dist.end());
    double med = *mid;
    if (!(med > 0.0)) {
        // Heavy ties: fall back to the mean positive distance.
        double s = 0.0;
        std::size_t c = 0;
        for (double v : dist)
            if (v > 0.0) {
                s += v;
                ++c;
            }
        med = c ? s / static_cast<double>(c) : 1.0;
    }
    return med;
}

/// Dense Gaussian Gram matrix exp(-|a-b|^2 / (2 sigma^2)).
inline Eigen::MatrixXd gaussian_gram(const Eigen::Ref<const Eigen::MatrixXd>& x, double sigma) {
    const Eigen::Index n = x.rows();
    const double g = 1.0 / (2.0 * sigma * sigma);
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index a = 0; a < n; ++a) {
        k(a, a) = 1.0;
        for (Eigen::Index b = a + 1; b < n; ++b) k(a, b) = k(b, a) = std::exp(-g * (x.row(a) - x.row(b)).squaredNorm());
    }
    return k;
}

/// Pivoted incomplete Cholesky of the Gaussian Gram matrix: K ~= G G^T with
/// G of shape n x r. Stops once the residual trace falls to tol * n or the
/// rank reaches max_rank.
inline Eigen::MatrixXd incomplete_cholesky(const Eigen::Ref<const Eigen::MatrixXd>& x, double sigma, double tol,
                                           std::size_t max_rank) {
    const Eigen::Index n = x.rows();
    const Eigen::Index cap = std::min<Eigen::Index>(n, static_cast<Eigen::Index>(std::max<std::size_t>(max_rank, 1)));
    const double g = 1.0 / (2.0 * sigma * sigma);
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, cap);
    Eigen::VectorXd diag = Eigen::VectorXd::Ones(n);
    const double stop = tol * static_cast<double>(n);
    Eigen::Index r = 0;
    for (; r < cap; ++r) {
        if (diag.sum() <= stop) break;
        Eigen::Index p = 0;
        const double piv = diag.maxCoeff(&p);
        if (!(piv > 1e-12)) break;
        const double root = std::sqrt(piv);
        Eigen::VectorXd col(n);
        for (Eigen::Index a = 0; a < n; ++a) col(a) = std::exp(-g * (x.row(a) - x.row(p)).squaredNorm());
        if (r > 0) col.noalias() -= G.leftCols(r) * G.row(p).head(r).transpose();
        G.col(r) = col / root;
        G(p, r) = root;
        diag -= G.col(r).cwiseAbs2();
        diag = diag.cwiseMax(0.0);
        diag(p) = 0.0;
    }
    return G.leftCols(r);
}

/// Subtracts column means: the factor of H K H where H is the centering matrix.
inline Eigen::MatrixXd center_columns(Eigen::MatrixXd g) {
    if (g.rows() > 0) g.rowwise() -= g.colwise().mean();
    return g;
}

/// Sorted subset of `cap` row indices out of n, drawn uniformly.
inline std::vector<Eigen::Index> subsample_rows(std::size_t n, std::size_t cap, std::uint64_t seed) {
    std::vector<Eigen::Index> idx(n);
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    if (cap >= n) return idx;
    Rng rng = make_rng(derive_seed(seed, 0x5ab5ab));
    for (std::size_t k = 0; k < cap; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, n - 1);
        std::swap(idx[k], idx[pick(rng)]);
    }
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace kernels
}  // namespace htcit
