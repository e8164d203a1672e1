// Random DAGs and two-time-slice data from the additive-noise time-series
// model
//
//   X_i^s = f(pa_i^s) + f(X_i^{s-1}) + eps_i^s,   X^0 ~ init,
//
// where f sums an elementwise nonlinearity over its arguments.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "htcit/graph.hpp"
#include "htcit/rng.hpp"

namespace htcit {

enum class Link { Sin, Sigmoid, Poly };
enum class Noise { Gaussian, Laplace, Uniform };

inline const char* to_string(Link l) {
    switch (l) {
        case Link::Sin: return "sin";
        case Link::Sigmoid: return "sigmoid";
        case Link::Poly: return "poly";
    }
    return "?";
}

inline const char* to_string(Noise n) {
    switch (n) {
        case Noise::Gaussian: return "gaussian";
        case Noise::Laplace: return "laplace";
        case Noise::Uniform: return "uniform";
    }
    return "?";
}

inline Link parse_link(const std::string& s) {
    if (s == "sin" || s == "Sin") return Link::Sin;
    if (s == "sigmoid" || s == "Sigmoid") return Link::Sigmoid;
    if (s == "poly" || s == "Poly") return Link::Poly;
    throw std::invalid_argument("unknown link function '" + s + "' (expected sin, sigmoid or poly)");
}

inline Noise parse_noise(const std::string& s) {
    if (s == "gaussian" || s == "Gaussian" || s == "gauss") return Noise::Gaussian;
    if (s == "laplace" || s == "Laplace") return Noise::Laplace;
    if (s == "uniform" || s == "Uniform") return Noise::Uniform;
    throw std::invalid_argument("unknown noise family '" + s + "' (expected gaussian, laplace or uniform)");
}

/// Elementwise nonlinearity used for both the instantaneous and lagged terms.
inline double apply_link(Link l, double x) {
    switch (l) {
        case Link::Sin: return std::sin(x);
        case Link::Sigmoid: return 3.0 / (1.0 + std::exp(-x));
        case Link::Poly: return (x + 2.0) * (x + 2.0) / 10.0;
    }
    return 0.0;
}

struct ScmConfig {
    std::size_t d = 10;
    std::size_t e = 10;
    Link link = Link::Sin;
    Noise noise = Noise::Gaussian;
    std::size_t tau = 1;  // earlier slice
    std::size_t t = 2;    // later slice
    double intervention_fraction = 0.0;
    std::size_t n = 1000;
    std::uint64_t seed = 0;

    void validate() const {
        if (d == 0) throw std::invalid_argument("ScmConfig: d must be >= 1");
        if (e > d * (d - 1) / 2)
            throw std::invalid_argument("ScmConfig: e = " + std::to_string(e) + " exceeds d(d-1)/2 = " +
                                        std::to_string(d * (d - 1) / 2));
        if (t < 1 || tau >= t) throw std::invalid_argument("ScmConfig: slices must satisfy 0 <= tau < t, t >= 1");
        if (!(intervention_fraction >= 0.0 && intervention_fraction <= 1.0))
            throw std::invalid_argument("ScmConfig: intervention_fraction must lie in [0, 1]");
        if (n < 1) throw std::invalid_argument("ScmConfig: n must be >= 1");
    }
};

/// Paired samples of the same d variables at two time indices.
struct TwoSliceDataset {
    Eigen::MatrixXd x_tau;  // n x d
    Eigen::MatrixXd x_t;    // n x d
    std::vector<bool> intervened;
    std::vector<std::string> labels;
    std::optional<Dag> truth;

    std::size_t n() const { return static_cast<std::size_t>(x_tau.rows()); }
    std::size_t d() const { return static_cast<std::size_t>(x_tau.cols()); }

    bool any_intervened() const { return std::find(intervened.begin(), intervened.end(), true) != intervened.end(); }

    void validate() const {
        if (x_tau.rows() != x_t.rows() || x_tau.cols() != x_t.cols())
            throw std::invalid_argument("TwoSliceDataset: slices have different shapes");
        if (intervened.size() != d()) throw std::invalid_argument("TwoSliceDataset: intervened flags must have length d");
        if (!labels.empty() && labels.size() != d())
            throw std::invalid_argument("TwoSliceDataset: label count does not match d");
        if (truth && truth->size() != d()) throw std::invalid_argument("TwoSliceDataset: truth has wrong node count");
    }
};

/// Erdos-Renyi G(d, e) DAG: e distinct pairs drawn uniformly, each oriented
/// along a uniformly random node permutation.
inline Dag sample_dag(std::size_t d, std::size_t e, std::uint64_t seed) {
    const std::size_t pairs = d * (d > 0 ? d - 1 : 0) / 2;
    if (e > pairs)
        throw std::invalid_argument("sample_dag: e = " + std::to_string(e) + " exceeds d(d-1)/2 = " +
                                    std::to_string(pairs));
    Rng rng = make_rng(seed);
    std::vector<std::size_t> perm(d);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::size_t> rank(d);
    for (std::size_t k = 0; k < d; ++k) rank[perm[k]] = k;

    // Partial Fisher-Yates over pair indices.
    std::vector<std::size_t> idx(pairs);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t k = 0; k < e; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, pairs - 1);
        std::swap(idx[k], idx[pick(rng)]);
    }

    BinaryMatrix adj(d);
    for (std::size_t k = 0; k < e; ++k) {
        // Decode pair index into (a, b), a < b, row-major over the upper triangle.
        std::size_t p = idx[k], a = 0;
        while (p >= d - 1 - a) {
            p -= d - 1 - a;
            ++a;
        }
        const std::size_t b = a + 1 + p;
        if (rank[a] < rank[b])
            adj.set(a, b);
        else
            adj.set(b, a);
    }
    return Dag(std::move(adj));
}

namespace detail {

// Standard Laplace by inversion.
inline double draw_laplace(Rng& rng) {
    double u = 0.0;
    do {
        u = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
    } while (std::abs(u) >= 0.5);
    return -std::copysign(1.0, u) * std::log1p(-2.0 * std::abs(u));
}

inline double draw_init(Noise family, Rng& rng) {
    switch (family) {
        case Noise::Gaussian: return std::normal_distribution<double>(0.0, 1.0)(rng);
        case Noise::Laplace: return draw_laplace(rng);
        case Noise::Uniform: return std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    }
    return 0.0;
}

inline double draw_noise(Noise family, Rng& rng) {
    switch (family) {
        case Noise::Gaussian: return std::normal_distribution<double>(0.0, std::sqrt(0.4))(rng);
        case Noise::Laplace: return draw_laplace(rng) / std::sqrt(2.0);
        case Noise::Uniform: return std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    }
    return 0.0;
}

}  // namespace detail

/// Hook invoked once per rollout step with the graph used for that step.
using RolloutObserver = std::function<void(std::size_t step, const Dag&)>;

/// Rolls the model forward from X^0 for t steps and returns slices tau and t.
///
/// Intervened variables (a uniformly chosen floor(fraction * d) subset) take
/// a fresh draw from the init distribution at step tau instead of their
/// structural equation; later steps and same-step children see that value.
inline TwoSliceDataset simulate(const ScmConfig& cfg, const Dag& dag, const RolloutObserver& observe = {}) {
    cfg.validate();
    if (dag.size() != cfg.d) throw std::invalid_argument("simulate: DAG node count does not match cfg.d");
    const std::size_t d = cfg.d, n = cfg.n;

    Rng subset_rng = make_rng(derive_seed(cfg.seed, 0));
    Rng rng = make_rng(derive_seed(cfg.seed, 1));

    std::vector<bool> intervened(d, false);
    {
        const auto k = static_cast<std::size_t>(std::floor(cfg.intervention_fraction * static_cast<double>(d) + 1e-12));
        std::vector<std::size_t> nodes(d);
        std::iota(nodes.begin(), nodes.end(), std::size_t{0});
        std::shuffle(nodes.begin(), nodes.end(), subset_rng);
        for (std::size_t q = 0; q < std::min(k, d); ++q) intervened[nodes[q]] = true;
    }

    const auto order = dag.topological_order();
    std::vector<std::vector<std::size_t>> parents(d);
    for (std::size_t j = 0; j < d; ++j) parents[j] = dag.parents(j);

    // Column-major n x d; column i holds variable i.
    Eigen::MatrixXd prev(n, d), cur(n, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t r = 0; r < n; ++r) prev(r, i) = detail::draw_init(cfg.noise, rng);

    TwoSliceDataset out;
    out.labels = dag.labels();
    out.truth = dag;
    out.intervened = intervened;

    if (cfg.tau == 0) {
        out.x_tau = prev;  // X^0 is itself a draw from init, intervened or not.
    }
    for (std::size_t step = 1; step <= cfg.t; ++step) {
        if (observe) observe(step, dag);
        for (std::size_t i : order) {
            if (step == cfg.tau && intervened[i]) {
                for (std::size_t r = 0; r < n; ++r) cur(r, i) = detail::draw_init(cfg.noise, rng);
                continue;
            }
            for (std::size_t r = 0; r < n; ++r) {
                double v = apply_link(cfg.link, prev(r, i));
                for (std::size_t p : parents[i]) v += apply_link(cfg.link, cur(r, p));
                cur(r, i) = v + detail::draw_noise(cfg.noise, rng);
            }
        }
        if (step == cfg.tau) out.x_tau = cur;
        if (step == cfg.t) out.x_t = cur;
        std::swap(prev, cur);
    }
    return out;
}

}  // namespace htcit
