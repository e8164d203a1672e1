// Hierarchical topological ordering from two time slices.
//
// For every variable i the earlier-slice copy X_i^tau acts as an instrument
// for X_i^t: given a suitable conditioning set of earlier-slice variables,
// X_i^tau is dependent on X_j^t exactly when j is a descendant of i. One test
// per ordered pair yields the p-value matrix P and the descendant graph
// A(i, j) = [P(i, j) <= alpha]. Layers are then peeled off bottom-up (leaves
// first); whenever the remaining nodes have no leaf, the weakest surviving
// edge among them is deleted until one appears.
#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "htcit/graph.hpp"
#include "htcit/kerneltest.hpp"
#include "htcit/simgen.hpp"

namespace htcit {

/// Source of independence p-values over the variables of a two-slice dataset.
template <class T>
concept IndependenceOracle = requires(T& o, std::size_t i, std::size_t j, std::span<const std::size_t> s) {
    { o.num_variables() } -> std::convertible_to<std::size_t>;
    // X_i^tau versus X_j^tau, unconditionally.
    { o.slice_pvalue(i, j) } -> std::convertible_to<double>;
    // X_i^tau versus X_j^t given X_s^tau.
    { o.lagged_pvalue(i, j, s) } -> std::convertible_to<double>;
};

/// A failed test, tagged with the pair that triggered it.
class PairTestError : public std::runtime_error {
public:
    PairTestError(std::size_t i, std::size_t j, const std::string& what)
        : std::runtime_error("test (" + std::to_string(i) + ", " + std::to_string(j) + "): " + what), i_(i), j_(j) {}
    std::size_t first() const noexcept { return i_; }
    std::size_t second() const noexcept { return j_; }

private:
    std::size_t i_, j_;
};

enum class Method { HTCIT, HTIT };
enum class TestMode { CIT, IT };

/// How the conditioning set of a non-intervened variable is chosen.
enum class ConditioningRule {
    /// Every earlier-slice variable connected to X_i^tau through a chain of
    /// pairwise dependencies.
    DependenceClosure,
    /// Only the earlier-slice variables directly dependent on X_i^tau.
    DirectDependence,
};

inline const char* to_string(Method m) { return m == Method::HTCIT ? "htcit" : "htit"; }
inline Method parse_method(const std::string& s) {
    if (s == "htcit" || s == "HTCIT" || s == "HT-CIT") return Method::HTCIT;
    if (s == "htit" || s == "HTIT" || s == "HT-IT") return Method::HTIT;
    throw std::invalid_argument("unknown method '" + s + "' (expected htcit or htit)");
}
inline const char* to_string(ConditioningRule r) {
    return r == ConditioningRule::DependenceClosure ? "closure" : "direct";
}
inline ConditioningRule parse_conditioning_rule(const std::string& s) {
    if (s == "closure") return ConditioningRule::DependenceClosure;
    if (s == "direct") return ConditioningRule::DirectDependence;
    throw std::invalid_argument("unknown conditioning rule '" + s + "' (expected closure or direct)");
}

struct ConditioningPlan {
    std::vector<std::vector<std::size_t>> cond_set;
    std::vector<TestMode> mode;
    std::size_t size() const { return cond_set.size(); }
};

struct PValueMatrix {
    Eigen::MatrixXd p;
    double alpha = 0.01;
    std::size_t size() const { return static_cast<std::size_t>(p.rows()); }
};

struct OrderingGraph {
    BinaryMatrix a_tp;  // a_tp(i, j): j is a descendant of i
    PValueMatrix derived_from;
    std::size_t size() const { return a_tp.size(); }
};

/// layers[0] holds the leaves; layer_of[i] indexes into layers.
struct LayeredOrdering {
    std::vector<std::vector<std::size_t>> layers;
    std::vector<std::size_t> layer_of;
};

struct OrderingOptions {
    Method method = Method::HTCIT;
    ConditioningRule rule = ConditioningRule::DependenceClosure;
};

inline void validate_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha <= 0.5)) throw std::invalid_argument("alpha must lie in (0, 0.5]");
}

inline OrderingGraph threshold(PValueMatrix pm) {
    OrderingGraph og;
    const std::size_t d = pm.size();
    og.a_tp = BinaryMatrix(d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) og.a_tp.set(i, j, i != j && pm.p(i, j) <= pm.alpha);
    og.derived_from = std::move(pm);
    return og;
}

/// Chooses the earlier-slice conditioning set for each variable. Intervened
/// variables (and every variable under Method::HTIT) get an empty set and
/// are tested marginally.
template <IndependenceOracle Oracle>
ConditioningPlan build_conditioning_plan(Oracle& oracle, const std::vector<bool>& intervened, double alpha,
                                         const OrderingOptions& opts = {}) {
    validate_alpha(alpha);
    const std::size_t d = oracle.num_variables();
    if (intervened.size() != d) throw std::invalid_argument("build_conditioning_plan: intervened flags must have length d");

    ConditioningPlan plan;
    plan.cond_set.assign(d, {});
    plan.mode.assign(d, TestMode::IT);
    if (opts.method == Method::HTIT) return plan;

    bool needs_tests = false;
    for (std::size_t i = 0; i < d; ++i) {
        if (!intervened[i]) {
            plan.mode[i] = TestMode::CIT;
            needs_tests = true;
        }
    }
    if (!needs_tests) return plan;

    BinaryMatrix dep(d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i + 1; j < d; ++j) {
            double p = 1.0;
            try {
                p = oracle.slice_pvalue(i, j);
            } catch (const std::exception& ex) {
                throw PairTestError(i, j, ex.what());
            }
            if (p <= alpha) {
                dep.set(i, j);
                dep.set(j, i);
            }
        }
    }

    std::vector<std::size_t> component(d, d);
    if (opts.rule == ConditioningRule::DependenceClosure) {
        for (std::size_t s = 0; s < d; ++s) {
            if (component[s] != d) continue;
            std::vector<std::size_t> stack{s};
            component[s] = s;
            while (!stack.empty()) {
                const std::size_t v = stack.back();
                stack.pop_back();
                for (std::size_t w = 0; w < d; ++w)
                    if (dep(v, w) && component[w] == d) {
                        component[w] = s;
                        stack.push_back(w);
                    }
            }
        }
    }

    for (std::size_t i = 0; i < d; ++i) {
        if (plan.mode[i] != TestMode::CIT) continue;
        for (std::size_t j = 0; j < d; ++j) {
            if (j == i) continue;
            const bool member = opts.rule == ConditioningRule::DependenceClosure ? component[j] == component[i] : dep(i, j);
            if (member) plan.cond_set[i].push_back(j);
        }
    }
    return plan;
}

/// One test per ordered pair i != j: P(i, j) = p-value of X_i^tau vs X_j^t
/// given the planned conditioning set of i. The diagonal is fixed at 1.
template <IndependenceOracle Oracle>
std::pair<PValueMatrix, OrderingGraph> build_ordering(Oracle& oracle, const ConditioningPlan& plan, double alpha) {
    validate_alpha(alpha);
    const std::size_t d = oracle.num_variables();
    if (plan.size() != d) throw std::invalid_argument("build_ordering: plan does not match the number of variables");
    PValueMatrix pm{Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)), alpha};
    for (std::size_t i = 0; i < d; ++i) {
        const std::span<const std::size_t> cond(plan.cond_set[i]);
        for (std::size_t j = 0; j < d; ++j) {
            if (i == j) continue;
            double p = 1.0;
            try {
                p = oracle.lagged_pvalue(i, j, cond);
            } catch (const std::exception& ex) {
                throw PairTestError(i, j, ex.what());
            }
            if (!(p >= 0.0 && p <= 1.0)) throw PairTestError(i, j, "p-value outside [0, 1]");
            pm.p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = p;
        }
    }
    OrderingGraph og = threshold(pm);
    return {std::move(pm), std::move(og)};
}

/// Peels layers of leaves off the ordering graph. While the unassigned nodes
/// contain no leaf, the surviving edge among them with the largest p-value
/// (ties: smallest (i, j)) is deleted and its p-value raised to 2 alpha.
/// Returns the layering and the repaired, acyclic ordering graph.
inline std::pair<LayeredOrdering, OrderingGraph> adjust_layers(const PValueMatrix& pm, const OrderingGraph& og) {
    const std::size_t d = og.size();
    if (pm.size() != d) throw std::invalid_argument("adjust_layers: p-value matrix does not match the ordering graph");
    OrderingGraph out = og;
    out.derived_from = pm;
    BinaryMatrix& a = out.a_tp;
    Eigen::MatrixXd& p = out.derived_from.p;
    const double alpha = pm.alpha;

    LayeredOrdering lo;
    lo.layer_of.assign(d, 0);
    std::vector<char> assigned(d, 0);
    std::size_t remaining = d;

    auto collect_leaves = [&] {
        std::vector<std::size_t> leaves;
        for (std::size_t i = 0; i < d; ++i) {
            if (assigned[i]) continue;
            bool leaf = true;
            for (std::size_t j = 0; j < d && leaf; ++j)
                if (j != i && !assigned[j] && a(i, j)) leaf = false;
            if (leaf) leaves.push_back(i);
        }
        return leaves;
    };

    while (remaining > 0) {
        auto layer = collect_leaves();
        while (layer.empty()) {
            std::size_t bi = d, bj = d;
            double best = -1.0;
            for (std::size_t i = 0; i < d; ++i) {
                if (assigned[i]) continue;
                for (std::size_t j = 0; j < d; ++j) {
                    if (j == i || assigned[j] || !a(i, j)) continue;
                    const double v = p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                    if (v > best) {
                        best = v;
                        bi = i;
                        bj = j;
                    }
                }
            }
            // No edge left means every unassigned node is a leaf.
            if (bi == d) break;
            p(static_cast<Eigen::Index>(bi), static_cast<Eigen::Index>(bj)) = 2.0 * alpha;
            a.set(bi, bj, false);
            layer = collect_leaves();
        }
        const std::size_t k = lo.layers.size();
        for (std::size_t v : layer) {
            assigned[v] = 1;
            lo.layer_of[v] = k;
        }
        remaining -= layer.size();
        lo.layers.push_back(std::move(layer));
    }
    return {std::move(lo), std::move(out)};
}

struct OrderingResult {
    ConditioningPlan plan;
    PValueMatrix initial_p;
    OrderingGraph initial;  // before layer adjustment
    PValueMatrix p;         // after repairs
    OrderingGraph graph;    // repaired, acyclic
    LayeredOrdering layers;
};

template <IndependenceOracle Oracle>
OrderingResult discover_ordering(Oracle& oracle, const std::vector<bool>& intervened, double alpha,
                                 const OrderingOptions& opts = {}) {
    OrderingResult r;
    r.plan = build_conditioning_plan(oracle, intervened, alpha, opts);
    auto [pm, og] = build_ordering(oracle, r.plan, alpha);
    r.initial_p = pm;
    r.initial = og;
    auto [layers, repaired] = adjust_layers(pm, og);
    r.layers = std::move(layers);
    r.p = repaired.derived_from;
    r.graph = std::move(repaired);
    return r;
}

// ---------------------------------------------------------------------------
// Oracles

/// Kernel tests on a dataset. Gram factors are cached per column, and the
/// conditional context for the most recent (i, conditioning set) is reused
/// across the j loop.
class KernelOracle {
public:
    KernelOracle(const TwoSliceDataset& data, KernelConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        data.validate();
        if (data.n() < 20) throw std::invalid_argument("kernel tests need at least 20 samples");
        std::vector<Eigen::Index> rows;
        if (cfg_.subsample_cap && data.n() > *cfg_.subsample_cap)
            rows = kernels::subsample_rows(data.n(), *cfg_.subsample_cap, cfg_.seed);
        else
            rows = kernels::subsample_rows(data.n(), data.n(), cfg_.seed);
        x_tau_ = detail::gather_rows(data.x_tau, rows);
        x_t_ = detail::gather_rows(data.x_t, rows);
        tau_factors_.resize(data.d());
        t_factors_.resize(data.d());
    }

    std::size_t num_variables() const { return static_cast<std::size_t>(x_tau_.cols()); }
    std::size_t n() const { return static_cast<std::size_t>(x_tau_.rows()); }

    double slice_pvalue(std::size_t i, std::size_t j) {
        return hsic_from_factors(tau_factor(i), tau_factor(j), cfg_).p_value;
    }

    double lagged_pvalue(std::size_t i, std::size_t j, std::span<const std::size_t> cond) {
        if (cond.empty()) return hsic_from_factors(tau_factor(i), t_factor(j), cfg_).p_value;
        const std::vector<std::size_t> key(cond.begin(), cond.end());
        if (!ctx_ || ctx_i_ != i || ctx_cond_ != key) {
            Eigen::MatrixXd z(x_tau_.rows(), static_cast<Eigen::Index>(key.size()));
            for (std::size_t k = 0; k < key.size(); ++k)
                z.col(static_cast<Eigen::Index>(k)) = x_tau_.col(static_cast<Eigen::Index>(key[k]));
            const Eigen::VectorXd xi = x_tau_.col(static_cast<Eigen::Index>(i));
            ctx_.emplace(std::span<const double>(xi.data(), static_cast<std::size_t>(xi.size())), z, cfg_);
            ctx_i_ = i;
            ctx_cond_ = key;
        }
        const TestResult r = ctx_->test(t_factor(j));
        if (r.warning) ++warnings_;
        return r.p_value;
    }

    std::size_t warnings() const noexcept { return warnings_; }

private:
    const KernelFactor& factor(std::vector<std::optional<KernelFactor>>& cache, const Eigen::MatrixXd& m,
                               std::size_t c, const char* what) {
        if (!cache[c]) {
            const Eigen::VectorXd col = m.col(static_cast<Eigen::Index>(c));
            cache[c] = make_kernel_factor(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())),
                                          cfg_, what);
        }
        return *cache[c];
    }
    const KernelFactor& tau_factor(std::size_t c) { return factor(tau_factors_, x_tau_, c, "earlier-slice column"); }
    const KernelFactor& t_factor(std::size_t c) { return factor(t_factors_, x_t_, c, "later-slice column"); }

    KernelConfig cfg_;
    Eigen::MatrixXd x_tau_, x_t_;
    std::vector<std::optional<KernelFactor>> tau_factors_, t_factors_;
    std::optional<KciContext> ctx_;
    std::size_t ctx_i_ = 0;
    std::vector<std::size_t> ctx_cond_;
    std::size_t warnings_ = 0;
};

/// Exact answers read off the time-unrolled causal graph: nodes (s, v) for
/// s = 0..t, lag edges (s-1, v) -> (s, v), instantaneous edges within every
/// slice s >= 1, and incoming edges cut at (tau, v) for intervened v.
/// p = 0 for d-connected pairs and 1 for d-separated ones.
class DSeparationOracle {
public:
    DSeparationOracle(const Dag& truth, std::size_t tau, std::size_t t, std::vector<bool> intervened = {})
        : d_(truth.size()), tau_(tau), t_(t) {
        if (tau >= t) throw std::invalid_argument("DSeparationOracle: need tau < t");
        if (intervened.empty()) intervened.assign(d_, false);
        if (intervened.size() != d_) throw std::invalid_argument("DSeparationOracle: intervened flags must have length d");
        unrolled_ = BinaryMatrix((t + 1) * d_);
        for (std::size_t s = 1; s <= t; ++s) {
            for (std::size_t v = 0; v < d_; ++v) {
                if (s == tau && intervened[v]) continue;
                unrolled_.set(node(s - 1, v), node(s, v));
                for (std::size_t p : truth.parents(v)) unrolled_.set(node(s, p), node(s, v));
            }
        }
    }

    std::size_t num_variables() const { return d_; }
    const BinaryMatrix& unrolled() const { return unrolled_; }
    std::size_t node(std::size_t slice, std::size_t v) const { return slice * d_ + v; }

    double slice_pvalue(std::size_t i, std::size_t j) const {
        return d_separated(unrolled_, node(tau_, i), node(tau_, j), {}) ? 1.0 : 0.0;
    }

    double lagged_pvalue(std::size_t i, std::size_t j, std::span<const std::size_t> cond) const {
        std::vector<std::size_t> z;
        z.reserve(cond.size());
        for (std::size_t c : cond) z.push_back(node(tau_, c));
        return d_separated(unrolled_, node(tau_, i), node(t_, j), z) ? 1.0 : 0.0;
    }

private:
    std::size_t d_, tau_, t_;
    BinaryMatrix unrolled_;
};

inline OrderingResult discover_ordering(const TwoSliceDataset& data, const KernelConfig& kcfg, double alpha,
                                        const OrderingOptions& opts = {}) {
    KernelOracle oracle(data, kcfg);
    return discover_ordering(oracle, data.intervened, alpha, opts);
}

}  // namespace htcit
