// Structural comparison of an estimated DAG against the ground truth.
#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "htcit/graph.hpp"

namespace htcit {

namespace detail {
inline void require_same_size(const BinaryMatrix& a, const BinaryMatrix& b, const char* what) {
    if (a.size() != b.size()) throw std::invalid_argument(std::string(what) + ": graphs have different node counts");
}
}  // namespace detail

/// Structural Hamming distance over unordered node pairs: a pair counts once
/// when its status (absent, i->j, j->i) differs, so a reversal costs 1.
inline std::size_t shd(const BinaryMatrix& est, const BinaryMatrix& truth) {
    detail::require_same_size(est, truth, "shd");
    std::size_t s = 0;
    for (std::size_t i = 0; i < est.size(); ++i)
        for (std::size_t j = i + 1; j < est.size(); ++j)
            if (est(i, j) != truth(i, j) || est(j, i) != truth(j, i)) ++s;
    return s;
}
inline std::size_t shd(const Dag& est, const Dag& truth) { return shd(est.adjacency(), truth.adjacency()); }

/// Structural intervention distance: the number of ordered pairs (i, j),
/// i != j, for which adjusting for the parents of i in `est` does not give
/// the interventional distribution of j under do(i) implied by `truth`.
///
/// When j is a parent of i in est, est claims no effect; that is wrong iff j
/// is a descendant of i in truth. Otherwise Z = pa_est(i) must be a valid
/// adjustment set in truth: no member of Z may be, or descend from, a node
/// other than i on a directed i -> j path, and Z must d-separate i and j
/// once the first edges of those directed paths are removed.
inline std::size_t sid(const BinaryMatrix& est, const BinaryMatrix& truth) {
    detail::require_same_size(est, truth, "sid");
    if (!is_acyclic(est) || !is_acyclic(truth)) throw std::invalid_argument("sid: inputs must be acyclic");
    const std::size_t d = truth.size();
    const BinaryMatrix reach = reachability(truth);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < d; ++i) {
        const std::vector<std::size_t> z = est.column(i);
        for (std::size_t j = 0; j < d; ++j) {
            if (j == i) continue;
            if (est(j, i)) {
                if (reach(i, j)) ++wrong;
                continue;
            }
            // Nodes w != i on a directed path i -> ... -> j.
            bool valid = true;
            for (std::size_t w = 0; w < d && valid; ++w) {
                if (!reach(i, w) || !(w == j || reach(w, j))) continue;
                for (std::size_t v : z)
                    if (v == w || reach(w, v)) {
                        valid = false;
                        break;
                    }
            }
            if (valid) {
                BinaryMatrix cut = truth;
                for (std::size_t c = 0; c < d; ++c)
                    if (truth(i, c) && (c == j || reach(c, j))) cut.set(i, c, false);
                valid = d_separated(cut, i, j, z);
            }
            if (!valid) ++wrong;
        }
    }
    return wrong;
}
inline std::size_t sid(const Dag& est, const Dag& truth) { return sid(est.adjacency(), truth.adjacency()); }

/// Harmonic mean of directed-edge precision and recall. Two empty graphs
/// score 1; exactly one empty graph scores 0.
inline double f1(const BinaryMatrix& est, const BinaryMatrix& truth) {
    detail::require_same_size(est, truth, "f1");
    const std::size_t ne = est.count(), nt = truth.count();
    if (ne == 0 && nt == 0) return 1.0;
    if (ne == 0 || nt == 0) return 0.0;
    std::size_t tp = 0;
    for (std::size_t i = 0; i < est.size(); ++i)
        for (std::size_t j = 0; j < est.size(); ++j)
            if (est(i, j) && truth(i, j)) ++tp;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(ne + nt);
}
inline double f1(const Dag& est, const Dag& truth) { return f1(est.adjacency(), truth.adjacency()); }

/// Frobenius norm of the adjacency difference. A reversal contributes two
/// differing entries (sqrt 2), unlike shd.
inline double dis(const BinaryMatrix& est, const BinaryMatrix& truth) {
    detail::require_same_size(est, truth, "dis");
    std::size_t diff = 0;
    for (std::size_t i = 0; i < est.size(); ++i)
        for (std::size_t j = 0; j < est.size(); ++j)
            if (est(i, j) != truth(i, j)) ++diff;
    return std::sqrt(static_cast<double>(diff));
}
inline double dis(const Dag& est, const Dag& truth) { return dis(est.adjacency(), truth.adjacency()); }

/// Edges of the ordering graph removed by pruning.
inline std::size_t n_prune(const BinaryMatrix& ordering, const BinaryMatrix& final_graph) {
    detail::require_same_size(ordering, final_graph, "n_prune");
    if (!final_graph.subset_of(ordering)) throw std::invalid_argument("n_prune: final graph is not a subgraph of the ordering");
    return ordering.count() - final_graph.count();
}

}  // namespace htcit
