// Dense directed graphs over a fixed node set, plus the handful of graph
// algorithms the discovery pipeline and the evaluation metrics need.
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace htcit {

/// Row-major square 0/1 matrix. Entry (i, j) set means an edge i -> j.
class BinaryMatrix {
public:
    BinaryMatrix() = default;
    explicit BinaryMatrix(std::size_t n) : n_(n), cells_(n * n, 0) {}

    std::size_t size() const noexcept { return n_; }

    bool operator()(std::size_t i, std::size_t j) const { return cells_[i * n_ + j] != 0; }
    void set(std::size_t i, std::size_t j, bool on = true) { cells_[i * n_ + j] = on ? 1 : 0; }

    std::size_t count() const {
        return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
    }

    bool diagonal_zero() const {
        for (std::size_t i = 0; i < n_; ++i)
            if ((*this)(i, i)) return false;
        return true;
    }

    /// Edge set containment: every edge of *this is an edge of other.
    bool subset_of(const BinaryMatrix& other) const {
        if (other.n_ != n_) return false;
        for (std::size_t k = 0; k < cells_.size(); ++k)
            if (cells_[k] && !other.cells_[k]) return false;
        return true;
    }

    std::vector<std::size_t> row(std::size_t i) const {
        std::vector<std::size_t> out;
        for (std::size_t j = 0; j < n_; ++j)
            if ((*this)(i, j)) out.push_back(j);
        return out;
    }

    std::vector<std::size_t> column(std::size_t j) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < n_; ++i)
            if ((*this)(i, j)) out.push_back(i);
        return out;
    }

    std::vector<std::vector<int>> to_nested() const {
        std::vector<std::vector<int>> out(n_, std::vector<int>(n_, 0));
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j) out[i][j] = (*this)(i, j) ? 1 : 0;
        return out;
    }

    static BinaryMatrix from_nested(const std::vector<std::vector<int>>& rows) {
        BinaryMatrix m(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != rows.size())
                throw std::invalid_argument("adjacency matrix is not square");
            for (std::size_t j = 0; j < rows.size(); ++j) {
                if (rows[i][j] != 0 && rows[i][j] != 1)
                    throw std::invalid_argument("adjacency entries must be 0 or 1");
                m.set(i, j, rows[i][j] == 1);
            }
        }
        return m;
    }

    friend bool operator==(const BinaryMatrix&, const BinaryMatrix&) = default;

private:
    std::size_t n_ = 0;
    std::vector<std::uint8_t> cells_;
};

/// Kahn's algorithm. Returns an empty vector when the graph has a cycle
/// (and is nonempty).
inline std::vector<std::size_t> topological_order(const BinaryMatrix& g) {
    const std::size_t n = g.size();
    std::vector<std::size_t> indeg(n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (g(i, j)) ++indeg[j];
    std::deque<std::size_t> ready;
    for (std::size_t v = 0; v < n; ++v)
        if (indeg[v] == 0) ready.push_back(v);
    std::vector<std::size_t> order;
    order.reserve(n);
    while (!ready.empty()) {
        const std::size_t v = ready.front();
        ready.pop_front();
        order.push_back(v);
        for (std::size_t w = 0; w < n; ++w)
            if (g(v, w) && --indeg[w] == 0) ready.push_back(w);
    }
    if (order.size() != n) order.clear();
    return order;
}

inline bool is_acyclic(const BinaryMatrix& g) {
    return g.size() == 0 || topological_order(g).size() == g.size();
}

/// Strict reachability: r(i, j) iff there is a directed path of length >= 1
/// from i to j. On a DAG the diagonal stays zero.
inline BinaryMatrix reachability(const BinaryMatrix& g) {
    const std::size_t n = g.size();
    BinaryMatrix r(n);
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < n; ++s) {
        stack.assign(1, s);
        while (!stack.empty()) {
            const std::size_t v = stack.back();
            stack.pop_back();
            for (std::size_t w = 0; w < n; ++w) {
                if (g(v, w) && !r(s, w)) {
                    r.set(s, w);
                    stack.push_back(w);
                }
            }
        }
    }
    return r;
}

/// Number of edges on the longest directed path from each node to a sink.
/// Requires an acyclic graph.
inline std::vector<std::size_t> longest_path_to_sink(const BinaryMatrix& g) {
    auto order = topological_order(g);
    if (order.size() != g.size()) throw std::invalid_argument("longest_path_to_sink: graph has a cycle");
    std::vector<std::size_t> depth(g.size(), 0);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        for (std::size_t w = 0; w < g.size(); ++w)
            if (g(*it, w)) depth[*it] = std::max(depth[*it], depth[w] + 1);
    return depth;
}

/// d-separation of node sets xs and ys given zs, by the reachable-trail
/// ("Bayes ball") traversal. Nodes in xs must not be in zs.
inline bool d_separated(const BinaryMatrix& g, std::span<const std::size_t> xs,
                        std::span<const std::size_t> ys, std::span<const std::size_t> zs) {
    const std::size_t n = g.size();
    std::vector<char> in_z(n, 0), anc_z(n, 0);
    for (auto z : zs) in_z[z] = 1;

    // Ancestors of the conditioning set, inclusive.
    std::vector<std::size_t> stack(zs.begin(), zs.end());
    for (auto z : zs) anc_z[z] = 1;
    while (!stack.empty()) {
        const std::size_t v = stack.back();
        stack.pop_back();
        for (std::size_t p = 0; p < n; ++p)
            if (g(p, v) && !anc_z[p]) {
                anc_z[p] = 1;
                stack.push_back(p);
            }
    }

    // Direction 0: arrived from a child (moving up); 1: arrived from a parent.
    std::vector<char> seen(2 * n, 0), reached(n, 0);
    std::vector<std::pair<std::size_t, int>> frontier;
    for (auto x : xs) frontier.emplace_back(x, 0);
    while (!frontier.empty()) {
        const auto [v, dir] = frontier.back();
        frontier.pop_back();
        if (seen[2 * v + dir]) continue;
        seen[2 * v + dir] = 1;
        if (!in_z[v]) reached[v] = 1;
        if (dir == 0 && !in_z[v]) {
            for (std::size_t p = 0; p < n; ++p)
                if (g(p, v)) frontier.emplace_back(p, 0);
            for (std::size_t c = 0; c < n; ++c)
                if (g(v, c)) frontier.emplace_back(c, 1);
        } else if (dir == 1) {
            if (!in_z[v])
                for (std::size_t c = 0; c < n; ++c)
                    if (g(v, c)) frontier.emplace_back(c, 1);
            if (anc_z[v])
                for (std::size_t p = 0; p < n; ++p)
                    if (g(p, v)) frontier.emplace_back(p, 0);
        }
    }
    for (auto y : ys)
        if (reached[y]) return false;
    return true;
}

inline bool d_separated(const BinaryMatrix& g, std::size_t x, std::size_t y,
                        std::span<const std::size_t> zs) {
    const std::size_t xs[] = {x};
    const std::size_t ys[] = {y};
    return d_separated(g, xs, ys, zs);
}

/// A labelled directed acyclic graph. Construction validates acyclicity.
class Dag {
public:
    Dag() = default;
    explicit Dag(std::size_t d) : adj_(d), labels_(default_labels(d)) {}

    explicit Dag(BinaryMatrix adj, std::vector<std::string> labels = {})
        : adj_(std::move(adj)), labels_(std::move(labels)) {
        if (labels_.empty()) labels_ = default_labels(adj_.size());
        if (labels_.size() != adj_.size()) throw std::invalid_argument("Dag: label count does not match node count");
        if (!adj_.diagonal_zero()) throw std::invalid_argument("Dag: self-loop in adjacency");
        if (!is_acyclic(adj_)) throw std::invalid_argument("Dag: adjacency contains a directed cycle");
    }

    std::size_t size() const noexcept { return adj_.size(); }
    const BinaryMatrix& adjacency() const noexcept { return adj_; }
    const std::vector<std::string>& labels() const noexcept { return labels_; }

    bool has_edge(std::size_t i, std::size_t j) const { return adj_(i, j); }
    std::size_t num_edges() const { return adj_.count(); }
    std::vector<std::size_t> parents(std::size_t j) const { return adj_.column(j); }
    std::vector<std::size_t> children(std::size_t i) const { return adj_.row(i); }

    std::vector<std::pair<std::size_t, std::size_t>> edges() const {
        std::vector<std::pair<std::size_t, std::size_t>> out;
        for (std::size_t i = 0; i < size(); ++i)
            for (std::size_t j = 0; j < size(); ++j)
                if (adj_(i, j)) out.emplace_back(i, j);
        return out;
    }

    std::vector<std::size_t> topological_order() const { return htcit::topological_order(adj_); }

    static std::vector<std::string> default_labels(std::size_t d) {
        std::vector<std::string> out;
        out.reserve(d);
        for (std::size_t i = 0; i < d; ++i) out.push_back("X" + std::to_string(i + 1));
        return out;
    }

    friend bool operator==(const Dag& a, const Dag& b) { return a.adj_ == b.adj_; }

private:
    BinaryMatrix adj_;
    std::vector<std::string> labels_;
};

}  // namespace htcit
