#pragma once

// Directed communication topology of the estimator network.
//
// Nodes are 0-based internally. Configuration files use 1-based ids and are
// converted in io.hpp. An edge (j, i) means node j supplies its estimate to
// node i.

#include <algorithm>
#include <set>
#include <utility>
#include <vector>

#include "attackdet/errors.hpp"
#include "attackdet/linalg.hpp"

namespace attackdet {

using NodeId = std::size_t;

class DirectedGraph {
 public:
  DirectedGraph() = default;

  DirectedGraph(std::size_t node_count, std::vector<std::pair<NodeId, NodeId>> edges)
      : node_count_(node_count), in_(node_count), out_degree_(node_count, 0) {
    std::set<std::pair<NodeId, NodeId>> seen;
    for (const auto& [from, to] : edges) {
      if (from >= node_count || to >= node_count) {
        throw GraphError("edge (" + std::to_string(from + 1) + "," + std::to_string(to + 1) +
                         ") references a node outside 1.." + std::to_string(node_count));
      }
      if (from == to) {
        throw GraphError("self-loop at node " + std::to_string(from + 1));
      }
      if (!seen.insert({from, to}).second) continue;
      in_[to].push_back(from);
      ++out_degree_[from];
    }
    for (auto& list : in_) std::sort(list.begin(), list.end());
    edges_.assign(seen.begin(), seen.end());
  }

  std::size_t node_count() const { return node_count_; }
  std::size_t edge_count() const { return edges_.size(); }
  const std::vector<std::pair<NodeId, NodeId>>& edges() const { return edges_; }

  /// V_i = { j : (j, i) in E }, ascending.
  const std::vector<NodeId>& in_neighbors(NodeId i) const {
    check(i);
    return in_[i];
  }

  std::size_t in_degree(NodeId i) const { return in_neighbors(i).size(); }
  std::size_t out_degree(NodeId i) const {
    check(i);
    return out_degree_[i];
  }

  /// a_ij = 1 iff (j, i) in E.
  bool adjacent(NodeId i, NodeId j) const {
    const auto& v = in_neighbors(i);
    return std::binary_search(v.begin(), v.end(), j);
  }

 private:
  void check(NodeId i) const {
    if (i >= node_count_) {
      throw GraphError("invalid node id " + std::to_string(i + 1));
    }
  }

  std::size_t node_count_ = 0;
  std::vector<std::vector<NodeId>> in_;
  std::vector<std::size_t> out_degree_;
  std::vector<std::pair<NodeId, NodeId>> edges_;
};

inline const std::vector<NodeId>& in_neighbors(const DirectedGraph& g, NodeId i) {
  return g.in_neighbors(i);
}

struct Degrees {
  std::size_t in;   // p_i
  std::size_t out;  // q_i
  friend bool operator==(const Degrees&, const Degrees&) = default;
};

inline Degrees degrees(const DirectedGraph& g, NodeId i) {
  return {g.in_degree(i), g.out_degree(i)};
}

/// pi_i = 2 alpha_i / (q_i + 1).
inline double pi_weight(const DirectedGraph& g, NodeId i, double alpha) {
  if (!(alpha > 0.0)) throw GraphError("alpha must be positive");
  return 2.0 * alpha / (static_cast<double>(g.out_degree(i)) + 1.0);
}

inline std::vector<double> pi_weights(const DirectedGraph& g, std::span<const double> alphas) {
  if (alphas.size() != g.node_count()) {
    throw DimensionError("alphas: expected " + std::to_string(g.node_count()) + " entries");
  }
  std::vector<double> pi(alphas.size());
  for (NodeId i = 0; i < alphas.size(); ++i) pi[i] = pi_weight(g, i, alphas[i]);
  return pi;
}

/// Comparison matrix with -2 alpha_i on the diagonal and pi_j a_ij elsewhere.
/// Throws if strict column diagonal dominance fails.
inline Matrix comparison_matrix(const DirectedGraph& g, std::span<const double> alphas) {
  const auto pi = pi_weights(g, alphas);
  const std::size_t n = g.node_count();
  Matrix m(n, n);
  for (NodeId i = 0; i < n; ++i) {
    m(i, i) = -2.0 * alphas[i];
    for (NodeId j : g.in_neighbors(i)) m(i, j) = pi[j];
  }
  // Column j carries pi_j exactly q_j times, and q_j pi_j < 2 alpha_j always
  // holds. Rows need not be dominant when the alphas differ across nodes.
  for (NodeId j = 0; j < n; ++j) {
    const double col = static_cast<double>(g.out_degree(j)) * pi[j];
    if (!(col < 2.0 * alphas[j])) {
      throw GraphError("comparison matrix not diagonally dominant at node " + std::to_string(j + 1));
    }
  }
  return m;
}

/// epsilon = min_i (2 alpha_i - q_i pi_i), the decay rate of the summed storage.
inline double summed_decay_rate(const DirectedGraph& g, std::span<const double> alphas) {
  const auto pi = pi_weights(g, alphas);
  double eps = std::numeric_limits<double>::infinity();
  for (NodeId i = 0; i < g.node_count(); ++i) {
    eps = std::min(eps, 2.0 * alphas[i] - static_cast<double>(g.out_degree(i)) * pi[i]);
  }
  return eps;
}

}  // namespace attackdet
