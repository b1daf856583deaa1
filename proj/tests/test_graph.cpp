#include <gtest/gtest.h>

#include "attackdet/graph.hpp"
#include "attackdet/random.hpp"

using namespace attackdet;

namespace {

// 0-based edges (from, to).
DirectedGraph cycle3() { return DirectedGraph(3, {{0, 1}, {1, 2}, {2, 0}}); }

DirectedGraph complete(std::size_t n) {
  std::vector<std::pair<NodeId, NodeId>> e;
  for (NodeId a = 0; a < n; ++a)
    for (NodeId b = 0; b < n; ++b)
      if (a != b) e.emplace_back(a, b);
  return DirectedGraph(n, e);
}

}  // namespace

TEST(Graph, InNeighbors) {
  EXPECT_EQ(in_neighbors(cycle3(), 1), (std::vector<NodeId>{0}));
  const DirectedGraph empty(4, {});
  for (NodeId i = 0; i < 4; ++i) EXPECT_TRUE(empty.in_neighbors(i).empty());
  EXPECT_EQ(complete(3).in_neighbors(0), (std::vector<NodeId>{1, 2}));
}

TEST(Graph, InNeighborsSortedAscending) {
  const DirectedGraph g(4, {{3, 0}, {1, 0}, {2, 0}});
  EXPECT_EQ(g.in_neighbors(0), (std::vector<NodeId>{1, 2, 3}));
}

TEST(Graph, Degrees) {
  for (NodeId i = 0; i < 3; ++i) {
    const auto d = degrees(cycle3(), i);
    EXPECT_EQ(d.in, 1u);
    EXPECT_EQ(d.out, 1u);
  }
  const DirectedGraph star(3, {{1, 0}, {2, 0}});
  EXPECT_EQ(degrees(star, 0).in, 2u);
  EXPECT_EQ(degrees(star, 0).out, 0u);
  EXPECT_EQ(degrees(star, 1).in, 0u);
  EXPECT_EQ(degrees(star, 1).out, 1u);
  for (NodeId i = 0; i < 4; ++i) {
    EXPECT_EQ(degrees(complete(4), i).in, 3u);
    EXPECT_EQ(degrees(complete(4), i).out, 3u);
  }
}

TEST(Graph, RejectsInvalid) {
  EXPECT_THROW(DirectedGraph(2, {{0, 0}}), GraphError);
  EXPECT_THROW(DirectedGraph(2, {{0, 2}}), GraphError);
  EXPECT_THROW(cycle3().in_neighbors(3), GraphError);
  EXPECT_THROW(degrees(cycle3(), 5), GraphError);
}

TEST(Graph, DuplicateEdgesCollapse) {
  const DirectedGraph g(2, {{0, 1}, {0, 1}});
  EXPECT_EQ(g.edge_count(), 1u);
  EXPECT_EQ(g.out_degree(0), 1u);
  EXPECT_TRUE(g.adjacent(1, 0));
  EXPECT_FALSE(g.adjacent(0, 1));
}

TEST(Graph, PiWeight) {
  // q = 2, alpha = 1
  const DirectedGraph g2(3, {{0, 1}, {0, 2}});
  EXPECT_DOUBLE_EQ(pi_weight(g2, 0, 1.0), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(pi_weight(g2, 1, 0.5), 1.0);  // q = 0
  const DirectedGraph g3(4, {{0, 1}, {0, 2}, {0, 3}});
  EXPECT_DOUBLE_EQ(pi_weight(g3, 0, 2.0), 1.0);
  EXPECT_LT(pi_weight(g3, 0, 2.0), 2.0 * 2.0 / 3.0);
  EXPECT_THROW(pi_weight(g3, 0, 0.0), GraphError);
  EXPECT_THROW(pi_weight(g3, 0, -1.0), GraphError);
}

TEST(Graph, ComparisonMatrixExamples) {
  const DirectedGraph one(1, {});
  const std::vector<double> a1{1.0};
  EXPECT_EQ(comparison_matrix(one, a1), (Matrix{{-2}}));
  const DirectedGraph two(2, {{0, 1}, {1, 0}});
  const std::vector<double> a2{1.0, 1.0};
  const Matrix c = comparison_matrix(two, a2);
  EXPECT_EQ(c, (Matrix{{-2, 1}, {1, -2}}));
  const SymEig e = sym_eig(c);
  EXPECT_NEAR(e.values[0], -3.0, 1e-12);
  EXPECT_NEAR(e.values[1], -1.0, 1e-12);
  EXPECT_LT(spectral_abscissa(c), 0.0);
  const std::vector<double> bad{1.0};
  EXPECT_THROW(comparison_matrix(two, bad), DimensionError);
}

TEST(Graph, ComparisonMatrixHurwitzOnRandomDigraphs) {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform() * 10);
    std::vector<std::pair<NodeId, NodeId>> e;
    for (NodeId a = 0; a < n; ++a)
      for (NodeId b = 0; b < n; ++b)
        if (a != b && rng.uniform() < 0.4) e.emplace_back(a, b);
    const DirectedGraph g(n, e);
    std::vector<double> alphas(n);
    for (double& a : alphas) a = rng.uniform(0.05, 3.0);
    const Matrix c = comparison_matrix(g, alphas);
    EXPECT_LT(spectral_abscissa(c), 0.0) << "trial " << trial;
    // Column dominance: 2 alpha_j > q_j pi_j.
    for (NodeId j = 0; j < n; ++j) {
      double col = 0.0;
      for (NodeId i = 0; i < n; ++i)
        if (i != j) col += c(i, j);
      EXPECT_LT(col, 2.0 * alphas[j]);
    }
    std::size_t sp = 0, sq = 0;
    for (NodeId i = 0; i < n; ++i) {
      sp += g.in_degree(i);
      sq += g.out_degree(i);
    }
    EXPECT_EQ(sp, g.edge_count());
    EXPECT_EQ(sq, g.edge_count());
    EXPECT_GT(summed_decay_rate(g, alphas), 0.0);
  }
}

TEST(Graph, SummedDecayRateCycle) {
  const std::vector<double> a{0.5, 0.5, 0.5};
  // 2 alpha - q pi = 1 - 0.5
  EXPECT_DOUBLE_EQ(summed_decay_rate(cycle3(), a), 0.5);
}
