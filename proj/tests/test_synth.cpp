#include <gtest/gtest.h>

#include "attackdet/random.hpp"
#include "attackdet/synth.hpp"

using namespace attackdet;

namespace {

PlantModel scalar_plant() { return PlantModel(Matrix{{-1}}, Matrix{{1}}, {1.0}); }
NodeSensor scalar_sensor() { return NodeSensor(Matrix{{1}}, Matrix{{0}}, Matrix{{1}}); }

AugmentedNode scalar_node() {
  return augment(scalar_plant(), scalar_sensor(), lowpass_tracker(1, 0.5), Matrix::identity(2), Matrix::identity(1));
}

PlantModel plant2() { return PlantModel(Matrix{{-1, 0.5}, {0, -0.05}}, Matrix{{0.2}, {0.1}}, {}); }

std::vector<AugmentedNode> nodes2(std::size_t N) {
  const std::vector<Matrix> C{Matrix{{1, 0}}, Matrix{{0, 1}}, Matrix{{1, 1}}};
  std::vector<AugmentedNode> out;
  for (std::size_t i = 0; i < N; ++i) {
    out.push_back(augment(plant2(), NodeSensor(C[i % 3], Matrix{{0}}, Matrix{{0.1}}), lowpass_tracker(2, 0.5),
                          Matrix::identity(4), Matrix::identity(2) * 0.1));
  }
  return out;
}

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

// Assignment with the given X_i, M_i at their variable ids.
Assignment pack(const std::vector<Matrix>& X, const std::vector<Matrix>& M) {
  Assignment a;
  for (std::size_t i = 0; i < X.size(); ++i) {
    a.push_back(X[i]);
    a.push_back(M[i]);
  }
  return a;
}

SynthesisConfig config(double gamma, std::size_t N) {
  SynthesisConfig c;
  c.gamma = gamma;
  c.alphas.assign(N, 0.5);
  return c;
}

}  // namespace

TEST(BuildS, ZeroVariablesGiveConstant) {
  const AugmentedNode nd = scalar_node();
  const LmiConstraint c = build_S(nd, 0.5, 2.0, 1, 0, 1, nd.dim());
  const std::vector<LmiVariable> vars{{0, 3, 3, true, "X"}, {1, 3, 1, false, "M"}};
  const Matrix expected = nd.Q_mu - nd.C2_mu.transpose() * nd.E2_inv * nd.C2_mu * 4.0;
  EXPECT_EQ(assemble(c, zero_assignment(vars)), expected);
}

TEST(BuildS, NoNeighborsDropsM) {
  const AugmentedNode nd = scalar_node();
  EXPECT_EQ(build_S(nd, 0.5, 2.0, 0, 0, 1, nd.dim()).terms.size(), 1u);
  EXPECT_EQ(build_S(nd, 0.5, 2.0, 2, 0, 1, nd.dim()).terms.size(), 2u);
  // With p = 0 an arbitrary M has no effect.
  const LmiConstraint c = build_S(nd, 0.5, 2.0, 0, 0, 1, nd.dim());
  Rng rng(1);
  const Matrix X = random_matrix(rng, 3, 3).symmetrized();
  EXPECT_EQ(assemble(c, {X, Matrix(3, 1)}), assemble(c, {X, random_matrix(rng, 3, 1)}));
}

TEST(BuildS, SymbolicMatchesDirectScalar) {
  const DirectedGraph g(1, {});
  const std::vector<AugmentedNode> nodes{scalar_node()};
  const SynthesisConfig cfg = config(1.7, 1);
  const LmiProblem prob = build_coupled_lmi(g, nodes, cfg);
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const std::vector<Matrix> X{random_matrix(rng, 3, 3).symmetrized()};
    const std::vector<Matrix> M{random_matrix(rng, 3, 1)};
    const Matrix sym = assemble(prob.cons[0], pack(X, M));
    const Matrix dir = assemble_node_lmi_direct(g, nodes, cfg.alphas, cfg.gamma, X, M, 0);
    EXPECT_LE((sym - dir).max_abs(), 1e-12 * (1.0 + dir.max_abs()));
  }
}

TEST(BuildS, SymbolicMatchesDirectCycle) {
  const DirectedGraph g(3, {{0, 1}, {1, 2}, {2, 0}, {0, 2}});
  const auto nodes = nodes2(3);
  SynthesisConfig cfg = config(1.3, 3);
  cfg.alphas = {0.3, 0.5, 0.9};
  const LmiProblem prob = build_coupled_lmi(g, nodes, cfg);
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Matrix> X, M;
    for (int i = 0; i < 3; ++i) {
      X.push_back(random_matrix(rng, 6, 6).symmetrized());
      M.push_back(random_matrix(rng, 6, 2));
    }
    for (NodeId i = 0; i < 3; ++i) {
      const Matrix sym = assemble(prob.cons[i], pack(X, M));
      const Matrix dir = assemble_node_lmi_direct(g, nodes, cfg.alphas, cfg.gamma, X, M, i);
      ASSERT_EQ(sym.rows(), dir.rows());
      EXPECT_LE((sym - dir).max_abs(), 1e-12 * (1.0 + dir.max_abs()));
    }
  }
}

TEST(CoupledLmi, SingleNodeHasThreeBlocks) {
  const DirectedGraph g(1, {});
  const std::vector<AugmentedNode> nodes{scalar_node()};
  const LmiProblem prob = build_coupled_lmi(g, nodes, config(2.0, 1));
  ASSERT_EQ(prob.cons.size(), 2u);
  const auto l = lmi_layout(g, nodes, 0);
  EXPECT_EQ(l.eps, 0u);
  EXPECT_EQ(l.nu, 3u);
  EXPECT_EQ(l.dist, 4u);
  EXPECT_TRUE(l.neighbor.empty());
  EXPECT_EQ(prob.cons[0].constant.rows(), 3u + 1u + 2u);
  EXPECT_EQ(prob.cons[0].sense, Sense::negative_definite);
  EXPECT_EQ(prob.cons[1].sense, Sense::positive_definite);
  EXPECT_EQ(prob.cons[0].name, "lmi[1]");
}

TEST(CoupledLmi, NeighborBlockIsMinusPiX) {
  const DirectedGraph g(2, {{0, 1}, {1, 0}});
  const auto nodes = nodes2(2);
  SynthesisConfig cfg = config(2.0, 2);
  cfg.alphas = {0.5, 1.5};
  const LmiProblem prob = build_coupled_lmi(g, nodes, cfg);
  EXPECT_EQ(prob.vars.size(), 4u);
  EXPECT_EQ(prob.cons.size(), 4u);
  Rng rng(4);
  const Matrix X1 = random_matrix(rng, 6, 6).symmetrized();
  Assignment a = zero_assignment(prob.vars);
  a[x_var(1)] = X1;
  const Matrix F0 = assemble(prob.cons[0], zero_assignment(prob.vars));
  const Matrix F = assemble(prob.cons[0], a) - F0;
  const auto l = lmi_layout(g, nodes, 0);
  ASSERT_EQ(l.neighbor.size(), 1u);
  const double pi1 = pi_weight(g, 1, 1.5);  // 2 * 1.5 / (1 + 1)
  EXPECT_DOUBLE_EQ(pi1, 1.5);
  EXPECT_LE((F.block(l.neighbor[0], l.neighbor[0], 6, 6) + X1 * pi1).max_abs(), 1e-12);
  // X_1 appears nowhere else in node 0's LMI.
  Matrix rest = F;
  rest.set_block(l.neighbor[0], l.neighbor[0], Matrix(6, 6));
  EXPECT_EQ(rest.max_abs(), 0.0);
}

TEST(CoupledLmi, ConstraintSizeFormula) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t N = 1 + static_cast<std::size_t>(rng.uniform() * 3);
    std::vector<std::pair<NodeId, NodeId>> e;
    for (NodeId a = 0; a < N; ++a)
      for (NodeId b = 0; b < N; ++b)
        if (a != b && rng.uniform() < 0.5) e.emplace_back(a, b);
    const DirectedGraph g(N, e);
    const auto nodes = nodes2(N);
    const LmiProblem prob = build_coupled_lmi(g, nodes, config(2.0, N));
    EXPECT_EQ(prob.vars.size(), 2 * N);
    for (NodeId i = 0; i < N; ++i) {
      const auto& nd = nodes[i];
      const std::size_t expected = nd.dim() + nd.nu_dim() + nd.disturbance_dim() + g.in_degree(i) * nd.dim();
      EXPECT_EQ(prob.cons[i].constant.rows(), expected);
      EXPECT_EQ(prob.cons[N + i].constant.rows(), nd.dim());
      EXPECT_NO_THROW(validate(prob.vars, prob.cons[i]));
    }
  }
}

TEST(CoupledLmi, RejectsMismatchedInputs) {
  const DirectedGraph g(2, {{0, 1}});
  const auto nodes = nodes2(2);
  EXPECT_THROW(build_coupled_lmi(g, nodes, config(2.0, 3)), DimensionError);
  const std::vector<AugmentedNode> one{nodes[0]};
  EXPECT_THROW(build_coupled_lmi(g, one, config(2.0, 2)), DimensionError);
}

TEST(RecoverGains, ZeroMGivesZeroK) {
  const AugmentedNode nd = scalar_node();
  const RecoveredGains r = recover_gains(nd, Matrix::identity(3) * 2.0, Matrix(3, 1), 1.5);
  EXPECT_EQ(r.K_mu, Matrix(3, 1));
}

TEST(RecoverGains, ZeroOutputMatrix) {
  // C2 = 0, X = I: L = -B2 D' E^-1.
  const NodeSensor s(Matrix{{0}}, Matrix{{0.5}}, Matrix{{1}});
  const AugmentedNode nd = augment(scalar_plant(), s, lowpass_tracker(1, 0.5), Matrix::identity(2), Matrix::identity(1));
  const RecoveredGains r = recover_gains(nd, Matrix::identity(3), Matrix(3, 1), 3.0);
  const Matrix expected = -(nd.B2_mu * nd.D2_mu.transpose()) * nd.E2_inv;
  EXPECT_LE((r.L_mu - expected).max_abs(), 1e-15);
  EXPECT_NEAR(r.L_mu(0, 0), 0.5 / 1.25, 1e-15);  // B2_mu = [-1, 0; 0 0; ...], D' = [0.5; 1]
}

TEST(RecoverGains, MatchesLinearSolve) {
  const AugmentedNode nd = scalar_node();
  Rng rng(6);
  const Matrix R = random_matrix(rng, 3, 3);
  const Matrix X = R * R.transpose() + Matrix::identity(3);
  const Matrix M = random_matrix(rng, 3, 1);
  const RecoveredGains r = recover_gains(nd, X, M, 2.0);
  EXPECT_LE((X * r.K_mu + M).max_abs(), 1e-12);  // X K = -M
  const Matrix lhs = X * (r.L_mu * nd.E2 + nd.B2_mu * nd.D2_mu.transpose());
  EXPECT_LE((lhs - nd.C2_mu.transpose() * 4.0).max_abs(), 1e-12);
  EXPECT_THROW(recover_gains(nd, -X, M, 2.0), NumericalError);
}

TEST(RecoverGains, SplitIsConsistent) {
  const auto nodes = nodes2(1);
  const AugmentedNode& nd = nodes[0];
  Rng rng(7);
  RecoveredGains r{random_matrix(rng, 6, 1), random_matrix(rng, 6, 2)};
  const NodeDetectorGains g = split_gains(nd, r);
  EXPECT_EQ(vstack({g.L_tilde, g.F_eta}), r.L_mu);
  EXPECT_EQ(vstack({g.K_tilde, g.H_eta}), r.K_mu);
  EXPECT_EQ(g.L_tilde.shape(), "2x1");
  EXPECT_EQ(g.K_tilde.shape(), "2x2");
  EXPECT_EQ(g.F_eta.shape(), "4x1");
  EXPECT_EQ(g.H_eta.shape(), "4x2");
}

TEST(Synthesize, ScalarLargeGammaFeasible) {
  const DirectedGraph g(1, {});
  const std::vector<AugmentedNode> nodes{scalar_node()};
  const SynthesisResult r = synthesize_nodes(g, nodes, config(10.0, 1));
  ASSERT_TRUE(r.feasible()) << r.diagnostic;
  EXPECT_FALSE(r.baseline);
  EXPECT_LE(r.nodes[0].lmi_lambda_max, -r.nodes[0].lmi_margin);
  EXPECT_GE(r.nodes[0].x_lambda_min, r.margin);
  EXPECT_GT(r.P(0, 0), 0.0);
}

TEST(Synthesize, TinyGammaInfeasible) {
  const DirectedGraph g(1, {});
  const std::vector<AugmentedNode> nodes{scalar_node()};
  SynthesisConfig cfg = config(1e-6, 1);
  cfg.solver.budget = 3000;
  const SynthesisResult r = synthesize_nodes(g, nodes, cfg);
  EXPECT_EQ(r.status, SdpStatus::infeasible_budget);
  EXPECT_FALSE(r.feasible());
  EXPECT_NE(r.diagnostic.find("worst constraint"), std::string::npos);
  EXPECT_THROW(synthesize_nodes(g, nodes, config(0.0, 1)), ConfigError);
}

TEST(Synthesize, TwoNodeCertificatesRecheck) {
  const DirectedGraph g(2, {{0, 1}, {1, 0}});
  const auto nodes = nodes2(2);
  const SynthesisConfig cfg = config(3.0, 2);
  const SynthesisResult r = synthesize_nodes(g, nodes, cfg);
  ASSERT_TRUE(r.feasible()) << r.diagnostic;
  EXPECT_TRUE(is_symmetric(r.P, 0.0));
  EXPECT_GT(lambda_min(r.P), 0.0);
  std::vector<Matrix> X, M;
  for (const auto& ns : r.nodes) {
    X.push_back(ns.X);
    M.push_back(ns.M);
  }
  Matrix sumX(2, 2);
  for (NodeId i = 0; i < 2; ++i) {
    const Matrix F = assemble_node_lmi_direct(g, nodes, cfg.alphas, cfg.gamma, X, M, i);
    EXPECT_LE(lambda_max(F), -0.5 * r.nodes[i].lmi_margin);
    EXPECT_GT(lambda_min(X[i]), 0.0);
    sumX += X[i].block(0, 0, 2, 2);
    const NodeDetectorGains& gi = r.nodes[i].gains;
    EXPECT_EQ(gi.L_tilde.shape(), "2x1");
    EXPECT_EQ(gi.H_eta.shape(), "4x2");
  }
  EXPECT_LE((r.P - sumX * (1.0 / 9.0)).max_abs(), 1e-12 * (1.0 + r.P.max_abs()));
}

TEST(Synthesize, BaselineGains) {
  const DirectedGraph g(2, {{0, 1}, {1, 0}});
  const std::vector<NodeSensor> sensors{NodeSensor(Matrix{{1, 0}}, Matrix{{0}}, Matrix{{0.1}}),
                                        NodeSensor(Matrix{{0, 1}}, Matrix{{0}}, Matrix{{0.1}})};
  const std::vector<Matrix> weights{Matrix::identity(2), Matrix::identity(2)};
  const SynthesisResult r = synthesize_baseline(g, plant2(), sensors, weights, config(2.0, 2));
  ASSERT_TRUE(r.feasible()) << r.diagnostic;
  EXPECT_TRUE(r.baseline);
  const auto fg = baseline_gains(r);
  ASSERT_EQ(fg.size(), 2u);
  EXPECT_EQ(fg[0].L.shape(), "2x1");
  EXPECT_EQ(fg[0].K.shape(), "2x2");
  SynthesisResult not_baseline = r;
  not_baseline.baseline = false;
  EXPECT_THROW(baseline_gains(not_baseline), ModelError);
}

TEST(Bisection, MockProbeConverges) {
  const double threshold = 2.3;
  auto probe = [&](double gamma) {
    SynthesisResult r;
    r.gamma = gamma;
    r.status = gamma >= threshold ? SdpStatus::feasible : SdpStatus::infeasible_budget;
    return r;
  };
  const BisectionResult b = bisect_gamma(probe, 0.5, 10.0, 1.05);
  ASSERT_TRUE(b.best.feasible());
  EXPECT_GE(b.best.gamma, threshold);
  EXPECT_LE(b.best.gamma, threshold * 1.05);
  EXPECT_EQ(b.probes.front().gamma, 10.0);
  EXPECT_EQ(b.probes[1].gamma, 0.5);
  EXPECT_LE(b.probes.size(), 2u + 8u);  // log2(log(20)/log(1.05)) ~ 6
  // Probes are consistent with monotonicity.
  for (const auto& p : b.probes) EXPECT_EQ(p.status == SdpStatus::feasible, p.gamma >= threshold);
}

TEST(Bisection, EndpointCases) {
  auto never = [](double gamma) {
    SynthesisResult r;
    r.gamma = gamma;
    r.status = SdpStatus::infeasible_budget;
    return r;
  };
  const BisectionResult b = bisect_gamma(never, 1.0, 4.0);
  EXPECT_FALSE(b.best.feasible());
  EXPECT_EQ(b.probes.size(), 1u);
  auto always = [](double gamma) {
    SynthesisResult r;
    r.gamma = gamma;
    r.status = SdpStatus::feasible;
    return r;
  };
  const BisectionResult c = bisect_gamma(always, 1.0, 4.0);
  EXPECT_EQ(c.best.gamma, 1.0);
  EXPECT_EQ(c.probes.size(), 2u);
  EXPECT_THROW(bisect_gamma(always, 2.0, 1.0), ConfigError);
  EXPECT_THROW(bisect_gamma(always, 1.0, 2.0, 1.0), ConfigError);
}
