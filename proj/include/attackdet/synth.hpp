#pragma once

// Detector synthesis: the coupled per-node LMIs in (X_i, M_i), their solution
// with the sdp module, and closed-form recovery of the detector gains
//     K_mu_i = -X_i^{-1} M_i
//     L_mu_i = (gamma^2 X_i^{-1} C_mu' - B2_mu D_mu') E_2i^{-1}.
//
// Node i's constraint is the block matrix, rows/cols ordered
// [eps_i | nu_i | (xi, xi_i) | eps_j for j in V_i ascending]:
//
//   [ S_i               X B1    X B2 Pi    -M H  ...  -M H        ]
//   [ B1' X             -g^2 I  0           0    ...   0          ]
//   [ Pi B2' X          0       -g^2 I      0    ...   0          ]
//   [ -H' M'            0       0          -pi_j1 X_j1 ...        ]
//   [ ...                                               -pi_jp X_jp]
//
// with Pi = I - D_mu' E^{-1} D_mu, pi_j = 2 alpha_j / (q_j + 1) and
//   S_i = X Abar + Abar' X + p_i (M H + H' M') + Q_mu - g^2 C_mu' E^{-1} C_mu,
//   Abar = A_mu + alpha_i I + B2_mu D_mu' E^{-1} C_mu.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "attackdet/errors.hpp"
#include "attackdet/graph.hpp"
#include "attackdet/linalg.hpp"
#include "attackdet/model.hpp"
#include "attackdet/sdp.hpp"

namespace attackdet {

struct SynthesisConfig {
  double gamma = 1.0;
  std::vector<double> alphas;
  double margin = 1e-6;
  SolverOptions solver;
};

struct NodeDetectorGains {
  Matrix L_tilde;  // n x r_i
  Matrix K_tilde;  // n x n
  Matrix F_eta;    // n_omega x r_i
  Matrix H_eta;    // n_omega x n
};

struct NodeSolution {
  Matrix X;
  Matrix M;
  Matrix L_mu;
  Matrix K_mu;
  NodeDetectorGains gains;
  double lmi_lambda_max = 0.0;
  double x_lambda_min = 0.0;
  double lmi_margin = 0.0;
};

struct SynthesisResult {
  SdpStatus status = SdpStatus::numerical_failure;
  bool baseline = false;
  double gamma = 0.0;
  double margin = 1e-6;
  std::vector<NodeSolution> nodes;
  Matrix P;  // gamma^-2 * sum_i X_i^{11}
  std::size_t iterations = 0;
  std::string diagnostic;
  double best_violation = 0.0;

  bool feasible() const { return status == SdpStatus::feasible; }
};

/// Block offsets of node i's constraint.
struct LmiLayout {
  std::size_t eps = 0;
  std::size_t nu = 0;
  std::size_t dist = 0;
  std::vector<std::size_t> neighbor;
  std::size_t size = 0;
};

inline LmiLayout lmi_layout(const DirectedGraph& g, std::span<const AugmentedNode> nodes, NodeId i) {
  LmiLayout l;
  const auto& node = nodes[i];
  l.eps = 0;
  l.nu = node.dim();
  l.dist = l.nu + node.nu_dim();
  std::size_t off = l.dist + node.disturbance_dim();
  for (NodeId j : g.in_neighbors(i)) {
    l.neighbor.push_back(off);
    off += nodes[j].dim();
  }
  l.size = off;
  return l;
}

inline std::size_t x_var(NodeId i) { return 2 * i; }
inline std::size_t m_var(NodeId i) { return 2 * i + 1; }

namespace detail {

inline Matrix disturbance_projector(const AugmentedNode& node) {
  return Matrix::identity(node.disturbance_dim()) - node.D2_mu.transpose() * node.E2_inv * node.D2_mu;
}

inline Matrix shifted_dynamics(const AugmentedNode& node, double alpha) {
  return node.A_mu + Matrix::identity(node.dim()) * alpha +
         node.B2_mu * node.D2_mu.transpose() * node.E2_inv * node.C2_mu;
}

inline Matrix embedding(const Matrix& block_t, std::size_t offset, std::size_t size) {
  // rows = block_t.rows(), columns placed at [offset, offset + block_t.cols())
  Matrix e(block_t.rows(), size);
  e.set_block(0, offset, block_t);
  return e;
}

// F gets coeff * (A V B) at block (r0, c0) and its transpose at (c0, r0).
// A: br x vr, B: vc x bc.
inline LmiTerm block_term(std::size_t var, const Matrix& A, const Matrix& B, std::size_t r0, std::size_t c0,
                          std::size_t size, double coeff) {
  return LmiTerm{var, embedding(A.transpose(), r0, size), embedding(B, c0, size), false, 2.0 * coeff};
}

}  // namespace detail

/// S_i as a constraint fragment of the given size (block at the origin):
/// constant Q_mu - g^2 C' E^-1 C plus the X_i and M_i terms.
inline LmiConstraint build_S(const AugmentedNode& node, double alpha, double gamma, std::size_t p,
                             std::size_t x_id, std::size_t m_id, std::size_t size) {
  if (node.Q_mu.rows() != node.dim()) throw DimensionError("build_S: Q_mu dimension mismatch");
  const std::size_t d = node.dim();
  LmiConstraint c;
  c.constant = Matrix(size, size);
  c.constant.set_block(0, 0, node.Q_mu - node.C2_mu.transpose() * node.E2_inv * node.C2_mu * (gamma * gamma));
  const Matrix I = Matrix::identity(d);
  c.terms.push_back(detail::block_term(x_id, I, detail::shifted_dynamics(node, alpha), 0, 0, size, 1.0));
  if (p > 0) {
    c.terms.push_back(detail::block_term(m_id, I, node.H_mu, 0, 0, size, static_cast<double>(p)));
  }
  return c;
}

struct LmiProblem {
  std::vector<LmiVariable> vars;
  std::vector<LmiConstraint> cons;  // N negative-definite, then N positive-definite
};

inline LmiProblem build_coupled_lmi(const DirectedGraph& g, std::span<const AugmentedNode> nodes,
                                    const SynthesisConfig& cfg) {
  const std::size_t N = g.node_count();
  if (nodes.size() != N) throw DimensionError("node list length must equal graph node count");
  if (cfg.alphas.size() != N) throw DimensionError("alphas must have one entry per node");
  for (const auto& nd : nodes) {
    if (nd.n != nodes[0].n) throw DimensionError("all nodes must share the plant dimension n");
  }
  const auto pi = pi_weights(g, cfg.alphas);
  const double g2 = cfg.gamma * cfg.gamma;

  LmiProblem prob;
  for (NodeId i = 0; i < N; ++i) {
    const auto& nd = nodes[i];
    prob.vars.push_back({x_var(i), nd.dim(), nd.dim(), true, "X" + std::to_string(i + 1)});
    prob.vars.push_back({m_var(i), nd.dim(), nd.n, false, "M" + std::to_string(i + 1)});
  }

  for (NodeId i = 0; i < N; ++i) {
    const auto& nd = nodes[i];
    const auto layout = lmi_layout(g, nodes, i);
    const auto& nbrs = g.in_neighbors(i);
    LmiConstraint c = build_S(nd, cfg.alphas[i], cfg.gamma, nbrs.size(), x_var(i), m_var(i), layout.size);
    c.name = "lmi[" + std::to_string(i + 1) + "]";
    if (nd.nu_dim() > 0) {
      c.constant.set_block(layout.nu, layout.nu, Matrix::identity(nd.nu_dim()) * -g2);
    }
    c.constant.set_block(layout.dist, layout.dist, Matrix::identity(nd.disturbance_dim()) * -g2);

    const Matrix I = Matrix::identity(nd.dim());
    if (nd.nu_dim() > 0) {
      c.terms.push_back(detail::block_term(x_var(i), I, nd.B1_mu, layout.eps, layout.nu, layout.size, 1.0));
    }
    c.terms.push_back(detail::block_term(x_var(i), I, nd.B2_mu * detail::disturbance_projector(nd), layout.eps,
                                         layout.dist, layout.size, 1.0));
    for (std::size_t k = 0; k < nbrs.size(); ++k) {
      const NodeId j = nbrs[k];
      const Matrix Hj = selector(nd.n, nodes[j].dim());
      c.terms.push_back(detail::block_term(m_var(i), I, Hj, layout.eps, layout.neighbor[k], layout.size, -1.0));
      const Matrix Ij = Matrix::identity(nodes[j].dim());
      c.terms.push_back(detail::block_term(x_var(j), Ij, Ij, layout.neighbor[k], layout.neighbor[k], layout.size,
                                           -0.5 * pi[j]));
    }
    c.sense = Sense::negative_definite;
    c.margin = cfg.margin * (1.0 + norm2(c.constant));
    prob.cons.push_back(std::move(c));
  }
  for (NodeId i = 0; i < N; ++i) {
    const std::size_t d = nodes[i].dim();
    LmiConstraint c;
    c.name = "X[" + std::to_string(i + 1) + "]>0";
    c.constant = Matrix(d, d);
    c.terms.push_back({x_var(i), Matrix::identity(d), Matrix::identity(d), false, 1.0});
    c.sense = Sense::positive_definite;
    c.margin = cfg.margin;
    prob.cons.push_back(std::move(c));
  }
  return prob;
}

/// Node i's LMI block matrix built directly from matrix products, without the
/// sdp term machinery. Used to re-verify certificates.
inline Matrix assemble_node_lmi_direct(const DirectedGraph& g, std::span<const AugmentedNode> nodes,
                                       std::span<const double> alphas, double gamma,
                                       std::span<const Matrix> X, std::span<const Matrix> M, NodeId i) {
  const auto& nd = nodes[i];
  const auto& nbrs = g.in_neighbors(i);
  const double p = static_cast<double>(nbrs.size());
  const double g2 = gamma * gamma;
  const Matrix& Xi = X[i];
  const Matrix& Mi = M[i];
  const Matrix Einv = inverse(nd.E2);
  const Matrix Ct = nd.C2_mu.transpose();
  const Matrix Abar = nd.A_mu + Matrix::identity(nd.dim()) * alphas[i] + nd.B2_mu * nd.D2_mu.transpose() * Einv * nd.C2_mu;
  const Matrix MH = Mi * nd.H_mu;
  const Matrix S = Xi * Abar + Abar.transpose() * Xi + MH * p + MH.transpose() * p + nd.Q_mu - Ct * Einv * nd.C2_mu * g2;
  const Matrix Pi = Matrix::identity(nd.disturbance_dim()) - nd.D2_mu.transpose() * Einv * nd.D2_mu;
  const Matrix XB1 = Xi * nd.B1_mu;
  const Matrix XB2 = Xi * nd.B2_mu * Pi;

  const auto layout = lmi_layout(g, nodes, i);
  Matrix F(layout.size, layout.size);
  F.set_block(0, 0, S);
  if (nd.nu_dim() > 0) {
    F.set_block(0, layout.nu, XB1);
    F.set_block(layout.nu, 0, XB1.transpose());
    F.set_block(layout.nu, layout.nu, Matrix::identity(nd.nu_dim()) * -g2);
  }
  F.set_block(0, layout.dist, XB2);
  F.set_block(layout.dist, 0, XB2.transpose());
  F.set_block(layout.dist, layout.dist, Matrix::identity(nd.disturbance_dim()) * -g2);
  for (std::size_t k = 0; k < nbrs.size(); ++k) {
    const NodeId j = nbrs[k];
    const double pij = 2.0 * alphas[j] / (static_cast<double>(g.out_degree(j)) + 1.0);
    const Matrix coupling = -(Mi * selector(nd.n, nodes[j].dim()));
    F.set_block(0, layout.neighbor[k], coupling);
    F.set_block(layout.neighbor[k], 0, coupling.transpose());
    F.set_block(layout.neighbor[k], layout.neighbor[k], X[j] * -pij);
  }
  return F.symmetrized();
}

struct RecoveredGains {
  Matrix L_mu;
  Matrix K_mu;
};

inline RecoveredGains recover_gains(const AugmentedNode& node, const Matrix& X, const Matrix& M, double gamma) {
  if (!chol_psd_check(X, 0.0)) throw NumericalError("recover_gains: X_i is not positive definite");
  const Matrix Xinv = inverse(X);
  RecoveredGains out;
  out.K_mu = -(Xinv * M);
  out.L_mu = (Xinv * node.C2_mu.transpose() * (gamma * gamma) - node.B2_mu * node.D2_mu.transpose()) * node.E2_inv;
  return out;
}

inline NodeDetectorGains split_gains(const AugmentedNode& node, const RecoveredGains& r) {
  NodeDetectorGains g;
  g.L_tilde = r.L_mu.block(0, 0, node.n, node.r);
  g.K_tilde = r.K_mu.block(0, 0, node.n, node.n);
  g.F_eta = r.L_mu.block(node.n, 0, node.n_omega, node.r);
  g.H_eta = r.K_mu.block(node.n, 0, node.n_omega, node.n);
  return g;
}

/// Solves the coupled LMIs for prebuilt augmented nodes.
inline SynthesisResult synthesize_nodes(const DirectedGraph& g, std::span<const AugmentedNode> nodes,
                                        const SynthesisConfig& cfg) {
  if (!(cfg.gamma > 0.0)) throw ConfigError("synthesis.gamma must be positive");
  const LmiProblem prob = build_coupled_lmi(g, nodes, cfg);
  const SdpSolution sol = solve_feasibility(prob.vars, prob.cons, cfg.solver);
  const std::size_t N = g.node_count();

  SynthesisResult res;
  res.status = sol.status;
  res.baseline = !nodes.empty() && nodes[0].baseline();
  res.gamma = cfg.gamma;
  res.margin = cfg.margin;
  res.iterations = sol.iterations;
  res.best_violation = sol.best_violation;
  if (!sol.certificate.empty()) {
    res.nodes.resize(N);
    for (NodeId i = 0; i < N; ++i) {
      res.nodes[i].X = sol.assignment[x_var(i)];
      res.nodes[i].M = sol.assignment[m_var(i)];
      res.nodes[i].lmi_lambda_max = sol.certificate[i];
      res.nodes[i].x_lambda_min = sol.certificate[N + i];
      res.nodes[i].lmi_margin = prob.cons[i].margin;
    }
  }
  if (!res.feasible()) {
    const std::string worst = sol.worst_constraint < prob.cons.size() ? prob.cons[sol.worst_constraint].name : "?";
    res.diagnostic = to_string(sol.status) + " after " + std::to_string(sol.iterations) +
                     " iterations; worst constraint " + worst + " violation " + std::to_string(sol.best_violation);
    return res;
  }
  const std::size_t n = nodes[0].n;
  res.P = Matrix(n, n);
  for (NodeId i = 0; i < N; ++i) {
    auto& ns = res.nodes[i];
    const RecoveredGains r = recover_gains(nodes[i], ns.X, ns.M, cfg.gamma);
    ns.L_mu = r.L_mu;
    ns.K_mu = r.K_mu;
    ns.gains = split_gains(nodes[i], r);
    res.P += ns.X.block(0, 0, n, n);
  }
  res.P = (res.P * (1.0 / (cfg.gamma * cfg.gamma))).symmetrized();
  return res;
}

struct DetectorDesign {
  std::vector<Matrix> Q;     // per node, n_omega x n_omega, > 0
  std::vector<Matrix> Qbar;  // per node, n x n, >= 0
};

inline std::vector<AugmentedNode> augment_all(const PlantModel& plant, std::span<const NodeSensor> sensors,
                                              std::span<const TrackerModel> trackers, const DetectorDesign& w) {
  if (sensors.size() != trackers.size() || w.Q.size() != sensors.size() || w.Qbar.size() != sensors.size()) {
    throw DimensionError("per-node sensor, tracker and weight lists must have equal length");
  }
  std::vector<AugmentedNode> nodes;
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    nodes.push_back(augment(plant, sensors[i], trackers[i], w.Q[i], w.Qbar[i]));
  }
  return nodes;
}

inline SynthesisResult synthesize(const DirectedGraph& g, const PlantModel& plant, std::span<const NodeSensor> sensors,
                                  std::span<const TrackerModel> trackers, const DetectorDesign& weights,
                                  const SynthesisConfig& cfg) {
  const auto nodes = augment_all(plant, sensors, trackers, weights);
  return synthesize_nodes(g, nodes, cfg);
}

/// Baseline filter gains (L_i, K_i) from the same LMIs without the tracker.
inline SynthesisResult synthesize_baseline(const DirectedGraph& g, const PlantModel& plant,
                                           std::span<const NodeSensor> sensors, std::span<const Matrix> weights,
                                           const SynthesisConfig& cfg) {
  std::vector<AugmentedNode> nodes;
  for (std::size_t i = 0; i < sensors.size(); ++i) nodes.push_back(augment_baseline(plant, sensors[i], weights[i]));
  return synthesize_nodes(g, nodes, cfg);
}

inline std::vector<FilterGains> baseline_gains(const SynthesisResult& r) {
  if (!r.feasible() || !r.baseline) throw ModelError("baseline gains require a feasible baseline synthesis");
  std::vector<FilterGains> out;
  for (const auto& ns : r.nodes) out.push_back({ns.L_mu, ns.K_mu});
  return out;
}

struct BisectionProbe {
  double gamma;
  SdpStatus status;
  std::size_t iterations;
};

struct BisectionResult {
  SynthesisResult best;  // feasible result at the smallest certified gamma, or the failed probe at hi
  std::vector<BisectionProbe> probes;
};

/// Geometric bisection for the smallest gamma the solver certifies, stopping
/// when hi/lo <= tol. Feasibility is monotone in gamma: every gamma-dependent
/// block is -gamma^2 times a positive semidefinite matrix.
template <class Probe>
BisectionResult bisect_gamma(Probe&& probe, double lo, double hi, double tol = 1.05) {
  if (!(lo > 0.0) || !(hi > lo) || !(tol > 1.0)) throw ConfigError("bisection needs 0 < lo < hi and tol > 1");
  BisectionResult out;
  auto run = [&](double gamma) {
    SynthesisResult r = probe(gamma);
    out.probes.push_back({gamma, r.status, r.iterations});
    return r;
  };
  SynthesisResult at_hi = run(hi);
  if (!at_hi.feasible()) {
    out.best = std::move(at_hi);
    return out;
  }
  out.best = std::move(at_hi);
  SynthesisResult at_lo = run(lo);
  if (at_lo.feasible()) {
    out.best = std::move(at_lo);
    return out;
  }
  while (hi / lo > tol) {
    const double mid = std::sqrt(lo * hi);
    SynthesisResult r = run(mid);
    if (r.feasible()) {
      hi = mid;
      out.best = std::move(r);
    } else {
      lo = mid;
    }
  }
  return out;
}

}  // namespace attackdet
