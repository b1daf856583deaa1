#pragma once

// Plant, sensors, baseline consensus filter, attack inputs, and the auxiliary
// input-tracking model. augment() assembles the per-node augmented matrices
// used by the detector synthesis.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "attackdet/errors.hpp"
#include "attackdet/graph.hpp"
#include "attackdet/linalg.hpp"

namespace attackdet {

/// dx/dt = A x + B2 xi,  x(0) = x0.  A may be unstable.
struct PlantModel {
  Matrix A;
  Matrix B2;
  Vector x0;

  PlantModel() = default;
  PlantModel(Matrix a, Matrix b2, Vector initial) : A(std::move(a)), B2(std::move(b2)), x0(std::move(initial)) {
    if (!A.square() || A.rows() == 0) throw DimensionError("plant.A must be square and non-empty");
    if (B2.rows() != A.rows() || B2.cols() == 0) throw DimensionError("plant.B2 must be n x m with m >= 1");
    if (x0.empty()) x0.assign(A.rows(), 0.0);
    if (x0.size() != A.rows()) throw DimensionError("plant.x0 must have n entries");
  }

  std::size_t n() const { return A.rows(); }
  std::size_t m() const { return B2.cols(); }
};

/// y_i = C2 x + D2 xi + Dbar2 xi_i, with E_2i = D2 D2' + Dbar2 Dbar2' > 0.
struct NodeSensor {
  Matrix C2;
  Matrix D2;
  Matrix Dbar2;

  NodeSensor() = default;
  NodeSensor(Matrix c2, Matrix d2, Matrix dbar2)
      : C2(std::move(c2)), D2(std::move(d2)), Dbar2(std::move(dbar2)) {
    const std::size_t r = C2.rows();
    if (r == 0 || D2.rows() != r || Dbar2.rows() != r) {
      throw DimensionError("sensor: C2, D2, Dbar2 must share row count r_i >= 1");
    }
    if (Dbar2.cols() == 0) throw DimensionError("sensor: Dbar2 must have m_i >= 1 columns");
    const double emin = lambda_min(E2());
    if (!(emin > Tolerances::kPositiveDefinite)) {
      throw ModelError("E_2i not positive definite (min eigenvalue " + std::to_string(emin) + ")");
    }
  }

  std::size_t r() const { return C2.rows(); }
  std::size_t m_i() const { return Dbar2.cols(); }
  Matrix E2() const { return D2 * D2.transpose() + Dbar2 * Dbar2.transpose(); }
};

/// Baseline observer gains: injection L_i (n x r_i) and consensus K_i (n x n).
struct FilterGains {
  Matrix L;
  Matrix K;
};

/// d(omega)/dt = Omega omega + Gamma nu,  eta = [I 0] omega.
struct TrackerModel {
  Matrix Omega;
  Matrix Gamma;

  TrackerModel() = default;
  TrackerModel(Matrix omega, Matrix gamma) : Omega(std::move(omega)), Gamma(std::move(gamma)) {
    if (!Omega.square()) throw DimensionError("tracker: Omega must be square");
    if (Gamma.rows() != Omega.rows()) throw DimensionError("tracker: Gamma must be n_omega x n");
    if (Omega.rows() < Gamma.cols()) throw DimensionError("tracker: n_omega must be >= n");
    if (!Omega.all_finite() || !Gamma.all_finite()) throw NumericalError("tracker: non-finite entry");
  }

  std::size_t n() const { return Gamma.cols(); }
  std::size_t order() const { return Omega.rows(); }
  Matrix output() const { return selector(n(), order()); }
};

/// Tracker for G_i(s) = I/(s + 2 eps): Omega = [[0, I], [0, -2 eps I]], Gamma = [0; -I].
inline TrackerModel lowpass_tracker(std::size_t n, double eps) {
  if (!(eps > 0.0)) throw ModelError("lowpass tracker: epsilon must be positive");
  Matrix omega(2 * n, 2 * n);
  Matrix gamma(2 * n, n);
  for (std::size_t k = 0; k < n; ++k) {
    omega(k, n + k) = 1.0;
    omega(n + k, n + k) = -2.0 * eps;
    gamma(n + k, k) = -1.0;
  }
  return TrackerModel(std::move(omega), std::move(gamma));
}

enum class AttackKind { none, constant_bias, lowpass_transient, l2_pulse };

inline std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::none: return "none";
    case AttackKind::constant_bias: return "constant_bias";
    case AttackKind::lowpass_transient: return "lowpass_transient";
    case AttackKind::l2_pulse: return "l2_pulse";
  }
  return "none";
}

inline AttackKind attack_kind_from_string(const std::string& s) {
  if (s == "none") return AttackKind::none;
  if (s == "constant_bias") return AttackKind::constant_bias;
  if (s == "lowpass_transient") return AttackKind::lowpass_transient;
  if (s == "l2_pulse") return AttackKind::l2_pulse;
  throw ConfigError("unknown attack kind '" + s + "'");
}

/// Additive input f_i on a node's observer dynamics.
///   constant_bias:      value * 1{t >= t_on}
///   lowpass_transient:  value * (1 - exp(-(t - t_on)/tau)) * 1{t >= t_on}
///   l2_pulse:           value * 1{t_on <= t < t_off}
struct AttackSignal {
  AttackKind kind = AttackKind::none;
  Vector value;          // f_infinity, or pulse amplitude
  double t_on = 0.0;     // s
  double t_off = 0.0;    // s, l2_pulse only
  double tau = 1.0;      // s, lowpass_transient only

  bool has_finite_limit() const {
    return kind == AttackKind::constant_bias || kind == AttackKind::lowpass_transient;
  }

  /// Value as t -> infinity for finite-limit kinds; zero otherwise.
  Vector limit(std::size_t n) const {
    if (has_finite_limit()) return value;
    return Vector(n, 0.0);
  }

  /// Times where the signal jumps.
  std::vector<double> discontinuities() const {
    switch (kind) {
      case AttackKind::constant_bias: return {t_on};
      case AttackKind::l2_pulse: return {t_on, t_off};
      default: return {};
    }
  }
};

inline Vector attack_value(const AttackSignal& a, double t, std::size_t n) {
  Vector f(n, 0.0);
  if (a.kind == AttackKind::none || t < a.t_on) return f;
  if (a.value.size() != n) throw DimensionError("attack value must have n entries");
  switch (a.kind) {
    case AttackKind::constant_bias:
      return a.value;
    case AttackKind::lowpass_transient: {
      const double s = 1.0 - std::exp(-(t - a.t_on) / a.tau);
      return s * a.value;
    }
    case AttackKind::l2_pulse:
      if (t < a.t_off) return a.value;
      return f;
    default:
      return f;
  }
}

/// Per-node augmented matrices for the stacked error [z_i; delta_i]:
///   A_mu  = [[A, -[I 0]], [0, Omega]]      B1_mu = [I; Gamma]
///   B2_mu = [[-B2, 0], [0, 0]]             D2_mu = [D2 Dbar2]
///   C2_mu = [C2 0]                         H_mu  = [I 0]
///   Q_mu  = blockdiag(Qbar, Q)
/// In baseline mode (no tracker) the omega block is absent, B1_mu is empty
/// and Q_mu is the state-error weight alone.
struct AugmentedNode {
  std::size_t n = 0;
  std::size_t n_omega = 0;
  std::size_t m = 0;
  std::size_t m_i = 0;
  std::size_t r = 0;

  Matrix A_mu;
  Matrix B1_mu;
  Matrix B2_mu;
  Matrix C2_mu;
  Matrix D2_mu;
  Matrix H_mu;
  Matrix Q_mu;
  Matrix E2;
  Matrix E2_inv;

  std::size_t dim() const { return n + n_omega; }
  std::size_t disturbance_dim() const { return m + m_i; }
  std::size_t nu_dim() const { return B1_mu.cols(); }
  bool baseline() const { return n_omega == 0; }
};

namespace detail {

inline void check_weight(const Matrix& w, std::size_t dim, bool definite, const char* name) {
  if (w.rows() != dim || w.cols() != dim) {
    throw DimensionError(std::string(name) + " must be " + std::to_string(dim) + "x" + std::to_string(dim));
  }
  if (!is_symmetric(w, 1e-9)) throw ModelError(std::string(name) + " must be symmetric");
  const double lmin = lambda_min(w);
  if (definite ? !(lmin > 0.0) : lmin < -1e-12) {
    throw ModelError(std::string(name) + (definite ? " must be positive definite" : " must be positive semidefinite"));
  }
}

inline void fill_common(AugmentedNode& node, const PlantModel& p, const NodeSensor& s) {
  if (s.C2.cols() != p.n()) throw DimensionError("sensor C2 must have n columns");
  if (s.D2.cols() != p.m()) throw DimensionError("sensor D2 must have m columns");
  node.n = p.n();
  node.m = p.m();
  node.m_i = s.m_i();
  node.r = s.r();
  node.D2_mu = hstack({s.D2, s.Dbar2});
  node.E2 = node.D2_mu * node.D2_mu.transpose();
  const double emin = lambda_min(node.E2);
  if (!(emin > Tolerances::kPositiveDefinite)) {
    throw ModelError("E_2i not positive definite (min eigenvalue " + std::to_string(emin) + ")");
  }
  node.E2_inv = inverse(node.E2).symmetrized();
}

}  // namespace detail

inline AugmentedNode augment(const PlantModel& p, const NodeSensor& s, const TrackerModel& tr,
                             const Matrix& Q, const Matrix& Qbar) {
  if (tr.n() != p.n()) throw DimensionError("tracker dimension must match plant n");
  AugmentedNode node;
  detail::fill_common(node, p, s);
  const std::size_t n = p.n(), nw = tr.order(), dim = n + nw;
  node.n_omega = nw;
  detail::check_weight(Q, nw, true, "Q_i");
  detail::check_weight(Qbar, n, false, "Qbar_i");

  node.A_mu = Matrix(dim, dim);
  node.A_mu.set_block(0, 0, p.A);
  node.A_mu.set_block(0, n, -tr.output());
  node.A_mu.set_block(n, n, tr.Omega);

  node.B1_mu = vstack({Matrix::identity(n), tr.Gamma});

  node.B2_mu = Matrix(dim, node.m + node.m_i);
  node.B2_mu.set_block(0, 0, -p.B2);

  node.C2_mu = hstack({s.C2, Matrix(node.r, nw)});
  node.H_mu = selector(n, dim);
  node.Q_mu = block_diag({Qbar, Q});
  return node;
}

/// Augmented data for synthesizing the baseline filter gains (L_i, K_i) with
/// the same machinery: no tracker, no nu input, weight on the state error.
inline AugmentedNode augment_baseline(const PlantModel& p, const NodeSensor& s, const Matrix& weight) {
  AugmentedNode node;
  detail::fill_common(node, p, s);
  const std::size_t n = p.n();
  detail::check_weight(weight, n, false, "baseline weight");
  node.n_omega = 0;
  node.A_mu = p.A;
  node.B1_mu = Matrix(n, 0);
  node.B2_mu = Matrix(n, node.m + node.m_i);
  node.B2_mu.set_block(0, 0, -p.B2);
  node.C2_mu = s.C2;
  node.H_mu = Matrix::identity(n);
  node.Q_mu = weight;
  return node;
}

struct ResidualOutputs {
  Vector zeta;      // y_i - C2_i xhat_i
  Vector zeta_bar;  // sum_{j in V_i} (xhat_j - xhat_i)
};

/// Detector inputs available locally at node i.
inline ResidualOutputs residual_outputs(std::span<const Vector> estimates, std::span<const double> y_i,
                                        const NodeSensor& sensor, const DirectedGraph& g, NodeId i) {
  if (estimates.size() != g.node_count()) {
    throw DimensionError("residual_outputs: missing neighbor estimate");
  }
  const Vector& xi = estimates[i];
  ResidualOutputs out;
  out.zeta = Vector(y_i.begin(), y_i.end()) - sensor.C2.apply(xi);
  out.zeta_bar.assign(xi.size(), 0.0);
  for (NodeId j : g.in_neighbors(i)) {
    if (estimates[j].size() != xi.size()) {
      throw DimensionError("residual_outputs: missing neighbor estimate for node " + std::to_string(j + 1));
    }
    for (std::size_t k = 0; k < xi.size(); ++k) out.zeta_bar[k] += estimates[j][k] - xi[k];
  }
  return out;
}

}  // namespace attackdet
