#pragma once

// Time-domain simulation of plant + attacked observer network + detector
// network, and the verification metrics computed along the way.
//
// Simulated state, in order:
//   x | xhat_1..xhat_N | omega_1..omega_N | (ehat_1, omegahat_1)..(ehat_N, omegahat_N)
// omega_i is the true tracker state driven by f_i. It is kept only as ground
// truth for delta_i = omega_i - omegahat_i. The detector block at the end reads
// nothing but (zeta_i, zetabar_i) and its own state.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attackdet/errors.hpp"
#include "attackdet/graph.hpp"
#include "attackdet/linalg.hpp"
#include "attackdet/model.hpp"
#include "attackdet/random.hpp"
#include "attackdet/synth.hpp"

namespace attackdet {

// ---------------------------------------------------------------- integrator

/// Field signature: f(t, state, derivative_out).
using VectorField = std::function<void(double, std::span<const double>, std::span<double>)>;

/// Workspace-carrying classical RK4.
class Rk4 {
 public:
  explicit Rk4(std::size_t dim) : k1_(dim), k2_(dim), k3_(dim), k4_(dim), tmp_(dim) {}

  template <class F>
  void step(F&& f, double t, double h, std::vector<double>& s) {
    if (!(h > 0.0)) throw NumericalError("rk4: step must be positive");
    const std::size_t d = s.size();
    f(t, std::span<const double>(s), std::span<double>(k1_));
    check(k1_, t);
    for (std::size_t k = 0; k < d; ++k) tmp_[k] = s[k] + 0.5 * h * k1_[k];
    f(t + 0.5 * h, std::span<const double>(tmp_), std::span<double>(k2_));
    check(k2_, t);
    for (std::size_t k = 0; k < d; ++k) tmp_[k] = s[k] + 0.5 * h * k2_[k];
    f(t + 0.5 * h, std::span<const double>(tmp_), std::span<double>(k3_));
    check(k3_, t);
    for (std::size_t k = 0; k < d; ++k) tmp_[k] = s[k] + h * k3_[k];
    f(t + h, std::span<const double>(tmp_), std::span<double>(k4_));
    check(k4_, t);
    for (std::size_t k = 0; k < d; ++k) s[k] += (h / 6.0) * (k1_[k] + 2.0 * k2_[k] + 2.0 * k3_[k] + k4_[k]);
  }

 private:
  static void check(const std::vector<double>& v, double t) {
    for (double e : v) {
      if (!std::isfinite(e)) throw DivergenceError(t);
    }
  }
  std::vector<double> k1_, k2_, k3_, k4_, tmp_;
};

inline Vector rk4_step(const VectorField& f, const Vector& state, double t, double h) {
  Rk4 rk(state.size());
  Vector s = state;
  rk.step(f, t, h, s);
  return s;
}

// -------------------------------------------------------------- disturbances

enum class DisturbanceKind { none, bandlimited, pulse };

inline DisturbanceKind disturbance_kind_from_string(const std::string& s) {
  if (s == "none") return DisturbanceKind::none;
  if (s == "bandlimited") return DisturbanceKind::bandlimited;
  if (s == "pulse") return DisturbanceKind::pulse;
  throw ConfigError("unknown disturbance kind '" + s + "'");
}

inline std::string to_string(DisturbanceKind k) {
  switch (k) {
    case DisturbanceKind::none: return "none";
    case DisturbanceKind::bandlimited: return "bandlimited";
    case DisturbanceKind::pulse: return "pulse";
  }
  return "none";
}

struct DisturbanceSpec {
  DisturbanceKind kind = DisturbanceKind::none;
  double amplitude = 0.0;
  double bandwidth_hz = 1.0;   // bandlimited: components drawn in (0, bandwidth]
  std::size_t components = 8;  // sinusoids per channel
  double t_on = 0.0;           // pulse window
  double t_off = 0.0;
};

/// Smooth window: 1 up to 0.6 T, cosine taper to 0 at 0.8 T, then 0.
inline double disturbance_window(double t, double horizon) {
  const double a = 0.6 * horizon, b = 0.8 * horizon;
  if (t <= a) return 1.0;
  if (t >= b) return 0.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * (t - a) / (b - a)));
}

/// Deterministic given (spec, channels, horizon, seed).
class DisturbanceGenerator {
 public:
  DisturbanceGenerator() = default;
  DisturbanceGenerator(const DisturbanceSpec& spec, std::size_t channels, double horizon, std::uint64_t seed)
      : spec_(spec), channels_(channels), horizon_(horizon) {
    if (spec.kind == DisturbanceKind::bandlimited) {
      if (!(spec.bandwidth_hz > 0.0) || spec.components == 0) {
        throw ConfigError("disturbance: bandlimited needs bandwidth_hz > 0 and components >= 1");
      }
      Rng rng(seed);
      const double norm = 1.0 / std::sqrt(static_cast<double>(spec.components));
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t k = 0; k < spec.components; ++k) {
          const double f = spec.bandwidth_hz * (1.0 - rng.uniform());  // (0, bw]
          const double phase = 2.0 * std::numbers::pi * rng.uniform();
          const double amp = norm * rng.normal();
          tones_.push_back({2.0 * std::numbers::pi * f, phase, amp});
        }
      }
    } else if (spec.kind == DisturbanceKind::pulse) {
      if (!(spec.t_off > spec.t_on)) throw ConfigError("disturbance: pulse needs t_off > t_on");
    }
  }

  std::size_t channels() const { return channels_; }

  /// tm: a time strictly inside the current integration segment, used to pick
  /// the side of a pulse edge.
  void value(double t, double tm, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    switch (spec_.kind) {
      case DisturbanceKind::none: return;
      case DisturbanceKind::pulse: {
        if (tm >= spec_.t_on && tm < spec_.t_off) std::fill(out.begin(), out.end(), spec_.amplitude);
        return;
      }
      case DisturbanceKind::bandlimited: {
        const double win = spec_.amplitude * disturbance_window(t, horizon_);
        if (win == 0.0) return;
        for (std::size_t c = 0; c < channels_; ++c) {
          double s = 0.0;
          for (std::size_t k = 0; k < spec_.components; ++k) {
            const auto& tone = tones_[c * spec_.components + k];
            s += tone.amp * std::sin(tone.omega * t + tone.phase);
          }
          out[c] = win * s;
        }
        return;
      }
    }
  }

  std::vector<double> breakpoints() const {
    if (spec_.kind == DisturbanceKind::pulse) return {spec_.t_on, spec_.t_off};
    return {};
  }

 private:
  struct Tone {
    double omega, phase, amp;
  };
  DisturbanceSpec spec_;
  std::size_t channels_ = 0;
  double horizon_ = 1.0;
  std::vector<Tone> tones_;
};

// ------------------------------------------------------------------- models

/// Everything about the network except the detector gains.
struct NetworkModel {
  DirectedGraph graph;
  PlantModel plant;
  std::vector<NodeSensor> sensors;
  std::vector<TrackerModel> trackers;
  DetectorDesign weights;
  std::vector<double> alphas;

  std::size_t size() const { return graph.node_count(); }

  void validate() const {
    const std::size_t N = size();
    if (sensors.size() != N || trackers.size() != N || weights.Q.size() != N || weights.Qbar.size() != N ||
        alphas.size() != N) {
      throw DimensionError("network model: per-node lists must have one entry per graph node");
    }
    for (std::size_t i = 0; i < N; ++i) {
      if (sensors[i].C2.cols() != plant.n()) throw DimensionError("network model: sensor C2 column count");
      if (trackers[i].n() != plant.n()) throw DimensionError("network model: tracker dimension");
    }
  }

  std::vector<AugmentedNode> augmented() const { return augment_all(plant, sensors, trackers, weights); }
};

struct Scenario {
  std::string name = "default";
  double horizon = 10.0;
  double step = 0.0;  // <= 0: automatic
  std::optional<Vector> x0;
  double random_x0 = 0.0;  // > 0: x0 ~ N(0, random_x0^2 I) from the seed
  DisturbanceSpec disturbance;
  std::vector<AttackSignal> attacks;  // per node; empty means none
  std::uint64_t seed = 1;
  std::size_t record_stride = 0;  // 0: record about every 0.01 s
  std::size_t realizations = 1;
  bool record_detector_inputs = false;
};

// ----------------------------------------------------------- closed loop

/// Disturbance- and attack-free error dynamics of the stacked [z_i; delta_i]
/// (block order by node).
inline Matrix closed_loop_matrix(const DirectedGraph& g, const PlantModel& plant, std::span<const NodeSensor> sensors,
                                 std::span<const TrackerModel> trackers, std::span<const NodeDetectorGains> gains) {
  const std::size_t N = g.node_count();
  if (sensors.size() != N || trackers.size() != N || gains.size() != N) {
    throw DimensionError("closed_loop_matrix: per-node lists must match the graph");
  }
  const std::size_t n = plant.n();
  std::vector<std::size_t> off(N + 1, 0);
  for (std::size_t i = 0; i < N; ++i) off[i + 1] = off[i] + n + trackers[i].order();
  Matrix Acl(off[N], off[N]);
  for (NodeId i = 0; i < N; ++i) {
    const auto& gi = gains[i];
    const auto& C = sensors[i].C2;
    const double p = static_cast<double>(g.in_degree(i));
    if (gi.L_tilde.rows() != n || gi.K_tilde.rows() != n || gi.F_eta.rows() != trackers[i].order() ||
        gi.H_eta.rows() != trackers[i].order()) {
      throw DimensionError("closed_loop_matrix: gain dimensions");
    }
    Acl.set_block(off[i], off[i], plant.A - gi.L_tilde * C - gi.K_tilde * p);
    Acl.set_block(off[i], off[i] + n, -trackers[i].output());
    Acl.set_block(off[i] + n, off[i], -(gi.F_eta * C) - gi.H_eta * p);
    Acl.set_block(off[i] + n, off[i] + n, trackers[i].Omega);
    for (NodeId j : g.in_neighbors(i)) {
      if (off[j + 1] - off[j] < n) throw DimensionError("closed_loop_matrix: neighbor block");
      Acl.add_block(off[i], off[j], gi.K_tilde);
      Acl.add_block(off[i] + n, off[j], gi.H_eta);
    }
  }
  return Acl;
}

inline std::vector<NodeDetectorGains> detector_gains(const SynthesisResult& r) {
  std::vector<NodeDetectorGains> out;
  for (const auto& ns : r.nodes) out.push_back(ns.gains);
  return out;
}

// -------------------------------------------------------------- dissipation

/// Streaming check of, per node and interior grid point,
///   Vdot_i + 2 alpha_i V_i + q_i <= sum_{j in V_i} pi_j V_j + gamma^2 |w_i|^2
/// with Vdot by central differences, and of the summed form
///   sum_i (Vdot_i + q_i) + eps sum_i V_i <= gamma^2 sum_i |w_i|^2.
/// Points next to a segment boundary (attack edges) are skipped.
class DissipationMonitor {
 public:
  struct Result {
    double min_slack = std::numeric_limits<double>::infinity();
    double min_normalized = std::numeric_limits<double>::infinity();
    double time_of_min = 0.0;
    std::size_t node_of_min = 0;
    double min_summed_normalized = std::numeric_limits<double>::infinity();
    double epsilon = 0.0;
    std::size_t points = 0;
  };

  DissipationMonitor() = default;
  DissipationMonitor(const DirectedGraph& g, std::vector<double> alphas, double gamma)
      : g_(g), alphas_(std::move(alphas)), gamma2_(gamma * gamma), pi_(pi_weights(g, alphas_)) {
    result_.epsilon = summed_decay_rate(g, alphas_);
  }

  /// boundary: the point is an integration-segment edge.
  void push(double t, std::span<const double> V, std::span<const double> q, std::span<const double> wsq,
            bool boundary) {
    Sample s{t, Vector(V.begin(), V.end()), Vector(q.begin(), q.end()), Vector(wsq.begin(), wsq.end()), boundary};
    window_.push_back(std::move(s));
    if (window_.size() > 3) window_.erase(window_.begin());
    if (window_.size() == 3 && !window_[1].boundary) evaluate();
  }

  const Result& result() const { return result_; }
  double slack_at_last() const { return last_normalized_; }

 private:
  struct Sample {
    double t;
    Vector V, q, wsq;
    bool boundary;
  };

  void evaluate() {
    const auto& a = window_[0];
    const auto& b = window_[1];
    const auto& c = window_[2];
    const double h2 = c.t - a.t;
    if (!(h2 > 0.0)) return;
    const std::size_t N = b.V.size();
    double worst_point = std::numeric_limits<double>::infinity();
    double sum_lhs = 0.0, sum_rhs = 0.0, sum_scale = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const double vdot = (c.V[i] - a.V[i]) / h2;
      double coupling = 0.0;
      for (NodeId j : g_.in_neighbors(i)) coupling += pi_[j] * b.V[j];
      const double lhs = vdot + 2.0 * alphas_[i] * b.V[i] + b.q[i];
      const double rhs = coupling + gamma2_ * b.wsq[i];
      const double slack = rhs - lhs;
      const double scale = std::abs(vdot) + 2.0 * alphas_[i] * b.V[i] + b.q[i] + coupling + gamma2_ * b.wsq[i];
      scale_ = std::max(scale_, scale);
      sum_lhs += vdot + b.q[i] + result_.epsilon * b.V[i];
      sum_rhs += gamma2_ * b.wsq[i];
      sum_scale += std::abs(vdot) + b.q[i] + result_.epsilon * b.V[i] + gamma2_ * b.wsq[i];
      if (slack < result_.min_slack) result_.min_slack = slack;
      const double norm = scale_ > 0.0 ? slack / scale_ : 0.0;
      worst_point = std::min(worst_point, norm);
      if (norm < result_.min_normalized) {
        result_.min_normalized = norm;
        result_.time_of_min = b.t;
        result_.node_of_min = i;
      }
    }
    summed_scale_ = std::max(summed_scale_, sum_scale);
    const double summed = summed_scale_ > 0.0 ? (sum_rhs - sum_lhs) / summed_scale_ : 0.0;
    result_.min_summed_normalized = std::min(result_.min_summed_normalized, summed);
    last_normalized_ = worst_point;
    ++result_.points;
  }

  DirectedGraph g_;
  std::vector<double> alphas_;
  double gamma2_ = 1.0;
  std::vector<double> pi_;
  std::vector<Sample> window_;
  double scale_ = 0.0;
  double summed_scale_ = 0.0;
  double last_normalized_ = 0.0;
  Result result_;
};

/// Batch form over per-time arrays V[t][i], q[t][i], wsq[t][i]. Grid points
/// whose time is in `boundaries` are treated as segment edges.
inline DissipationMonitor::Result dissipation_slack(std::span<const double> times,
                                                    std::span<const Vector> V, std::span<const Vector> q,
                                                    std::span<const Vector> wsq, const DirectedGraph& g,
                                                    std::span<const double> alphas, double gamma,
                                                    std::span<const double> boundaries = {}) {
  if (V.size() != times.size() || q.size() != times.size() || wsq.size() != times.size()) {
    throw DimensionError("dissipation_slack: series lengths differ");
  }
  DissipationMonitor mon(g, std::vector<double>(alphas.begin(), alphas.end()), gamma);
  for (std::size_t k = 0; k < times.size(); ++k) {
    const bool edge = std::find(boundaries.begin(), boundaries.end(), times[k]) != boundaries.end();
    mon.push(times[k], V[k], q[k], wsq[k], edge);
  }
  return mon.result();
}

// -------------------------------------------------------------------- trace

struct NodeSample {
  Vector xhat, ehat, omega_hat, eta_hat, zeta, zeta_bar;
  Vector z, delta, f;  // ground truth
  double V = 0.0;
};

struct TraceRow {
  double t = 0.0;
  Vector x;
  std::vector<NodeSample> nodes;
};

/// Detector inputs at each RK4 stage of each step.
struct DetectorInputLog {
  Vector initial_state;
  std::vector<double> times;
  std::vector<double> steps;
  std::vector<Vector> stages;  // 4 per step, each the concatenated (zeta_i, zetabar_i)
  std::vector<Vector> states;  // detector state after each step
};

struct SimulationTrace {
  std::string scenario;
  double step = 0.0;
  std::size_t steps = 0;
  double stiffness = 0.0;  // ||system matrix||_2
  Vector x0;
  std::vector<TraceRow> rows;
  std::vector<AttackSignal> attacks;
  // Full-grid trapezoid integrals, per node.
  Vector error_energy;     // int delta' Q delta + z' Qbar z
  Vector input_energy;     // int |w_i|^2, w_i = (nu_i, xi, xi_i)
  Vector tracking_l2;      // int |etahat_i - f_i|^2
  Vector tracking_l2_last; // same over [T - 1, T]
  Vector max_residual;     // max_t |etahat_i|
  Vector final_residual_error;  // |etahat_i(T) - f_i(T)|
  double final_error_norm = 0.0;  // |[z; delta](T)| stacked over nodes
  DissipationMonitor::Result dissipation;
  bool coarse_grid = false;
  std::optional<DetectorInputLog> detector_log;
};

inline double hinf_ratio(const SimulationTrace& tr, const Matrix& P, double gamma) {
  (void)gamma;
  double num = 0.0, den = quadratic_form(P, tr.x0);
  for (double e : tr.error_energy) num += e;
  for (double e : tr.input_energy) den += e;
  if (!(den > 0.0)) throw NumericalError("hinf_ratio: undefined ratio (zero initial state and zero input energy)");
  return num / den;
}

// ---------------------------------------------------------------- simulator

namespace detail {

inline void gemv_add(const Matrix& M, const double* x, double* y, double scale = 1.0) {
  const std::size_t r = M.rows(), c = M.cols();
  const double* a = M.data().data();
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += a[i * c + j] * x[j];
    y[i] += scale * s;
  }
}

}  // namespace detail

/// The detector network alone: state (ehat_i, omegahat_i) per node, inputs
/// (zeta_i, zetabar_i) per node.
class DetectorNetwork {
 public:
  DetectorNetwork(const NetworkModel& model, std::span<const FilterGains> baseline, const SynthesisResult& det)
      : g_(model.graph), n_(model.plant.n()) {
    const std::size_t N = model.size();
    if (baseline.size() != N) throw DimensionError("baseline gains: one pair per node");
    if (det.nodes.size() != N) throw DimensionError("detector gains: one set per node");
    std::size_t off = 0, in_off = 0;
    for (std::size_t i = 0; i < N; ++i) {
      const auto& s = model.sensors[i];
      const auto& gn = det.nodes[i].gains;
      Node nd;
      nd.nw = model.trackers[i].order();
      nd.r = s.r();
      if (baseline[i].L.rows() != n_ || baseline[i].L.cols() != nd.r || baseline[i].K.rows() != n_ ||
          baseline[i].K.cols() != n_) {
        throw DimensionError("baseline gains: L_i must be n x r_i and K_i n x n");
      }
      if (gn.L_tilde.cols() != nd.r || gn.F_eta.rows() != nd.nw) {
        throw DimensionError("detector gains do not match the node dimensions");
      }
      nd.ALC = model.plant.A - baseline[i].L * s.C2;
      nd.K = baseline[i].K;
      nd.C = s.C2;
      nd.F = gn.L_tilde - baseline[i].L;
      nd.H = gn.K_tilde - baseline[i].K;
      nd.F_eta = gn.F_eta;
      nd.H_eta = gn.H_eta;
      nd.Omega = model.trackers[i].Omega;
      nd.offset = off;
      nd.input_offset = in_off;
      off += n_ + nd.nw;
      in_off += nd.r + n_;
      nodes_.push_back(std::move(nd));
    }
    dim_ = off;
    input_dim_ = in_off;
    work_res_.resize(input_dim_);
  }

  std::size_t dim() const { return dim_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t state_offset(NodeId i) const { return nodes_[i].offset; }
  std::size_t order(NodeId i) const { return nodes_[i].nw; }

  /// d/dt (ehat, omegahat) from the detector state and its inputs only.
  void field(const double* s, const double* inputs, double* ds) {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const auto& nd = nodes_[i];
      const double* e = s + nd.offset;
      const double* w = e + n_;
      const double* zeta = inputs + nd.input_offset;
      const double* zbar = zeta + nd.r;
      double* res = work_res_.data() + nd.input_offset;  // zeta - C ehat
      double* cons = res + nd.r;                         // zetabar + sum (ehat_j - ehat_i)
      for (std::size_t k = 0; k < nd.r; ++k) res[k] = zeta[k];
      detail::gemv_add(nd.C, e, res, -1.0);
      for (std::size_t k = 0; k < n_; ++k) cons[k] = 0.0;
      for (NodeId j : g_.in_neighbors(i)) {
        const double* ej = s + nodes_[j].offset;
        for (std::size_t k = 0; k < n_; ++k) cons[k] += ej[k] - e[k];
      }
      double* de = ds + nd.offset;
      double* dw = de + n_;
      for (std::size_t k = 0; k < n_ + nd.nw; ++k) de[k] = 0.0;
      detail::gemv_add(nd.ALC, e, de);
      detail::gemv_add(nd.K, cons, de);  // cons holds the neighbor sum only so far
      for (std::size_t k = 0; k < n_; ++k) {
        de[k] -= w[k];
        cons[k] += zbar[k];
      }
      detail::gemv_add(nd.F, res, de);
      detail::gemv_add(nd.H, cons, de);
      detail::gemv_add(nd.Omega, w, dw);
      detail::gemv_add(nd.F_eta, res, dw);
      detail::gemv_add(nd.H_eta, cons, dw);
    }
  }

 private:
  struct Node {
    std::size_t nw = 0, r = 0, offset = 0, input_offset = 0;
    Matrix ALC, K, C, F, H, F_eta, H_eta, Omega;
  };
  DirectedGraph g_;
  std::size_t n_;
  std::vector<Node> nodes_;
  std::size_t dim_ = 0, input_dim_ = 0;
  std::vector<double> work_res_;
};

/// Plant, observers, true trackers and detector as one vector field.
class NetworkSimulator {
 public:
  NetworkSimulator(const NetworkModel& model, std::span<const FilterGains> baseline, const SynthesisResult& det)
      : model_(model), baseline_(baseline.begin(), baseline.end()), det_(model, baseline, det) {
    model.validate();
    const std::size_t N = model.size();
    n_ = model.plant.n();
    m_ = model.plant.m();
    std::size_t off = n_ + N * n_;
    for (std::size_t i = 0; i < N; ++i) {
      omega_off_.push_back(off);
      off += model.trackers[i].order();
    }
    det_off_ = off;
    dim_ = off + det_.dim();
    std::size_t d = m_;
    for (std::size_t i = 0; i < N; ++i) {
      dist_off_.push_back(d);
      d += model.sensors[i].m_i();
    }
    dist_dim_ = d;
    dist_.assign(dist_dim_, 0.0);
    attack_.assign(N * n_, 0.0);
    std::size_t io = 0;
    for (std::size_t i = 0; i < N; ++i) {
      input_off_.push_back(io);
      io += model.sensors[i].r() + n_;
    }
    inputs_.resize(det_.input_dim());
  }

  std::size_t dim() const { return dim_; }
  std::size_t detector_offset() const { return det_off_; }
  std::size_t omega_offset(NodeId i) const { return omega_off_[i]; }
  std::size_t xhat_offset(NodeId i) const { return n_ + i * n_; }
  std::size_t disturbance_dim() const { return dist_dim_; }
  DetectorNetwork& detector() { return det_; }

  /// Inputs during the next field evaluations.
  void set_inputs(std::span<const double> xi_all, std::span<const double> attacks) {
    std::copy(xi_all.begin(), xi_all.end(), dist_.begin());
    std::copy(attacks.begin(), attacks.end(), attack_.begin());
  }

  /// Computes (zeta_i, zetabar_i) into `inputs` from plant and observer states.
  void detector_inputs(const double* s, double* inputs) {
    const std::size_t N = model_.size();
    const double* x = s;
    std::size_t io = 0;
    for (std::size_t i = 0; i < N; ++i) {
      const auto& sen = model_.sensors[i];
      const double* xh = s + xhat_offset(i);
      double* zeta = inputs + io;
      for (std::size_t k = 0; k < sen.r(); ++k) zeta[k] = 0.0;
      detail::gemv_add(sen.C2, x, zeta);
      detail::gemv_add(sen.D2, dist_.data(), zeta);
      detail::gemv_add(sen.Dbar2, dist_.data() + dist_off_[i], zeta);
      detail::gemv_add(sen.C2, xh, zeta, -1.0);
      double* zbar = zeta + sen.r();
      for (std::size_t k = 0; k < n_; ++k) zbar[k] = 0.0;
      for (NodeId j : model_.graph.in_neighbors(i)) {
        const double* xj = s + xhat_offset(j);
        for (std::size_t k = 0; k < n_; ++k) zbar[k] += xj[k] - xh[k];
      }
      io += sen.r() + n_;
    }
  }

  void field(const double* s, double* ds, Vector* log_inputs) {
    const std::size_t N = model_.size();
    const auto& A = model_.plant.A;
    const double* x = s;
    for (std::size_t k = 0; k < n_; ++k) ds[k] = 0.0;
    detail::gemv_add(A, x, ds);
    detail::gemv_add(model_.plant.B2, dist_.data(), ds);

    detector_inputs(s, inputs_.data());
    for (std::size_t i = 0; i < N; ++i) {
      const auto& sen = model_.sensors[i];
      const double* xh = s + xhat_offset(i);
      double* dxh = ds + xhat_offset(i);
      for (std::size_t k = 0; k < n_; ++k) dxh[k] = attack_[i * n_ + k];
      detail::gemv_add(A, xh, dxh);
      const std::size_t io = input_off_[i];  // zeta_i = y_i - C xhat_i
      detail::gemv_add(baseline_[i].L, inputs_.data() + io, dxh);
      detail::gemv_add(baseline_[i].K, inputs_.data() + io + sen.r(), dxh);

      const auto& tr = model_.trackers[i];
      const double* w = s + omega_off_[i];
      double* dw = ds + omega_off_[i];
      for (std::size_t k = 0; k < tr.order(); ++k) dw[k] = 0.0;
      detail::gemv_add(tr.Omega, w, dw);
      nu_.assign(n_, 0.0);
      for (std::size_t k = 0; k < n_; ++k) nu_[k] = w[k] - attack_[i * n_ + k];
      detail::gemv_add(tr.Gamma, nu_.data(), dw);
    }
    if (log_inputs) log_inputs->assign(inputs_.begin(), inputs_.end());
    det_.field(s + det_off_, inputs_.data(), ds + det_off_);
  }

  /// The linear system matrix with all inputs zero.
  Matrix system_matrix() {
    const Vector saved_d = dist_, saved_a = attack_;
    std::fill(dist_.begin(), dist_.end(), 0.0);
    std::fill(attack_.begin(), attack_.end(), 0.0);
    Matrix S(dim_, dim_);
    Vector e(dim_, 0.0), col(dim_);
    for (std::size_t k = 0; k < dim_; ++k) {
      e[k] = 1.0;
      field(e.data(), col.data(), nullptr);
      for (std::size_t r = 0; r < dim_; ++r) S(r, k) = col[r];
      e[k] = 0.0;
    }
    dist_ = saved_d;
    attack_ = saved_a;
    return S;
  }

 private:
  const NetworkModel& model_;
  std::vector<FilterGains> baseline_;
  DetectorNetwork det_;
  std::size_t n_ = 0, m_ = 0, dim_ = 0, det_off_ = 0, dist_dim_ = 0;
  std::vector<std::size_t> omega_off_, dist_off_, input_off_;
  Vector dist_, attack_, nu_, inputs_;
};

struct SimulationOptions {
  double max_step = 0.01;
  double stiffness_factor = 0.05;  // h <= factor / ||system matrix||_2
  double divergence_bound = 1e12;
};

/// Piecewise-uniform grid: segment edges at 0, T and every attack or pulse
/// switch time in (0, T); each segment split into equal steps <= h_max.
inline std::vector<double> integration_breakpoints(const Scenario& sc, const DisturbanceGenerator& dist) {
  std::vector<double> b{0.0, sc.horizon};
  auto add = [&](double t) {
    if (t > 0.0 && t < sc.horizon) b.push_back(t);
  };
  for (const auto& a : sc.attacks) {
    if (a.kind == AttackKind::none) continue;
    add(a.t_on);
    if (a.kind == AttackKind::l2_pulse) add(a.t_off);
  }
  for (double t : dist.breakpoints()) add(t);
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return b;
}

/// Attack value on a segment: jumps resolved by the segment's interior time tm.
inline Vector attack_in_segment(const AttackSignal& a, double t, double tm, std::size_t n) {
  if (a.kind == AttackKind::constant_bias || a.kind == AttackKind::l2_pulse) return attack_value(a, tm, n);
  return attack_value(a, t, n);
}

inline Vector scenario_x0(const Scenario& sc, const PlantModel& plant) {
  Vector x0 = sc.x0 ? *sc.x0 : plant.x0;
  if (x0.size() != plant.n()) throw ConfigError("scenario x0 must have n entries");
  if (sc.random_x0 > 0.0) {
    Rng rng(sc.seed ^ 0x9e3779b97f4a7c15ULL);
    for (double& v : x0) v = sc.random_x0 * rng.normal();
  }
  return x0;
}

inline SimulationTrace simulate(const Scenario& sc, const NetworkModel& model, std::span<const FilterGains> baseline,
                                const SynthesisResult& det, const SimulationOptions& opt = {}) {
  if (!det.feasible() || det.baseline) throw ModelError("simulate needs a feasible detector synthesis");
  if (!(sc.horizon > 0.0)) throw ConfigError("scenario horizon must be positive");
  const std::size_t N = model.size();
  const std::size_t n = model.plant.n();
  std::vector<AttackSignal> attacks = sc.attacks;
  if (attacks.empty()) attacks.resize(N);
  if (attacks.size() != N) throw ConfigError("scenario attacks: one entry per node");
  for (const auto& a : attacks) {
    if (a.kind != AttackKind::none && a.value.size() != n) throw ConfigError("attack value must have n entries");
    if (a.kind == AttackKind::l2_pulse && !(a.t_off > a.t_on)) throw ConfigError("l2_pulse needs t_off > t_on");
    if (a.kind == AttackKind::lowpass_transient && !(a.tau > 0.0)) throw ConfigError("lowpass_transient needs tau > 0");
  }

  NetworkSimulator sim(model, baseline, det);
  DisturbanceGenerator dist(sc.disturbance, sim.disturbance_dim(), sc.horizon, sc.seed);

  SimulationTrace tr;
  tr.scenario = sc.name;
  tr.attacks = attacks;
  const Matrix sys = sim.system_matrix();
  tr.stiffness = norm2(sys);
  double h_max = opt.max_step;
  if (tr.stiffness > 0.0) h_max = std::min(h_max, opt.stiffness_factor / tr.stiffness);
  if (sc.step > 0.0) h_max = sc.step;
  if (!(h_max <= sc.horizon)) throw ConfigError("scenario step must not exceed the horizon");
  {
    double rho = 0.0;
    for (const auto& ev : eigenvalues(sys)) rho = std::max(rho, std::abs(ev));
    tr.coarse_grid = rho > 0.0 && h_max > 0.1 / rho;
  }

  const auto breaks = integration_breakpoints(sc, dist);
  std::vector<std::size_t> seg_steps;
  std::size_t total = 0;
  for (std::size_t s = 0; s + 1 < breaks.size(); ++s) {
    const auto k = static_cast<std::size_t>(std::ceil((breaks[s + 1] - breaks[s]) / h_max - 1e-9));
    seg_steps.push_back(std::max<std::size_t>(k, 1));
    total += seg_steps.back();
  }
  tr.step = h_max;
  tr.steps = total;
  const std::size_t stride =
      sc.record_stride > 0 ? sc.record_stride
                           : std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(0.01 / h_max + 1e-9)));

  // Initial state: x = x0, everything else zero.
  Vector state(sim.dim(), 0.0);
  tr.x0 = scenario_x0(sc, model.plant);
  std::copy(tr.x0.begin(), tr.x0.end(), state.begin());

  std::vector<Matrix> X;
  for (std::size_t i = 0; i < N; ++i) X.push_back(det.nodes[i].X);
  DissipationMonitor monitor(model.graph, model.alphas, det.gamma);

  tr.error_energy.assign(N, 0.0);
  tr.input_energy.assign(N, 0.0);
  tr.tracking_l2.assign(N, 0.0);
  tr.tracking_l2_last.assign(N, 0.0);
  tr.max_residual.assign(N, 0.0);
  tr.final_residual_error.assign(N, 0.0);

  Vector xi(sim.disturbance_dim(), 0.0);
  Vector fvec(N * n, 0.0);
  auto set_inputs = [&](double t, double tm) {
    dist.value(t, tm, xi);
    for (std::size_t i = 0; i < N; ++i) {
      const Vector f = attack_in_segment(attacks[i], t, tm, n);
      if (!f.empty()) std::copy(f.begin(), f.end(), fvec.begin() + static_cast<std::ptrdiff_t>(i * n));
    }
    sim.set_inputs(xi, fvec);
  };

  struct Point {
    Vector V, q, wsq, track;
  };
  Vector inputs(sim.detector().input_dim());
  // Ground-truth quantities at a grid point (inputs already set for the segment).
  auto measure = [&](double t, const Vector& s, TraceRow* row) {
    Point p{Vector(N), Vector(N), Vector(N), Vector(N)};
    if (row) {
      row->t = t;
      row->x.assign(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(n));
      row->nodes.resize(N);
      sim.detector_inputs(s.data(), inputs.data());
    }
    std::size_t io = 0;
    std::size_t doff = 0;
    for (std::size_t i = 0; i < N; ++i) {
      const std::size_t nw = model.trackers[i].order();
      const double* x = s.data();
      const double* xh = s.data() + sim.xhat_offset(i);
      const double* w = s.data() + sim.omega_offset(i);
      const double* eh = s.data() + sim.detector_offset() + sim.detector().state_offset(i);
      const double* wh = eh + n;
      Vector eps(n + nw);
      for (std::size_t k = 0; k < n; ++k) eps[k] = x[k] - xh[k] - eh[k];
      for (std::size_t k = 0; k < nw; ++k) eps[n + k] = w[k] - wh[k];
      p.V[i] = quadratic_form(X[i], eps);
      const std::span<const double> z(eps.data(), n), delta(eps.data() + n, nw);
      p.q[i] = quadratic_form(model.weights.Q[i], delta) + quadratic_form(model.weights.Qbar[i], z);
      double wsq = 0.0, track = 0.0, resid = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double nu = w[k] - fvec[i * n + k];
        wsq += nu * nu;
        const double d = wh[k] - fvec[i * n + k];
        track += d * d;
        resid += wh[k] * wh[k];
      }
      for (std::size_t k = 0; k < model.plant.m(); ++k) wsq += xi[k] * xi[k];
      const std::size_t mi = model.sensors[i].m_i();
      for (std::size_t k = 0; k < mi; ++k) wsq += xi[doff + model.plant.m() + k] * xi[doff + model.plant.m() + k];
      doff += mi;
      p.wsq[i] = wsq;
      p.track[i] = track;
      tr.max_residual[i] = std::max(tr.max_residual[i], std::sqrt(resid));
      if (row) {
        auto& ns = row->nodes[i];
        ns.xhat.assign(xh, xh + n);
        ns.ehat.assign(eh, eh + n);
        ns.omega_hat.assign(wh, wh + nw);
        ns.eta_hat.assign(wh, wh + n);
        const std::size_t r = model.sensors[i].r();
        ns.zeta.assign(inputs.begin() + static_cast<std::ptrdiff_t>(io),
                       inputs.begin() + static_cast<std::ptrdiff_t>(io + r));
        ns.zeta_bar.assign(inputs.begin() + static_cast<std::ptrdiff_t>(io + r),
                           inputs.begin() + static_cast<std::ptrdiff_t>(io + r + n));
        ns.z.assign(eps.begin(), eps.begin() + static_cast<std::ptrdiff_t>(n));
        ns.delta.assign(eps.begin() + static_cast<std::ptrdiff_t>(n), eps.end());
        ns.f.assign(fvec.begin() + static_cast<std::ptrdiff_t>(i * n),
                    fvec.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
        ns.V = p.V[i];
      }
      io += model.sensors[i].r() + n;
    }
    return p;
  };

  if (sc.record_detector_inputs) {
    tr.detector_log.emplace();
    tr.detector_log->initial_state.assign(state.begin() + static_cast<std::ptrdiff_t>(sim.detector_offset()),
                                          state.end());
  }

  Rk4 rk(sim.dim());
  std::size_t stage = 0;
  Vector stage_inputs[4];
  double seg_tm = 0.0;
  // Inputs are refreshed at every RK4 stage time.
  auto field = [&](double t, std::span<const double> s, std::span<double> ds) {
    set_inputs(t, seg_tm);
    sim.field(s.data(), ds.data(), tr.detector_log ? &stage_inputs[stage] : nullptr);
    ++stage;
  };

  std::size_t step_index = 0;
  const double last_window = std::max(0.0, sc.horizon - 1.0);
  for (std::size_t seg = 0; seg + 1 < breaks.size(); ++seg) {
    const double a = breaks[seg], b = breaks[seg + 1];
    const std::size_t K = seg_steps[seg];
    const double h = (b - a) / static_cast<double>(K);
    seg_tm = 0.5 * (a + b);
    set_inputs(a, seg_tm);
    const bool record_first = seg == 0;
    TraceRow row0;
    Point prev = measure(a, state, record_first ? &row0 : nullptr);
    if (record_first) tr.rows.push_back(std::move(row0));
    monitor.push(a, prev.V, prev.q, prev.wsq, true);
    for (std::size_t k = 0; k < K; ++k) {
      const double t = a + static_cast<double>(k) * h;
      const double t_next = (k + 1 == K) ? b : a + static_cast<double>(k + 1) * h;
      const double hk = t_next - t;
      stage = 0;
      rk.step(field, t, hk, state);
      ++step_index;
      for (double v : state) {
        if (!(std::abs(v) < opt.divergence_bound)) throw DivergenceError(t_next);
      }
      if (tr.detector_log) {
        auto& log = *tr.detector_log;
        log.times.push_back(t);
        log.steps.push_back(hk);
        for (auto& si : stage_inputs) log.stages.push_back(si);
        log.states.emplace_back(state.begin() + static_cast<std::ptrdiff_t>(sim.detector_offset()), state.end());
      }
      set_inputs(t_next, seg_tm);
      const bool rec = (step_index % stride == 0) || step_index == total;
      TraceRow row;
      Point cur = measure(t_next, state, rec ? &row : nullptr);
      if (rec) tr.rows.push_back(std::move(row));
      for (std::size_t i = 0; i < N; ++i) {
        tr.error_energy[i] += 0.5 * hk * (prev.q[i] + cur.q[i]);
        tr.input_energy[i] += 0.5 * hk * (prev.wsq[i] + cur.wsq[i]);
        const double inc = 0.5 * hk * (prev.track[i] + cur.track[i]);
        tr.tracking_l2[i] += inc;
        if (t >= last_window) tr.tracking_l2_last[i] += inc;
      }
      monitor.push(t_next, cur.V, cur.q, cur.wsq, k + 1 == K);
      prev = std::move(cur);
    }
  }
  tr.dissipation = monitor.result();

  // Final-time residual errors and stacked error norm.
  const auto& last = tr.rows.back();
  double e2 = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const auto& ns = last.nodes[i];
    double d = 0.0;
    for (std::size_t k = 0; k < n; ++k) d += (ns.eta_hat[k] - ns.f[k]) * (ns.eta_hat[k] - ns.f[k]);
    tr.final_residual_error[i] = std::sqrt(d);
    for (double v : ns.z) e2 += v * v;
    for (double v : ns.delta) e2 += v * v;
  }
  tr.final_error_norm = std::sqrt(e2);
  return tr;
}

/// Re-runs the detector from its logged inputs alone. Returns the detector
/// state after every step; equal bit for bit to the logged states when the
/// detector reads nothing else.
inline std::vector<Vector> replay_detector(const NetworkModel& model, std::span<const FilterGains> baseline,
                                           const SynthesisResult& det, const DetectorInputLog& log) {
  DetectorNetwork dn(model, baseline, det);
  if (log.stages.size() != 4 * log.steps.size()) throw DimensionError("replay: stage log length");
  Vector s = log.initial_state;
  Rk4 rk(s.size());
  std::vector<Vector> out;
  out.reserve(log.steps.size());
  for (std::size_t k = 0; k < log.steps.size(); ++k) {
    std::size_t stage = 0;
    auto f = [&](double, std::span<const double> x, std::span<double> dx) {
      dn.field(x.data(), log.stages[4 * k + stage].data(), dx.data());
      ++stage;
    };
    rk.step(f, log.times[k], log.steps[k], s);
    out.push_back(s);
  }
  return out;
}

// ------------------------------------------------------------------- report

struct VerificationThresholds {
  double spectral_abscissa_max = -1e-4;
  double hinf_factor = 1.05;
  double dissipation_tolerance = 1e-3;
  double tracking_relative = 0.02;
  double separability_relative = 0.2;
  double l2_increment_per_second = 1e-6;
  double decay_relative = 1e-6;
  double detection_threshold = 0.1;  // informational: residual norm that flags a node
};

struct CheckResult {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = false;
  std::string detail;
};

struct VerificationReport {
  std::string scenario;
  double spectral_abscissa = 0.0;
  double hinf_ratio = 0.0;
  double hinf_bound = 0.0;
  std::optional<double> decay_ratio;
  DissipationMonitor::Result dissipation;
  Vector final_residual_error;
  Vector tracking_l2;
  Vector tracking_l2_last;
  Vector max_residual;
  std::vector<bool> flagged;
  std::vector<CheckResult> checks;
  std::vector<std::string> notes;
  std::size_t realizations = 1;

  bool all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
  }
};

inline bool scenario_is_quiet(const Scenario& sc) {
  if (sc.disturbance.kind != DisturbanceKind::none && sc.disturbance.amplitude != 0.0) return false;
  return std::all_of(sc.attacks.begin(), sc.attacks.end(),
                     [](const AttackSignal& a) { return a.kind == AttackKind::none; });
}

inline void add_check(VerificationReport& rep, std::string name, double value, double threshold, bool pass,
                      std::string detail = {}) {
  rep.checks.push_back({std::move(name), value, threshold, pass, std::move(detail)});
}

/// Pass/fail entries for one simulated realization.
inline VerificationReport verify_trace(const SimulationTrace& tr, const Scenario& sc, const NetworkModel& model,
                                       const SynthesisResult& det, const VerificationThresholds& th) {
  VerificationReport rep;
  rep.scenario = sc.name;
  const std::size_t N = model.size();
  const Matrix Acl = closed_loop_matrix(model.graph, model.plant, model.sensors, model.trackers, detector_gains(det));
  rep.spectral_abscissa = spectral_abscissa(Acl);
  add_check(rep, "stability.spectral_abscissa", rep.spectral_abscissa, th.spectral_abscissa_max,
            rep.spectral_abscissa < th.spectral_abscissa_max);

  rep.hinf_bound = det.gamma * det.gamma * th.hinf_factor;
  const double x0p = quadratic_form(det.P, tr.x0);
  double win = 0.0;
  for (double e : tr.input_energy) win += e;
  if (x0p + win > 0.0) {
    rep.hinf_ratio = hinf_ratio(tr, det.P, det.gamma);
    add_check(rep, "hinf.ratio", rep.hinf_ratio, rep.hinf_bound, rep.hinf_ratio <= rep.hinf_bound);
  }

  rep.dissipation = tr.dissipation;
  if (tr.dissipation.points > 0) {
    add_check(rep, "dissipation.pointwise", tr.dissipation.min_normalized, -th.dissipation_tolerance,
              tr.dissipation.min_normalized >= -th.dissipation_tolerance,
              "node " + std::to_string(tr.dissipation.node_of_min + 1) + " at t=" +
                  std::to_string(tr.dissipation.time_of_min));
    add_check(rep, "dissipation.summed", tr.dissipation.min_summed_normalized, -th.dissipation_tolerance,
              tr.dissipation.epsilon > 0.0 && tr.dissipation.min_summed_normalized >= -th.dissipation_tolerance,
              "epsilon=" + std::to_string(tr.dissipation.epsilon));
  }
  if (tr.coarse_grid) rep.notes.push_back("warning: step exceeds 0.1 x fastest time constant");

  const double x0n = norm(tr.x0);
  if (scenario_is_quiet(sc) && x0n > 0.0) {
    rep.decay_ratio = tr.final_error_norm / x0n;
    add_check(rep, "stability.decay", *rep.decay_ratio, th.decay_relative, *rep.decay_ratio <= th.decay_relative);
  }

  rep.final_residual_error = tr.final_residual_error;
  rep.tracking_l2 = tr.tracking_l2;
  rep.tracking_l2_last = tr.tracking_l2_last;
  rep.max_residual = tr.max_residual;
  std::vector<NodeId> attacked;
  for (std::size_t i = 0; i < N; ++i) {
    const auto& a = tr.attacks[i];
    rep.flagged.push_back(norm(tr.rows.back().nodes[i].eta_hat) > th.detection_threshold);
    if (a.kind == AttackKind::none) continue;
    attacked.push_back(i);
    const std::string tag = "node" + std::to_string(i + 1);
    if (a.has_finite_limit()) {
      const double fn = norm(a.limit(model.plant.n()));
      add_check(rep, "tracking.final." + tag, tr.final_residual_error[i], th.tracking_relative * fn,
                tr.final_residual_error[i] <= th.tracking_relative * fn);
    } else if (a.kind == AttackKind::l2_pulse) {
      const double window = std::min(1.0, sc.horizon);
      const double rate = tr.tracking_l2_last[i] / window;
      add_check(rep, "tracking.l2_increment." + tag, rate, th.l2_increment_per_second,
                rate < th.l2_increment_per_second);
    }
  }
  if (attacked.size() == 1 && tr.attacks[attacked[0]].has_finite_limit()) {
    const double fn = norm(tr.attacks[attacked[0]].limit(model.plant.n()));
    double worst = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      if (j != attacked[0]) worst = std::max(worst, tr.max_residual[j]);
    }
    add_check(rep, "separability.max_other_residual", worst, th.separability_relative * fn,
              worst <= th.separability_relative * fn);
  }
  return rep;
}

}  // namespace attackdet
