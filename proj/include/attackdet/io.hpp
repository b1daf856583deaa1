#pragma once

// JSON project configs, synthesis-result and report documents, CSV traces.
// Node and component indices are 1-based in every file and 0-based in memory.

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "attackdet/errors.hpp"
#include "attackdet/sim.hpp"
#include "attackdet/synth.hpp"

namespace attackdet {

using Json = nlohmann::json;

inline constexpr const char* kConfigSchema = "attackdet.config/1";
inline constexpr const char* kSynthesisSchema = "attackdet.synthesis/1";
inline constexpr const char* kReportSchema = "attackdet.report/1";
inline constexpr const char* kTraceSchema = "attackdet.trace/1";
inline constexpr const char* kWeightsNote = "weights Q_i, Qbar_i and alpha_i are per node, i = 1..N";

// ------------------------------------------------------------ json <-> matrix

inline Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Json to_json(const Vector& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(x);
  return a;
}

namespace detail {

inline const Json& field(const Json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw ConfigError(path + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(path + "." + key + ": missing");
  return *it;
}

inline double number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path + ": not finite");
  return v;
}

inline double number_or(const Json& obj, const std::string& key, double fallback, const std::string& path) {
  auto it = obj.find(key);
  return it == obj.end() ? fallback : number(*it, path + "." + key);
}

inline std::size_t count(const Json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<long long>() < 0) throw ConfigError(path + ": expected a non-negative integer");
  return j.get<std::size_t>();
}

inline std::string text(const Json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path + ": expected a string");
  return j.get<std::string>();
}

}  // namespace detail

inline Matrix matrix_from_json(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path + ": expected a matrix (array of rows)");
  const std::size_t r = j.size();
  std::size_t c = 0;
  for (std::size_t i = 0; i < r; ++i) {
    if (!j[i].is_array()) throw ConfigError(path + ": row " + std::to_string(i + 1) + " is not an array");
    if (i == 0) c = j[i].size();
    if (j[i].size() != c) throw ConfigError(path + ": ragged rows");
  }
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      m(i, k) = detail::number(j[i][k], path + "[" + std::to_string(i + 1) + "][" + std::to_string(k + 1) + "]");
    }
  }
  return m;
}

inline Matrix matrix_from_json(const Json& j, const std::string& path, std::size_t rows, std::size_t cols) {
  Matrix m = matrix_from_json(j, path);
  if (m.rows() != rows || m.cols() != cols) {
    throw ConfigError(path + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) + " matrix, got " +
                      std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
  return m;
}

inline Vector vector_from_json(const Json& j, const std::string& path, std::optional<std::size_t> size = {}) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array");
  Vector v;
  for (std::size_t i = 0; i < j.size(); ++i) v.push_back(detail::number(j[i], path + "[" + std::to_string(i + 1) + "]"));
  if (size && v.size() != *size) {
    throw ConfigError(path + ": expected " + std::to_string(*size) + " entries, got " + std::to_string(v.size()));
  }
  return v;
}

// ------------------------------------------------------------ project config

struct BisectionSettings {
  double lo = 0.5;
  double hi = 10.0;
  double tol = 1.05;
};

struct SynthesisSettings {
  std::optional<double> gamma;
  std::optional<BisectionSettings> bisection;
  double margin = 1e-6;
  SolverOptions solver;
};

struct BaselineSettings {
  std::string mode = "synthesize";  // or "given"
  double gamma = 2.0;
  std::vector<double> alphas;
  std::vector<Matrix> weights;
  std::vector<FilterGains> given;
};

struct ProjectConfig {
  NetworkModel model;
  SynthesisSettings synthesis;
  BaselineSettings baseline;
  std::vector<Scenario> scenarios;
  VerificationThresholds thresholds;
  Json source;  // the document as read

  const Scenario& scenario(const std::string& name) const {
    for (const auto& s : scenarios) {
      if (s.name == name) return s;
    }
    throw ConfigError("scenario '" + name + "' not found");
  }
};

namespace detail {

inline TrackerModel parse_tracker(const Json& j, std::size_t n, const std::string& path) {
  const std::string kind = text(field(j, "kind", path), path + ".kind");
  if (kind == "lowpass") {
    try {
      return lowpass_tracker(n, number(field(j, "epsilon", path), path + ".epsilon"));
    } catch (const ModelError& e) {
      throw ConfigError(path + ": " + e.what());
    }
  }
  if (kind == "explicit") {
    const Matrix omega = matrix_from_json(field(j, "Omega", path), path + ".Omega");
    const Matrix gamma = matrix_from_json(field(j, "Gamma", path), path + ".Gamma");
    if (omega.rows() != omega.cols() || gamma.rows() != omega.rows() || gamma.cols() != n || omega.rows() < n) {
      throw ConfigError(path + ": Omega must be n_omega x n_omega and Gamma n_omega x n with n_omega >= n");
    }
    return TrackerModel(omega, gamma);
  }
  throw ConfigError(path + ".kind: unknown tracker kind '" + kind + "'");
}

inline DisturbanceSpec parse_disturbance(const Json& j, const std::string& path) {
  DisturbanceSpec d;
  d.kind = [&] {
    try {
      return disturbance_kind_from_string(text(field(j, "kind", path), path + ".kind"));
    } catch (const ConfigError& e) {
      throw ConfigError(path + ".kind: " + e.what());
    }
  }();
  d.amplitude = number_or(j, "amplitude", 0.0, path);
  d.bandwidth_hz = number_or(j, "bandwidth_hz", 1.0, path);
  if (j.contains("components")) d.components = count(j["components"], path + ".components");
  d.t_on = number_or(j, "t_on", 0.0, path);
  d.t_off = number_or(j, "t_off", 0.0, path);
  if (d.kind == DisturbanceKind::bandlimited && (!(d.bandwidth_hz > 0.0) || d.components == 0)) {
    throw ConfigError(path + ": bandlimited needs bandwidth_hz > 0 and components >= 1");
  }
  if (d.kind == DisturbanceKind::pulse && !(d.t_off > d.t_on)) throw ConfigError(path + ": pulse needs t_off > t_on");
  return d;
}

inline Scenario parse_scenario(const Json& j, std::size_t N, std::size_t n, const std::string& path) {
  Scenario s;
  s.name = text(field(j, "name", path), path + ".name");
  s.horizon = number(field(j, "horizon", path), path + ".horizon");
  if (!(s.horizon > 0.0)) throw ConfigError(path + ".horizon: must be positive");
  s.step = number_or(j, "step", 0.0, path);
  if (s.step < 0.0 || s.step > s.horizon) throw ConfigError(path + ".step: must satisfy 0 <= step <= horizon");
  if (j.contains("x0")) s.x0 = vector_from_json(j["x0"], path + ".x0", n);
  s.random_x0 = number_or(j, "random_x0", 0.0, path);
  if (s.random_x0 < 0.0) throw ConfigError(path + ".random_x0: must be non-negative");
  if (j.contains("disturbance")) s.disturbance = parse_disturbance(j["disturbance"], path + ".disturbance");
  if (j.contains("seed")) s.seed = count(j["seed"], path + ".seed");
  if (j.contains("record_stride")) s.record_stride = count(j["record_stride"], path + ".record_stride");
  if (j.contains("realizations")) {
    s.realizations = count(j["realizations"], path + ".realizations");
    if (s.realizations == 0) throw ConfigError(path + ".realizations: must be at least 1");
  }
  s.attacks.assign(N, AttackSignal{});
  if (j.contains("attacks")) {
    const Json& arr = j["attacks"];
    if (!arr.is_array()) throw ConfigError(path + ".attacks: expected an array");
    for (std::size_t k = 0; k < arr.size(); ++k) {
      const std::string ap = path + ".attacks[" + std::to_string(k + 1) + "]";
      const std::size_t node = count(field(arr[k], "node", ap), ap + ".node");
      if (node < 1 || node > N) throw ConfigError(ap + ".node: must be in 1.." + std::to_string(N));
      AttackSignal a;
      try {
        a.kind = attack_kind_from_string(text(field(arr[k], "kind", ap), ap + ".kind"));
      } catch (const ConfigError& e) {
        throw ConfigError(ap + ".kind: " + e.what());
      }
      if (a.kind != AttackKind::none) a.value = vector_from_json(field(arr[k], "value", ap), ap + ".value", n);
      a.t_on = number_or(arr[k], "t_on", 0.0, ap);
      a.t_off = number_or(arr[k], "t_off", 0.0, ap);
      a.tau = number_or(arr[k], "tau", 1.0, ap);
      if (a.kind == AttackKind::l2_pulse && !(a.t_off > a.t_on)) throw ConfigError(ap + ": l2_pulse needs t_off > t_on");
      if (a.kind == AttackKind::lowpass_transient && !(a.tau > 0.0)) throw ConfigError(ap + ".tau: must be positive");
      if (s.attacks[node - 1].kind != AttackKind::none) throw ConfigError(ap + ".node: node already attacked");
      s.attacks[node - 1] = a;
    }
  }
  return s;
}

}  // namespace detail

inline ProjectConfig config_from_json(const Json& doc) {
  using namespace detail;
  ProjectConfig cfg;
  cfg.source = doc;
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  if (doc.contains("schema") && doc["schema"] != kConfigSchema) {
    throw ConfigError("schema: expected '" + std::string(kConfigSchema) + "'");
  }

  const Json& pj = field(doc, "plant", "config");
  const Matrix A = matrix_from_json(field(pj, "A", "plant"), "plant.A");
  if (A.rows() == 0 || A.rows() != A.cols()) throw ConfigError("plant.A: must be square and non-empty");
  const std::size_t n = A.rows();
  const Matrix B2 = matrix_from_json(field(pj, "B2", "plant"), "plant.B2");
  if (B2.rows() != n || B2.cols() == 0) throw ConfigError("plant.B2: expected n rows and at least one column");
  const std::size_t m = B2.cols();
  const Vector x0 = pj.contains("x0") ? vector_from_json(pj["x0"], "plant.x0", n) : Vector(n, 0.0);
  cfg.model.plant = PlantModel(A, B2, x0);

  const Json& nodes = field(doc, "nodes", "config");
  if (!nodes.is_array() || nodes.empty()) throw ConfigError("nodes: expected a non-empty array");
  const std::size_t N = nodes.size();
  for (std::size_t i = 0; i < N; ++i) {
    const std::string p = "nodes[" + std::to_string(i + 1) + "]";
    const Json& nj = nodes[i];
    const Matrix C2 = matrix_from_json(field(nj, "C2", p), p + ".C2");
    if (C2.cols() != n || C2.rows() == 0) throw ConfigError(p + ".C2: expected r_i x " + std::to_string(n));
    const std::size_t r = C2.rows();
    const Matrix D2 = nj.contains("D2") ? matrix_from_json(nj["D2"], p + ".D2", r, m) : Matrix(r, m);
    const Matrix Db = matrix_from_json(field(nj, "Dbar2", p), p + ".Dbar2");
    if (Db.rows() != r) throw ConfigError(p + ".Dbar2: expected " + std::to_string(r) + " rows");
    try {
      cfg.model.sensors.emplace_back(C2, D2, Db);
    } catch (const ModelError& e) {
      throw ConfigError(p + ": " + e.what());
    }
    cfg.model.trackers.push_back(parse_tracker(field(nj, "tracker", p), n, p + ".tracker"));
    const std::size_t nw = cfg.model.trackers.back().order();
    const double alpha = number(field(nj, "alpha", p), p + ".alpha");
    if (!(alpha > 0.0)) throw ConfigError(p + ".alpha: must be positive");
    cfg.model.alphas.push_back(alpha);
    cfg.model.weights.Q.push_back(matrix_from_json(field(nj, "Q", p), p + ".Q", nw, nw));
    cfg.model.weights.Qbar.push_back(matrix_from_json(field(nj, "Qbar", p), p + ".Qbar", n, n));
    try {
      detail::check_weight(cfg.model.weights.Q.back(), nw, true, "Q_i");
      detail::check_weight(cfg.model.weights.Qbar.back(), n, false, "Qbar_i");
    } catch (const ModelError& e) {
      throw ConfigError(p + ": " + e.what());
    }
  }

  const Json& gj = field(doc, "graph", "config");
  const Json& ej = field(gj, "edges", "graph");
  if (!ej.is_array()) throw ConfigError("graph.edges: expected an array of [from, to] pairs");
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (std::size_t k = 0; k < ej.size(); ++k) {
    const std::string p = "graph.edges[" + std::to_string(k + 1) + "]";
    if (!ej[k].is_array() || ej[k].size() != 2) throw ConfigError(p + ": expected [from, to]");
    const std::size_t a = count(ej[k][0], p), b = count(ej[k][1], p);
    if (a < 1 || b < 1) throw ConfigError(p + ": node ids are 1-based");
    edges.emplace_back(a - 1, b - 1);
  }
  try {
    cfg.model.graph = DirectedGraph(N, edges);
    (void)comparison_matrix(cfg.model.graph, cfg.model.alphas);
  } catch (const GraphError& e) {
    throw ConfigError(std::string("graph: ") + e.what());
  }

  if (doc.contains("synthesis")) {
    const Json& sj = doc["synthesis"];
    const std::string p = "synthesis";
    if (sj.contains("gamma")) {
      cfg.synthesis.gamma = number(sj["gamma"], p + ".gamma");
      if (!(*cfg.synthesis.gamma > 0.0)) throw ConfigError(p + ".gamma: must be positive");
    }
    if (sj.contains("bisection")) {
      const Json& bj = sj["bisection"];
      BisectionSettings b;
      b.lo = number_or(bj, "lo", b.lo, p + ".bisection");
      b.hi = number_or(bj, "hi", b.hi, p + ".bisection");
      b.tol = number_or(bj, "tol", b.tol, p + ".bisection");
      if (!(b.lo > 0.0) || !(b.hi > b.lo) || !(b.tol > 1.0)) {
        throw ConfigError(p + ".bisection: needs 0 < lo < hi and tol > 1");
      }
      cfg.synthesis.bisection = b;
    }
    cfg.synthesis.margin = number_or(sj, "margin", cfg.synthesis.margin, p);
    if (!(cfg.synthesis.margin > 0.0)) throw ConfigError(p + ".margin: must be positive");
    if (sj.contains("budget")) cfg.synthesis.solver.budget = count(sj["budget"], p + ".budget");
    if (sj.contains("seed")) cfg.synthesis.solver.seed = count(sj["seed"], p + ".seed");
    if (sj.contains("abandon_window")) cfg.synthesis.solver.abandon_window = count(sj["abandon_window"], p + ".abandon_window");
  }
  if (!cfg.synthesis.gamma && !cfg.synthesis.bisection) cfg.synthesis.bisection = BisectionSettings{};

  cfg.baseline.alphas = cfg.model.alphas;
  cfg.baseline.weights.assign(N, Matrix::identity(n));
  if (doc.contains("baseline")) {
    const Json& bj = doc["baseline"];
    const std::string p = "baseline";
    cfg.baseline.mode = text(field(bj, "mode", p), p + ".mode");
    if (cfg.baseline.mode == "synthesize") {
      cfg.baseline.gamma = number_or(bj, "gamma", cfg.baseline.gamma, p);
      if (!(cfg.baseline.gamma > 0.0)) throw ConfigError(p + ".gamma: must be positive");
      if (bj.contains("alpha")) {
        const double a = number(bj["alpha"], p + ".alpha");
        if (!(a > 0.0)) throw ConfigError(p + ".alpha: must be positive");
        cfg.baseline.alphas.assign(N, a);
      }
      if (bj.contains("weight")) {
        const Matrix w = matrix_from_json(bj["weight"], p + ".weight", n, n);
        cfg.baseline.weights.assign(N, w);
      }
    } else if (cfg.baseline.mode == "given") {
      const Json& gains = field(bj, "nodes", p);
      if (!gains.is_array() || gains.size() != N) throw ConfigError(p + ".nodes: expected one entry per node");
      for (std::size_t i = 0; i < N; ++i) {
        const std::string q = p + ".nodes[" + std::to_string(i + 1) + "]";
        const std::size_t r = cfg.model.sensors[i].r();
        cfg.baseline.given.push_back({matrix_from_json(field(gains[i], "L", q), q + ".L", n, r),
                                      matrix_from_json(field(gains[i], "K", q), q + ".K", n, n)});
      }
    } else {
      throw ConfigError(p + ".mode: expected 'synthesize' or 'given'");
    }
  }

  if (doc.contains("scenarios")) {
    const Json& sc = doc["scenarios"];
    if (!sc.is_array()) throw ConfigError("scenarios: expected an array");
    for (std::size_t k = 0; k < sc.size(); ++k) {
      cfg.scenarios.push_back(detail::parse_scenario(sc[k], N, n, "scenarios[" + std::to_string(k + 1) + "]"));
    }
  }

  if (doc.contains("verification")) {
    const Json& vj = doc["verification"];
    const std::string p = "verification";
    auto& t = cfg.thresholds;
    t.spectral_abscissa_max = number_or(vj, "spectral_abscissa_max", t.spectral_abscissa_max, p);
    t.hinf_factor = number_or(vj, "hinf_factor", t.hinf_factor, p);
    t.dissipation_tolerance = number_or(vj, "dissipation_tolerance", t.dissipation_tolerance, p);
    t.tracking_relative = number_or(vj, "tracking_relative", t.tracking_relative, p);
    t.separability_relative = number_or(vj, "separability_relative", t.separability_relative, p);
    t.l2_increment_per_second = number_or(vj, "l2_increment_per_second", t.l2_increment_per_second, p);
    t.decay_relative = number_or(vj, "decay_relative", t.decay_relative, p);
    t.detection_threshold = number_or(vj, "detection_threshold", t.detection_threshold, p);
  }
  return cfg;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("'" + path + "': malformed JSON: " + e.what());
  }
}

inline ProjectConfig load_config(const std::string& path) { return config_from_json(read_json_file(path)); }

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << content;
  if (!out) throw ConfigError("write failed for '" + path + "'");
}

// ---------------------------------------------------------- baseline gains

inline std::vector<FilterGains> resolve_baseline(const ProjectConfig& cfg, SynthesisResult* synthesized = nullptr) {
  if (cfg.baseline.mode == "given") return cfg.baseline.given;
  SynthesisConfig sc;
  sc.gamma = cfg.baseline.gamma;
  sc.alphas = cfg.baseline.alphas;
  sc.margin = cfg.synthesis.margin;
  sc.solver = cfg.synthesis.solver;
  SynthesisResult r = synthesize_baseline(cfg.model.graph, cfg.model.plant, cfg.model.sensors, cfg.baseline.weights, sc);
  if (synthesized) *synthesized = r;
  if (!r.feasible()) {
    throw ModelError("baseline synthesis infeasible at gamma=" + std::to_string(sc.gamma) + ": " + r.diagnostic);
  }
  return baseline_gains(r);
}

// ----------------------------------------------------- synthesis documents

struct GainsDocument {
  ProjectConfig config;
  SynthesisResult detector;
  std::vector<FilterGains> baseline;
  std::string baseline_mode;
  std::optional<BisectionResult> bisection;
};

inline Json synthesis_to_json(const SynthesisResult& r, const ProjectConfig& cfg, std::span<const FilterGains> baseline,
                              const std::vector<BisectionProbe>* probes = nullptr) {
  Json doc;
  doc["schema"] = kSynthesisSchema;
  doc["mode"] = r.baseline ? "baseline" : "detector";
  doc["status"] = to_string(r.status);
  doc["gamma"] = r.gamma;
  doc["margin"] = r.margin;
  doc["iterations"] = r.iterations;
  doc["best_violation"] = r.best_violation;
  if (!r.diagnostic.empty()) doc["diagnostic"] = r.diagnostic;
  doc["weights_interpretation"] = kWeightsNote;
  if (probes) {
    Json arr = Json::array();
    for (const auto& p : *probes) {
      arr.push_back({{"gamma", p.gamma}, {"status", to_string(p.status)}, {"iterations", p.iterations}});
    }
    doc["bisection"] = {{"probes", arr}};
  }
  if (r.feasible()) doc["P"] = to_json(r.P);
  Json nodes = Json::array();
  for (std::size_t i = 0; i < r.nodes.size(); ++i) {
    const auto& ns = r.nodes[i];
    Json nj;
    nj["node"] = i + 1;
    nj["X"] = to_json(ns.X);
    nj["M"] = to_json(ns.M);
    nj["lmi_lambda_max"] = ns.lmi_lambda_max;
    nj["x_lambda_min"] = ns.x_lambda_min;
    nj["lmi_margin"] = ns.lmi_margin;
    if (r.feasible()) {
      nj["L_mu"] = to_json(ns.L_mu);
      nj["K_mu"] = to_json(ns.K_mu);
      nj["L_tilde"] = to_json(ns.gains.L_tilde);
      nj["K_tilde"] = to_json(ns.gains.K_tilde);
      nj["F_eta"] = to_json(ns.gains.F_eta);
      nj["H_eta"] = to_json(ns.gains.H_eta);
      if (i < baseline.size()) {
        nj["F"] = to_json(ns.gains.L_tilde - baseline[i].L);
        nj["H"] = to_json(ns.gains.K_tilde - baseline[i].K);
      }
    }
    nodes.push_back(std::move(nj));
  }
  doc["nodes"] = nodes;
  Json bl;
  bl["mode"] = cfg.baseline.mode;
  Json bn = Json::array();
  for (const auto& g : baseline) bn.push_back({{"L", to_json(g.L)}, {"K", to_json(g.K)}});
  bl["nodes"] = bn;
  doc["baseline"] = bl;
  doc["config"] = cfg.source;
  return doc;
}

/// Reads a synthesis document back. Gains are recomputed from X_i, M_i when
/// `recompute` is set, otherwise taken as stored.
inline GainsDocument gains_from_json(const Json& doc, bool recompute = false) {
  using namespace detail;
  if (!doc.is_object()) throw ConfigError("gains: expected a JSON object");
  if (!doc.contains("schema") || doc["schema"] != kSynthesisSchema) {
    throw ConfigError("gains.schema: expected '" + std::string(kSynthesisSchema) + "'");
  }
  GainsDocument g;
  g.config = config_from_json(field(doc, "config", "gains"));
  const auto& model = g.config.model;
  const std::size_t N = model.size(), n = model.plant.n();
  auto& r = g.detector;
  const std::string status = text(field(doc, "status", "gains"), "gains.status");
  if (status == "feasible") r.status = SdpStatus::feasible;
  else if (status == "infeasible_budget") r.status = SdpStatus::infeasible_budget;
  else if (status == "numerical_failure") r.status = SdpStatus::numerical_failure;
  else throw ConfigError("gains.status: unknown value '" + status + "'");
  r.baseline = text(field(doc, "mode", "gains"), "gains.mode") == "baseline";
  r.gamma = number(field(doc, "gamma", "gains"), "gains.gamma");
  r.margin = number(field(doc, "margin", "gains"), "gains.margin");
  if (doc.contains("iterations")) r.iterations = count(doc["iterations"], "gains.iterations");
  const Json& nodes = field(doc, "nodes", "gains");
  if (!nodes.is_array() || nodes.size() != N) throw ConfigError("gains.nodes: expected one entry per node");
  const auto aug = model.augmented();
  r.nodes.resize(N);
  for (std::size_t i = 0; i < N; ++i) {
    const std::string p = "gains.nodes[" + std::to_string(i + 1) + "]";
    const Json& nj = nodes[i];
    const std::size_t d = aug[i].dim(), nw = aug[i].n_omega, ri = aug[i].r;
    auto& ns = r.nodes[i];
    ns.X = matrix_from_json(field(nj, "X", p), p + ".X", d, d);
    ns.M = matrix_from_json(field(nj, "M", p), p + ".M", d, n);
    ns.lmi_lambda_max = number_or(nj, "lmi_lambda_max", 0.0, p);
    ns.x_lambda_min = number_or(nj, "x_lambda_min", 0.0, p);
    ns.lmi_margin = number_or(nj, "lmi_margin", 0.0, p);
    if (!r.feasible()) continue;
    if (recompute) {
      const RecoveredGains rg = recover_gains(aug[i], ns.X, ns.M, r.gamma);
      ns.L_mu = rg.L_mu;
      ns.K_mu = rg.K_mu;
      ns.gains = split_gains(aug[i], rg);
    } else {
      ns.L_mu = matrix_from_json(field(nj, "L_mu", p), p + ".L_mu", d, ri);
      ns.K_mu = matrix_from_json(field(nj, "K_mu", p), p + ".K_mu", d, n);
      ns.gains.L_tilde = matrix_from_json(field(nj, "L_tilde", p), p + ".L_tilde", n, ri);
      ns.gains.K_tilde = matrix_from_json(field(nj, "K_tilde", p), p + ".K_tilde", n, n);
      ns.gains.F_eta = matrix_from_json(field(nj, "F_eta", p), p + ".F_eta", nw, ri);
      ns.gains.H_eta = matrix_from_json(field(nj, "H_eta", p), p + ".H_eta", nw, n);
    }
  }
  if (r.feasible()) r.P = matrix_from_json(field(doc, "P", "gains"), "gains.P", n, n);

  const Json& bl = field(doc, "baseline", "gains");
  g.baseline_mode = text(field(bl, "mode", "gains.baseline"), "gains.baseline.mode");
  const Json& bn = field(bl, "nodes", "gains.baseline");
  if (!bn.is_array() || (bn.size() != N && !bn.empty())) {
    throw ConfigError("gains.baseline.nodes: expected one entry per node");
  }
  for (std::size_t i = 0; i < bn.size(); ++i) {
    const std::string p = "gains.baseline.nodes[" + std::to_string(i + 1) + "]";
    g.baseline.push_back({matrix_from_json(field(bn[i], "L", p), p + ".L", n, model.sensors[i].r()),
                          matrix_from_json(field(bn[i], "K", p), p + ".K", n, n)});
  }
  return g;
}

inline GainsDocument load_gains(const std::string& path, bool recompute = false) {
  return gains_from_json(read_json_file(path), recompute);
}

// ------------------------------------------------------------ verification

struct ConstraintCheck {
  std::string name;
  double extreme = 0.0;   // lambda_max for LMIs, lambda_min for X_i
  double required = 0.0;  // bound the extreme must satisfy
  bool pass = false;
};

/// Re-assembles every node LMI from matrix products and checks the
/// eigenvalue margins: lambda_max <= -max(floor, lmi_margin_i / 2) and
/// lambda_min(X_i) >= max(floor, margin / 2).
inline std::vector<ConstraintCheck> check_certificates(const NetworkModel& model, const SynthesisResult& r,
                                                       double margin, double floor = 1e-7) {
  const std::size_t N = model.size();
  if (r.nodes.size() != N) throw DimensionError("check: one solution block per node");
  const auto nodes = model.augmented();
  std::vector<Matrix> X, M;
  for (const auto& ns : r.nodes) {
    X.push_back(ns.X);
    M.push_back(ns.M);
  }
  std::vector<ConstraintCheck> out;
  for (NodeId i = 0; i < N; ++i) {
    const Matrix F = assemble_node_lmi_direct(model.graph, nodes, model.alphas, r.gamma, X, M, i);
    Matrix constant = F;  // zero-variable part for the margin scale
    {
      std::vector<Matrix> X0, M0;
      for (NodeId k = 0; k < N; ++k) {
        X0.push_back(Matrix(X[k].rows(), X[k].cols()));
        M0.push_back(Matrix(M[k].rows(), M[k].cols()));
      }
      constant = assemble_node_lmi_direct(model.graph, nodes, model.alphas, r.gamma, X0, M0, i);
    }
    ConstraintCheck c;
    c.name = "lmi[" + std::to_string(i + 1) + "]";
    c.extreme = lambda_max(F);
    c.required = -std::max(floor, 0.5 * margin * (1.0 + norm2(constant)));
    c.pass = c.extreme <= c.required;
    out.push_back(c);
  }
  for (NodeId i = 0; i < N; ++i) {
    ConstraintCheck c;
    c.name = "X[" + std::to_string(i + 1) + "]>0";
    c.extreme = lambda_min(X[i]);
    c.required = std::max(floor, 0.5 * margin);
    c.pass = c.extreme >= c.required;
    out.push_back(c);
  }
  return out;
}

// ------------------------------------------------------------------ reports

inline Json report_to_json(const std::vector<VerificationReport>& reps, const Scenario& sc) {
  Json doc;
  doc["schema"] = kReportSchema;
  doc["scenario"] = sc.name;
  doc["realizations"] = reps.size();
  doc["weights_interpretation"] = kWeightsNote;
  bool all = true;
  Json runs = Json::array();
  for (std::size_t k = 0; k < reps.size(); ++k) {
    const auto& rep = reps[k];
    all = all && rep.all_pass();
    Json rj;
    rj["realization"] = k + 1;
    rj["all_pass"] = rep.all_pass();
    Json checks = Json::array();
    for (const auto& c : rep.checks) {
      Json cj{{"name", c.name}, {"value", c.value}, {"threshold", c.threshold}, {"pass", c.pass}};
      if (!c.detail.empty()) cj["detail"] = c.detail;
      checks.push_back(std::move(cj));
    }
    rj["checks"] = checks;
    Json metrics;
    metrics["spectral_abscissa"] = rep.spectral_abscissa;
    metrics["hinf_ratio"] = rep.hinf_ratio;
    metrics["hinf_bound"] = rep.hinf_bound;
    if (rep.decay_ratio) metrics["decay_ratio"] = *rep.decay_ratio;
    metrics["dissipation"] = {{"min_slack", rep.dissipation.points ? rep.dissipation.min_slack : 0.0},
                              {"min_normalized", rep.dissipation.points ? rep.dissipation.min_normalized : 0.0},
                              {"min_summed_normalized",
                               rep.dissipation.points ? rep.dissipation.min_summed_normalized : 0.0},
                              {"epsilon", rep.dissipation.epsilon},
                              {"points", rep.dissipation.points}};
    Json nodes = Json::array();
    for (std::size_t i = 0; i < rep.final_residual_error.size(); ++i) {
      nodes.push_back({{"node", i + 1},
                       {"final_residual_error", rep.final_residual_error[i]},
                       {"tracking_l2", rep.tracking_l2[i]},
                       {"tracking_l2_last_second", rep.tracking_l2_last[i]},
                       {"max_residual", rep.max_residual[i]},
                       {"flagged", static_cast<bool>(rep.flagged[i])}});
    }
    metrics["nodes"] = nodes;
    rj["metrics"] = metrics;
    if (!rep.notes.empty()) rj["notes"] = rep.notes;
    runs.push_back(std::move(rj));
  }
  doc["all_pass"] = all;
  doc["runs"] = runs;
  return doc;
}

// ---------------------------------------------------------------------- csv

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trace_to_csv(const SimulationTrace& tr) {
  std::ostringstream out;
  out << "# " << kTraceSchema << " scenario=" << tr.scenario << "\n";
  if (tr.rows.empty()) return out.str();
  const auto& first = tr.rows.front();
  out << "t";
  for (std::size_t k = 0; k < first.x.size(); ++k) out << ",x[" << k + 1 << "]";
  for (std::size_t i = 0; i < first.nodes.size(); ++i) {
    const auto& ns = first.nodes[i];
    const std::string p = "node" + std::to_string(i + 1);
    for (std::size_t k = 0; k < ns.xhat.size(); ++k) out << "," << p << ".xhat[" << k + 1 << "]";
    for (std::size_t k = 0; k < ns.eta_hat.size(); ++k) out << "," << p << ".etahat[" << k + 1 << "]";
    for (std::size_t k = 0; k < ns.zeta.size(); ++k) out << "," << p << ".zeta[" << k + 1 << "]";
    out << "," << p << ".V";
  }
  out << "\n";
  for (const auto& row : tr.rows) {
    out << format_number(row.t);
    for (double v : row.x) out << "," << format_number(v);
    for (const auto& ns : row.nodes) {
      for (double v : ns.xhat) out << "," << format_number(v);
      for (double v : ns.eta_hat) out << "," << format_number(v);
      for (double v : ns.zeta) out << "," << format_number(v);
      out << "," << format_number(ns.V);
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace attackdet
