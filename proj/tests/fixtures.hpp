#pragma once

// Shared three-node network used by the simulation tests: a 2-state plant
// observed through a directed 3-cycle, with cached baseline and detector
// syntheses.

#include "attackdet/sim.hpp"

namespace attackdet::testing {

inline NetworkModel reference_model() {
  NetworkModel m;
  m.graph = DirectedGraph(3, {{0, 1}, {1, 2}, {2, 0}});
  m.plant = PlantModel(Matrix{{-1, 0.5}, {0, -0.05}}, Matrix{{0.2}, {0.1}}, {1.0, -1.0});
  for (const Matrix& C : {Matrix{{1, 0}}, Matrix{{0, 1}}, Matrix{{1, 1}}}) {
    m.sensors.emplace_back(C, Matrix{{0}}, Matrix{{0.1}});
    m.trackers.push_back(lowpass_tracker(2, 0.5));
    m.weights.Q.push_back(Matrix::identity(4));
    m.weights.Qbar.push_back(Matrix::identity(2) * 0.1);
  }
  m.alphas = {0.5, 0.5, 0.5};
  return m;
}

struct Designed {
  NetworkModel model;
  SynthesisResult baseline;
  std::vector<FilterGains> filter;
  SynthesisResult detector;
};

inline const Designed& reference_design() {
  static const Designed d = [] {
    Designed out;
    out.model = reference_model();
    SynthesisConfig base;
    base.gamma = 2.0;
    base.alphas = out.model.alphas;
    const std::vector<Matrix> w(3, Matrix::identity(2));
    out.baseline = synthesize_baseline(out.model.graph, out.model.plant, out.model.sensors, w, base);
    if (!out.baseline.feasible()) throw ModelError("fixture baseline infeasible: " + out.baseline.diagnostic);
    out.filter = baseline_gains(out.baseline);
    SynthesisConfig cfg;
    cfg.gamma = 2.0;
    cfg.alphas = out.model.alphas;
    out.detector = synthesize(out.model.graph, out.model.plant, out.model.sensors, out.model.trackers,
                              out.model.weights, cfg);
    if (!out.detector.feasible()) throw ModelError("fixture detector infeasible: " + out.detector.diagnostic);
    return out;
  }();
  return d;
}

}  // namespace attackdet::testing
