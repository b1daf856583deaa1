// attackdet: synthesize, simulate and verify distributed attack detectors.
//
// Exit codes: 0 ok, 1 config/IO, 2 infeasible, 3 verification failure,
// 4 divergence.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "attackdet/io.hpp"

namespace {

using namespace attackdet;

enum Exit { kOk = 0, kConfig = 1, kInfeasible = 2, kVerification = 3, kDivergence = 4 };

struct Options {
  std::string config;
  std::string gains;
  std::string scenario;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> margin;
};

void apply_overrides(ProjectConfig& cfg, const Options& o) {
  if (o.seed) cfg.synthesis.solver.seed = *o.seed;
  if (o.margin) {
    if (!(*o.margin > 0.0)) throw ConfigError("--margin must be positive");
    cfg.synthesis.margin = *o.margin;
  }
}

SynthesisConfig synthesis_config(const ProjectConfig& cfg, double gamma) {
  SynthesisConfig sc;
  sc.gamma = gamma;
  sc.alphas = cfg.model.alphas;
  sc.margin = cfg.synthesis.margin;
  sc.solver = cfg.synthesis.solver;
  return sc;
}

void print_result(const SynthesisResult& r) {
  std::printf("status: %s\n", to_string(r.status).c_str());
  std::printf("gamma: %.17g\n", r.gamma);
  for (std::size_t i = 0; i < r.nodes.size(); ++i) {
    std::printf("node %zu: lmi lambda_max %.6e, X lambda_min %.6e\n", i + 1, r.nodes[i].lmi_lambda_max,
                r.nodes[i].x_lambda_min);
  }
  if (!r.diagnostic.empty()) std::fprintf(stderr, "diagnostic: %s\n", r.diagnostic.c_str());
}

int run_synth(const Options& o, bool force_bisection) {
  ProjectConfig cfg = load_config(o.config);
  apply_overrides(cfg, o);
  std::vector<FilterGains> baseline;
  try {
    baseline = resolve_baseline(cfg);
  } catch (const ModelError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInfeasible;
  }
  const auto nodes = cfg.model.augmented();
  SynthesisResult result;
  std::optional<BisectionResult> bis;
  if (force_bisection || cfg.synthesis.bisection) {
    const BisectionSettings b = cfg.synthesis.bisection.value_or(BisectionSettings{});
    bis = bisect_gamma([&](double g) { return synthesize_nodes(cfg.model.graph, nodes, synthesis_config(cfg, g)); },
                       b.lo, b.hi, b.tol);
    for (const auto& p : bis->probes) {
      std::printf("probe gamma=%.6g %s (%zu iterations)\n", p.gamma, to_string(p.status).c_str(), p.iterations);
    }
    result = bis->best;
  } else {
    result = synthesize_nodes(cfg.model.graph, nodes, synthesis_config(cfg, *cfg.synthesis.gamma));
  }
  print_result(result);
  const Json doc = synthesis_to_json(result, cfg, baseline, bis ? &bis->probes : nullptr);
  if (!o.out.empty()) write_text_file(o.out, doc.dump(2) + "\n");
  return result.feasible() ? kOk : kInfeasible;
}

int run_check(const Options& o) {
  const GainsDocument g = load_gains(o.gains);
  const double margin = o.margin.value_or(g.detector.margin);
  const auto checks = check_certificates(g.config.model, g.detector, margin);
  bool ok = true;
  for (const auto& c : checks) {
    std::printf("%-10s %s %.17g (required %s %.6e) %s\n", c.name.c_str(),
                c.name.rfind("lmi", 0) == 0 ? "lambda_max" : "lambda_min", c.extreme,
                c.name.rfind("lmi", 0) == 0 ? "<=" : ">=", c.required, c.pass ? "ok" : "FAIL");
    if (!c.pass) {
      ok = false;
      std::fprintf(stderr, "verification failed: %s\n", c.name.c_str());
    }
  }
  return ok ? kOk : kVerification;
}

int run_simulate(const Options& o) {
  const GainsDocument g = load_gains(o.gains);
  ProjectConfig cfg = o.config.empty() ? g.config : load_config(o.config);
  if (cfg.model.size() != g.config.model.size() || cfg.model.plant.n() != g.config.model.plant.n()) {
    throw ConfigError("--config does not match the network the gains were synthesized for");
  }
  if (!g.detector.feasible()) {
    std::fprintf(stderr, "error: gains file holds an infeasible synthesis\n");
    return kInfeasible;
  }
  if (o.scenario.empty()) throw ConfigError("--scenario is required");
  Scenario sc = cfg.scenario(o.scenario);
  if (o.seed) sc.seed = *o.seed;
  const std::string dir = o.out.empty() ? "." : o.out;
  std::filesystem::create_directories(dir);

  std::vector<VerificationReport> reps;
  for (std::size_t k = 0; k < sc.realizations; ++k) {
    Scenario run = sc;
    run.seed = sc.seed + k;
    const SimulationTrace tr = simulate(run, cfg.model, g.baseline, g.detector);
    if (k == 0) write_text_file(dir + "/" + sc.name + ".csv", trace_to_csv(tr));
    reps.push_back(verify_trace(tr, run, cfg.model, g.detector, cfg.thresholds));
  }
  const Json doc = report_to_json(reps, sc);
  write_text_file(dir + "/" + sc.name + ".report.json", doc.dump(2) + "\n");
  bool ok = true;
  for (std::size_t k = 0; k < reps.size(); ++k) {
    for (const auto& c : reps[k].checks) {
      if (reps.size() == 1 || !c.pass) {
        std::printf("%s%s: %.6e vs %.6e %s\n", c.name.c_str(),
                    reps.size() > 1 ? ("[" + std::to_string(k + 1) + "]").c_str() : "", c.value, c.threshold,
                    c.pass ? "ok" : "FAIL");
      }
      ok = ok && c.pass;
    }
  }
  std::printf("%s\n", ok ? "all checks passed" : "verification failed");
  return ok ? kOk : kVerification;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed H-infinity attack detector synthesis and verification"};
  app.require_subcommand(1);
  Options o;
  auto* synth = app.add_subcommand("synth", "solve the coupled LMIs and write the gains document");
  auto* bisect = app.add_subcommand("bisect-gamma", "bisect for the smallest certified gamma");
  auto* check = app.add_subcommand("check", "re-verify the LMI certificates of a gains document");
  auto* sim = app.add_subcommand("simulate", "simulate a scenario and write trace CSV plus report JSON");
  for (auto* s : {synth, bisect}) {
    s->add_option("--config", o.config, "project config JSON")->required();
    s->add_option("--out", o.out, "gains document to write");
    s->add_option("--seed", o.seed, "solver seed");
    s->add_option("--margin", o.margin, "strictness margin");
  }
  check->add_option("--gains", o.gains, "gains document")->required();
  check->add_option("--margin", o.margin, "required margin (default: the one used in synthesis)");
  sim->add_option("--config", o.config, "project config JSON (default: the one embedded in the gains)");
  sim->add_option("--gains", o.gains, "gains document")->required();
  sim->add_option("--scenario", o.scenario, "scenario name")->required();
  sim->add_option("--out", o.out, "output directory");
  sim->add_option("--seed", o.seed, "scenario seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  try {
    if (*synth) return run_synth(o, false);
    if (*bisect) return run_synth(o, true);
    if (*check) return run_check(o);
    if (*sim) return run_simulate(o);
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "divergence: %s\n", e.what());
    return kDivergence;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kConfig;
  }
  return kConfig;
}
