#pragma once

// Feasibility solver for systems of strict linear matrix inequalities.
//
// Each constraint is F(v) = C + sum_k scale_k * sym(L_k' V_k^(T) R_k) with
// sym(T) = (T + T')/2, required to be negative (or positive) definite with an
// explicit margin. The solver minimizes
//     phi(v) = max_c ( lambda_max(s_c F_c(v)) + margin_c ),  s_c = +-1,
// which is convex in v, by projected subgradient steps with a Polyak step
// length. The target level starts deep and is halved each time progress
// stalls, down to -margin/2.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "attackdet/errors.hpp"
#include "attackdet/linalg.hpp"
#include "attackdet/random.hpp"

namespace attackdet {

struct LmiVariable {
  std::size_t id = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool symmetric = false;
  std::string name;
};

/// scale * sym(left' * V * right), or V' when transpose is set.
/// left is (rows of V^(T)) x size, right is (cols of V^(T)) x size.
struct LmiTerm {
  std::size_t var = 0;
  Matrix left;
  Matrix right;
  bool transpose = false;
  double scale = 1.0;
};

enum class Sense { negative_definite, positive_definite };

struct LmiConstraint {
  std::string name;
  Matrix constant;
  std::vector<LmiTerm> terms;
  Sense sense = Sense::negative_definite;
  double margin = 1e-6;

  std::size_t size() const { return constant.rows(); }
  double sign() const { return sense == Sense::negative_definite ? 1.0 : -1.0; }
};

enum class SdpStatus { feasible, infeasible_budget, numerical_failure };

inline std::string to_string(SdpStatus s) {
  switch (s) {
    case SdpStatus::feasible: return "feasible";
    case SdpStatus::infeasible_budget: return "infeasible_budget";
    case SdpStatus::numerical_failure: return "numerical_failure";
  }
  return "numerical_failure";
}

using Assignment = std::vector<Matrix>;

struct SdpSolution {
  SdpStatus status = SdpStatus::numerical_failure;
  Assignment assignment;
  /// lambda_max for negative-definite constraints, lambda_min for positive ones,
  /// recomputed with sym_eig from the final assignment.
  std::vector<double> certificate;
  std::size_t iterations = 0;
  int attempts = 0;
  /// max_c (lambda_max(s_c F_c) + margin_c) at the best point found.
  double best_violation = std::numeric_limits<double>::infinity();
  std::size_t worst_constraint = 0;
};

struct SolverOptions {
  std::size_t budget = 50000;   // iterations per attempt
  std::uint64_t seed = 1;
  bool restart = true;          // one perturbed restart before giving up
  double initial_depth = 0.0;   // <= 0: 1e-3 * (1 + max ||C||_2)
  std::size_t stall_window = 300;
  // Abandon an attempt once the target depth is at its floor and the best
  // violation is still positive without 0.1% progress over this many
  // iterations. 0 disables.
  std::size_t abandon_window = 5000;
};

inline Assignment zero_assignment(std::span<const LmiVariable> vars) {
  Assignment a;
  a.reserve(vars.size());
  for (const auto& v : vars) a.emplace_back(v.rows, v.cols);
  return a;
}

inline void validate(std::span<const LmiVariable> vars, const LmiConstraint& c) {
  if (!c.constant.square()) throw DimensionError(c.name + ": constant block must be square");
  for (const auto& v : vars) {
    if (v.symmetric && v.rows != v.cols) throw DimensionError("variable " + v.name + ": symmetric but not square");
  }
  for (const auto& t : c.terms) {
    if (t.var >= vars.size()) throw DimensionError(c.name + ": term references undeclared variable");
    const auto& v = vars[t.var];
    const std::size_t vr = t.transpose ? v.cols : v.rows;
    const std::size_t vc = t.transpose ? v.rows : v.cols;
    if (t.left.rows() != vr || t.right.rows() != vc || t.left.cols() != c.size() || t.right.cols() != c.size()) {
      throw DimensionError(c.name + ": term multipliers not conformable with variable " + v.name + " (" +
                           t.left.shape() + ", " + t.right.shape() + ")");
    }
  }
}

/// Value of a constraint at an assignment.
inline Matrix assemble(const LmiConstraint& c, const Assignment& assignment) {
  Matrix out = c.constant;
  for (const auto& t : c.terms) {
    if (t.var >= assignment.size() || assignment[t.var].empty()) {
      throw DimensionError(c.name + ": assignment is missing variable " + std::to_string(t.var));
    }
    const Matrix v = t.transpose ? assignment[t.var].transpose() : assignment[t.var];
    const Matrix prod = t.left.transpose() * v * t.right;
    out.add_block(0, 0, prod, 0.5 * t.scale);
    out.add_block(0, 0, prod.transpose(), 0.5 * t.scale);
  }
  return out.symmetrized();
}

namespace detail {

// Term with multipliers restricted to their nonzero columns, so assembly and
// gradient cost scale with the block sizes rather than the full constraint.
struct CompactTerm {
  std::size_t var;
  bool transpose;
  double scale;
  std::vector<std::size_t> left_support;
  std::vector<std::size_t> right_support;
  Matrix left_t;  // (|left_support| x vr) = left[:, support]'
  Matrix right;   // (vc x |right_support|)
};

inline std::vector<std::size_t> column_support(const Matrix& m) {
  std::vector<std::size_t> s;
  for (std::size_t c = 0; c < m.cols(); ++c) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      if (m(r, c) != 0.0) {
        s.push_back(c);
        break;
      }
    }
  }
  return s;
}

inline Matrix select_columns(const Matrix& m, const std::vector<std::size_t>& cols) {
  Matrix out(m.rows(), cols.size());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t k = 0; k < cols.size(); ++k) out(r, k) = m(r, cols[k]);
  return out;
}

inline CompactTerm compact(const LmiTerm& t) {
  CompactTerm c{t.var, t.transpose, t.scale, column_support(t.left), column_support(t.right), {}, {}};
  c.left_t = select_columns(t.left, c.left_support).transpose();
  c.right = select_columns(t.right, c.right_support);
  return c;
}

class ConstraintEvaluator {
 public:
  explicit ConstraintEvaluator(const LmiConstraint& c) : constant_(c.constant.symmetrized()), sign_(c.sign()), margin_(c.margin) {
    for (const auto& t : c.terms) terms_.push_back(compact(t));
  }

  Matrix value(const Assignment& a) const {
    Matrix out = constant_;
    for (const auto& t : terms_) {
      const Matrix& v = a[t.var];
      const Matrix prod = t.transpose ? t.left_t * (v.transpose() * t.right) : t.left_t * (v * t.right);
      for (std::size_t i = 0; i < t.left_support.size(); ++i) {
        for (std::size_t j = 0; j < t.right_support.size(); ++j) {
          const double x = 0.5 * t.scale * prod(i, j);
          out(t.left_support[i], t.right_support[j]) += x;
          out(t.right_support[j], t.left_support[i]) += x;
        }
      }
    }
    return out;
  }

  /// Adds d(u' s F u)/dV for unit vector u into grads.
  void accumulate_gradient(std::span<const double> u, std::vector<Matrix>& grads) const {
    for (const auto& t : terms_) {
      Vector lu(t.left_t.cols(), 0.0);
      for (std::size_t i = 0; i < t.left_support.size(); ++i) {
        const double ui = u[t.left_support[i]];
        for (std::size_t k = 0; k < lu.size(); ++k) lu[k] += t.left_t(i, k) * ui;
      }
      Vector ru(t.right.rows(), 0.0);
      for (std::size_t k = 0; k < ru.size(); ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < t.right_support.size(); ++j) s += t.right(k, j) * u[t.right_support[j]];
        ru[k] = s;
      }
      Matrix& g = grads[t.var];
      const double w = sign_ * t.scale;
      if (!t.transpose) {
        for (std::size_t a = 0; a < lu.size(); ++a)
          for (std::size_t b = 0; b < ru.size(); ++b) g(a, b) += w * lu[a] * ru[b];
      } else {
        for (std::size_t a = 0; a < ru.size(); ++a)
          for (std::size_t b = 0; b < lu.size(); ++b) g(a, b) += w * ru[a] * lu[b];
      }
    }
  }

  double sign() const { return sign_; }
  double margin() const { return margin_; }
  double constant_norm() const { return norm2(constant_); }

 private:
  Matrix constant_;
  double sign_;
  double margin_;
  std::vector<CompactTerm> terms_;
};

inline void project_symmetric(std::span<const LmiVariable> vars, Assignment& a) {
  for (const auto& v : vars)
    if (v.symmetric) a[v.id] = a[v.id].symmetrized();
}

}  // namespace detail

/// Extreme eigenvalue per constraint (lambda_max for "< 0", lambda_min for
/// "> 0"), computed from scratch with sym_eig.
inline std::vector<double> certificates(std::span<const LmiConstraint> cons, const Assignment& a) {
  std::vector<double> out;
  out.reserve(cons.size());
  for (const auto& c : cons) {
    const SymEig e = sym_eig(assemble(c, a));
    out.push_back(c.sense == Sense::negative_definite ? e.max() : e.min());
  }
  return out;
}

inline bool certificates_hold(std::span<const LmiConstraint> cons, std::span<const double> cert) {
  for (std::size_t k = 0; k < cons.size(); ++k) {
    const bool ok = cons[k].sense == Sense::negative_definite ? cert[k] <= -cons[k].margin
                                                                : cert[k] >= cons[k].margin;
    if (!ok) return false;
  }
  return true;
}

inline SdpSolution solve_feasibility(std::span<const LmiVariable> vars, std::span<const LmiConstraint> cons,
                                     const SolverOptions& options = {}) {
  for (std::size_t k = 0; k < vars.size(); ++k) {
    if (vars[k].id != k) throw DimensionError("variable ids must be 0..count-1 in order");
  }
  for (const auto& c : cons) validate(vars, c);

  std::vector<detail::ConstraintEvaluator> evals;
  evals.reserve(cons.size());
  double max_constant = 0.0;
  double max_margin = 0.0;
  for (const auto& c : cons) {
    evals.emplace_back(c);
    max_constant = std::max(max_constant, evals.back().constant_norm());
    max_margin = std::max(max_margin, c.margin);
  }
  const double depth0 = options.initial_depth > 0.0 ? options.initial_depth : 1e-3 * (1.0 + max_constant);
  const double depth_floor = 0.5 * max_margin;

  SdpSolution result;
  Rng rng(options.seed);
  Assignment start = zero_assignment(vars);
  for (const auto& v : vars)
    if (v.symmetric) start[v.id] = Matrix::identity(v.rows);

  const int attempts = options.restart ? 2 : 1;
  Assignment best_point = start;
  double global_best = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt < attempts; ++attempt) {
    Assignment x = start;
    if (attempt > 0) {
      for (const auto& v : vars) {
        Matrix noise(v.rows, v.cols);
        for (double& e : noise.data()) e = 0.1 * rng.normal();
        if (v.symmetric) {
          x[v.id] = Matrix::identity(v.rows) + noise * noise.transpose() * (1.0 / static_cast<double>(v.rows));
        } else {
          x[v.id] = noise;
        }
      }
    }
    result.attempts = attempt + 1;
    std::vector<Matrix> bases(cons.size());
    double depth = depth0;
    double best = std::numeric_limits<double>::infinity();
    std::size_t last_improvement = 0;
    std::size_t floor_since = 0;
    std::size_t last_progress = 0;
    double progress_ref = std::numeric_limits<double>::infinity();

    for (std::size_t it = 0; it < options.budget; ++it) {
      ++result.iterations;
      double phi = -std::numeric_limits<double>::infinity();
      std::size_t worst = 0;
      Vector worst_u;
      bool all_deep = true;
      for (std::size_t c = 0; c < cons.size(); ++c) {
        const Matrix f = evals[c].value(x) * evals[c].sign();
        if (!f.all_finite()) {
          result.status = SdpStatus::numerical_failure;
          result.assignment = best_point;
          return result;
        }
        // Periodic cold start keeps the accumulated basis orthogonal.
        const SymEig e = (it % 1000 == 0) ? sym_eig(f) : sym_eig_warm(f, bases[c]);
        bases[c] = e.vectors;
        const double v = e.max() + evals[c].margin();
        if (v > -0.5 * evals[c].margin()) all_deep = false;
        if (v > phi) {
          phi = v;
          worst = c;
          worst_u = e.vector(e.values.size() - 1);
        }
      }
      if (phi < best) {
        if (phi < best - 1e-3 * std::abs(best)) last_improvement = it;
        best = phi;
      }
      if (phi < global_best) {
        global_best = phi;
        best_point = x;
        result.best_violation = phi;
        result.worst_constraint = worst;
      }
      if (all_deep) {
        const auto cert = certificates(cons, x);
        if (certificates_hold(cons, cert)) {
          result.status = SdpStatus::feasible;
          result.assignment = x;
          result.certificate = cert;
          return result;
        }
      }
      if (it - last_improvement > options.stall_window && depth > depth_floor) {
        depth = std::max(0.5 * depth, depth_floor);
        last_improvement = it;
        if (depth <= depth_floor) floor_since = it;
      }
      if (best < progress_ref - 1e-3 * std::abs(progress_ref)) {
        progress_ref = best;
        last_progress = it;
      }
      if (options.abandon_window > 0 && depth <= depth_floor && best > 0.0 &&
          it - std::max(floor_since, last_progress) > options.abandon_window) {
        break;
      }

      std::vector<Matrix> grads = zero_assignment(vars);
      evals[worst].accumulate_gradient(worst_u, grads);
      double gnorm2 = 0.0;
      for (const auto& v : vars) {
        if (v.symmetric) grads[v.id] = grads[v.id].symmetrized();
        const double f = grads[v.id].frobenius();
        gnorm2 += f * f;
      }
      if (!(gnorm2 > 0.0)) break;  // constant constraint violated: nothing to move
      const double step = (phi + depth) / gnorm2;
      for (const auto& v : vars) x[v.id] -= grads[v.id] * step;
      detail::project_symmetric(vars, x);
    }
  }
  result.status = SdpStatus::infeasible_budget;
  result.assignment = best_point;
  result.certificate = certificates(cons, best_point);
  return result;
}

}  // namespace attackdet
