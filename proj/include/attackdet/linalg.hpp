#pragma once

// Dense real matrix kernel: arithmetic, cyclic Jacobi symmetric eigensolver,
// LU solve with 1-norm condition estimate, Cholesky definiteness test and a
// Hessenberg/QR eigenvalue routine for nonsymmetric matrices.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "attackdet/errors.hpp"

namespace attackdet {

/// Every numerical tolerance used by the kernel lives here so that tests and
/// the solvers share the same values.
struct Tolerances {
  static constexpr double kJacobiOffDiagonal = 1e-12;  // relative to ||M||_F
  static constexpr int kJacobiMaxSweeps = 100;
  static constexpr double kSymmetry = 1e-12;           // relative
  static constexpr double kMaxCondition = 1e12;
  static constexpr double kPositiveDefinite = 1e-10;   // E_2i > 0 check
  static constexpr int kQrMaxIterationsPerEigenvalue = 60;
};

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    if (!std::isfinite(fill)) throw NumericalError("non-finite matrix entry");
  }

  /// Row-major construction; rejects non-finite entries.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                           " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
    for (double v : data_) {
      if (!std::isfinite(v)) throw NumericalError("non-finite matrix entry");
    }
  }

  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw DimensionError("ragged matrix literal");
      for (double v : r) {
        if (!std::isfinite(v)) throw NumericalError("non-finite matrix entry");
        data_.push_back(v);
      }
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
  static Matrix zeros(std::size_t r, std::size_t c) { return Matrix(r, c); }
  static Matrix diagonal(std::span<const double> d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }
  static Matrix column(std::span<const double> v) {
    return Matrix(v.size(), 1, std::vector<double>(v.begin(), v.end()));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }
  bool square() const { return rows_ == cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  Matrix block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
    if (r0 + nr > rows_ || c0 + nc > cols_) throw DimensionError("block out of range");
    Matrix b(nr, nc);
    for (std::size_t r = 0; r < nr; ++r)
      for (std::size_t c = 0; c < nc; ++c) b(r, c) = (*this)(r0 + r, c0 + c);
    return b;
  }

  void set_block(std::size_t r0, std::size_t c0, const Matrix& b) {
    if (r0 + b.rows_ > rows_ || c0 + b.cols_ > cols_) throw DimensionError("set_block out of range");
    for (std::size_t r = 0; r < b.rows_; ++r)
      for (std::size_t c = 0; c < b.cols_; ++c) (*this)(r0 + r, c0 + c) = b(r, c);
  }

  void add_block(std::size_t r0, std::size_t c0, const Matrix& b, double scale = 1.0) {
    if (r0 + b.rows_ > rows_ || c0 + b.cols_ > cols_) throw DimensionError("add_block out of range");
    for (std::size_t r = 0; r < b.rows_; ++r)
      for (std::size_t c = 0; c < b.cols_; ++c) (*this)(r0 + r, c0 + c) += scale * b(r, c);
  }

  Matrix& operator+=(const Matrix& o) {
    check_same(o, "+=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  Matrix& operator-=(const Matrix& o) {
    check_same(o, "-=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }
  Matrix& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
  friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
  friend Matrix operator*(Matrix a, double s) { return a *= s; }
  friend Matrix operator*(double s, Matrix a) { return a *= s; }
  friend Matrix operator-(Matrix a) { return a *= -1.0; }

  friend Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols_ != b.rows_) {
      throw DimensionError("product " + a.shape() + " * " + b.shape());
    }
    Matrix p(a.rows_, b.cols_);
    for (std::size_t i = 0; i < a.rows_; ++i) {
      for (std::size_t k = 0; k < a.cols_; ++k) {
        const double aik = a(i, k);
        if (aik == 0.0) continue;
        const double* brow = &b.data_[k * b.cols_];
        double* prow = &p.data_[i * p.cols_];
        for (std::size_t j = 0; j < b.cols_; ++j) prow[j] += aik * brow[j];
      }
    }
    return p;
  }

  std::vector<double> apply(std::span<const double> x) const {
    if (x.size() != cols_) throw DimensionError("apply: vector length mismatch");
    std::vector<double> y(rows_, 0.0);
    for (std::size_t i = 0; i < rows_; ++i) {
      const double* row = &data_[i * cols_];
      double s = 0.0;
      for (std::size_t j = 0; j < cols_; ++j) s += row[j] * x[j];
      y[i] = s;
    }
    return y;
  }

  double frobenius() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }
  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }
  /// Maximum absolute column sum.
  double norm1() const {
    double best = 0.0;
    for (std::size_t c = 0; c < cols_; ++c) {
      double s = 0.0;
      for (std::size_t r = 0; r < rows_; ++r) s += std::abs((*this)(r, c));
      best = std::max(best, s);
    }
    return best;
  }
  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  Matrix symmetrized() const {
    if (!square()) throw DimensionError("symmetrize: non-square " + shape());
    Matrix s(rows_, cols_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) s(r, c) = 0.5 * ((*this)(r, c) + (*this)(c, r));
    return s;
  }

  std::string shape() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  void check_same(const Matrix& o, const char* op) const {
    if (rows_ != o.rows_ || cols_ != o.cols_) {
      throw DimensionError(std::string(op) + ": " + shape() + " vs " + o.shape());
    }
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Vectors are plain std::vector<double>.

using Vector = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}
inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }
inline Vector operator+(Vector a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("vector +: length mismatch");
  for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
  return a;
}
inline Vector operator-(Vector a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("vector -: length mismatch");
  for (std::size_t k = 0; k < a.size(); ++k) a[k] -= b[k];
  return a;
}
inline Vector operator*(double s, Vector a) {
  for (double& v : a) v *= s;
  return a;
}
/// x^T M x.
inline double quadratic_form(const Matrix& m, std::span<const double> x) {
  return dot(x, m.apply(x));
}

// ---------------------------------------------------------------------------
// Assembly helpers.

inline Matrix hstack(std::initializer_list<Matrix> parts) {
  std::size_t rows = 0, cols = 0;
  bool first = true;
  for (const auto& p : parts) {
    if (p.cols() == 0) continue;
    if (first) { rows = p.rows(); first = false; }
    if (p.rows() != rows) throw DimensionError("hstack: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::size_t c = 0;
  for (const auto& p : parts) {
    if (p.cols() == 0) continue;
    out.set_block(0, c, p);
    c += p.cols();
  }
  return out;
}

inline Matrix vstack(std::initializer_list<Matrix> parts) {
  std::size_t rows = 0, cols = 0;
  bool first = true;
  for (const auto& p : parts) {
    if (p.rows() == 0) continue;
    if (first) { cols = p.cols(); first = false; }
    if (p.cols() != cols) throw DimensionError("vstack: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::size_t r = 0;
  for (const auto& p : parts) {
    if (p.rows() == 0) continue;
    out.set_block(r, 0, p);
    r += p.rows();
  }
  return out;
}

inline Matrix block_diag(std::initializer_list<Matrix> parts) {
  std::size_t rows = 0, cols = 0;
  for (const auto& p : parts) { rows += p.rows(); cols += p.cols(); }
  Matrix out(rows, cols);
  std::size_t r = 0, c = 0;
  for (const auto& p : parts) {
    out.set_block(r, c, p);
    r += p.rows();
    c += p.cols();
  }
  return out;
}

/// [I_k 0] of shape k x n.
inline Matrix selector(std::size_t k, std::size_t n) {
  if (k > n) throw DimensionError("selector: k > n");
  Matrix s(k, n);
  for (std::size_t i = 0; i < k; ++i) s(i, i) = 1.0;
  return s;
}

inline bool is_symmetric(const Matrix& m, double rel_tol = Tolerances::kSymmetry) {
  if (!m.square()) return false;
  const double scale = std::max(1.0, m.max_abs());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = r + 1; c < m.cols(); ++c)
      if (std::abs(m(r, c) - m(c, r)) > rel_tol * scale) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition.

struct SymEig {
  std::vector<double> values;  // ascending
  Matrix vectors;              // columns are eigenvectors

  double min() const { return values.front(); }
  double max() const { return values.back(); }
  std::vector<double> vector(std::size_t k) const {
    std::vector<double> v(vectors.rows());
    for (std::size_t r = 0; r < v.size(); ++r) v[r] = vectors(r, k);
    return v;
  }
};

namespace detail {

inline double off_diagonal_norm(const Matrix& a) {
  double s = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c)
      if (r != c) s += a(r, c) * a(r, c);
  return std::sqrt(s);
}

// Cyclic Jacobi on a (in place) accumulating rotations into v.
inline void jacobi_sweeps(Matrix& a, Matrix& v) {
  const std::size_t n = a.rows();
  const double scale = a.frobenius();
  if (scale == 0.0) return;
  const double threshold = Tolerances::kJacobiOffDiagonal * scale;
  for (int sweep = 0; sweep < Tolerances::kJacobiMaxSweeps; ++sweep) {
    if (off_diagonal_norm(a) <= threshold) return;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p), aqq = a(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (off_diagonal_norm(a) > threshold) {
    throw NumericalError("Jacobi eigensolver did not converge in " +
                         std::to_string(Tolerances::kJacobiMaxSweeps) + " sweeps");
  }
}

inline SymEig sorted_eig(const Matrix& a, const Matrix& v) {
  const std::size_t n = a.rows();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });
  SymEig out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = v(r, order[k]);
  }
  return out;
}

}  // namespace detail

/// Eigendecomposition of a symmetric matrix (symmetrized internally).
inline SymEig sym_eig(const Matrix& m) {
  if (!m.square()) throw DimensionError("sym_eig: non-square " + m.shape());
  Matrix a = m.symmetrized();
  Matrix v = Matrix::identity(m.rows());
  detail::jacobi_sweeps(a, v);
  return detail::sorted_eig(a, v);
}

/// Same as sym_eig, but starts the rotations from the orthogonal basis `guess`
/// (e.g. the eigenvectors of a nearby matrix). Converges in very few sweeps
/// when the guess nearly diagonalizes m.
inline SymEig sym_eig_warm(const Matrix& m, const Matrix& guess) {
  if (!m.square()) throw DimensionError("sym_eig: non-square " + m.shape());
  if (guess.rows() != m.rows() || guess.cols() != m.cols()) return sym_eig(m);
  Matrix a = (guess.transpose() * m.symmetrized() * guess).symmetrized();
  Matrix v = guess;
  detail::jacobi_sweeps(a, v);
  return detail::sorted_eig(a, v);
}

inline double lambda_max(const Matrix& m) { return sym_eig(m).max(); }
inline double lambda_min(const Matrix& m) { return sym_eig(m).min(); }

/// Spectral norm via the eigenvalues of M^T M.
inline double norm2(const Matrix& m) {
  if (m.empty()) return 0.0;
  const Matrix g = m.rows() >= m.cols() ? m.transpose() * m : m * m.transpose();
  return std::sqrt(std::max(0.0, lambda_max(g)));
}

// ---------------------------------------------------------------------------
// LU with partial pivoting.

class LuDecomposition {
 public:
  explicit LuDecomposition(const Matrix& a) : lu_(a), perm_(a.rows()) {
    if (!a.square()) throw DimensionError("LU: non-square " + a.shape());
    const std::size_t n = a.rows();
    norm1_ = a.norm1();
    std::iota(perm_.begin(), perm_.end(), 0);
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t piv = k;
      for (std::size_t r = k + 1; r < n; ++r)
        if (std::abs(lu_(r, k)) > std::abs(lu_(piv, k))) piv = r;
      if (lu_(piv, k) == 0.0) {
        singular_ = true;
        continue;
      }
      if (piv != k) {
        for (std::size_t c = 0; c < n; ++c) std::swap(lu_(k, c), lu_(piv, c));
        std::swap(perm_[k], perm_[piv]);
        parity_ = -parity_;
      }
      for (std::size_t r = k + 1; r < n; ++r) {
        const double f = lu_(r, k) / lu_(k, k);
        lu_(r, k) = f;
        for (std::size_t c = k + 1; c < n; ++c) lu_(r, c) -= f * lu_(k, c);
      }
    }
  }

  bool singular() const { return singular_; }

  double determinant() const {
    if (singular_) return 0.0;
    double d = parity_;
    for (std::size_t k = 0; k < lu_.rows(); ++k) d *= lu_(k, k);
    return d;
  }

  /// Hager/Higham estimate of the 1-norm condition number.
  double condition_estimate() const {
    if (singular_) return std::numeric_limits<double>::infinity();
    const std::size_t n = lu_.rows();
    if (n == 0) return 1.0;
    std::vector<double> x(n, 1.0 / static_cast<double>(n));
    double est = 0.0;
    for (int iter = 0; iter < 5; ++iter) {
      std::vector<double> y = solve_vector(x, false);
      double ynorm = 0.0;
      for (double v : y) ynorm += std::abs(v);
      if (iter > 0 && ynorm <= est) break;
      est = ynorm;
      std::vector<double> xi(n);
      for (std::size_t i = 0; i < n; ++i) xi[i] = y[i] >= 0 ? 1.0 : -1.0;
      std::vector<double> z = solve_vector(xi, true);
      std::size_t jmax = 0;
      for (std::size_t i = 1; i < n; ++i)
        if (std::abs(z[i]) > std::abs(z[jmax])) jmax = i;
      double ztx = 0.0;
      for (std::size_t i = 0; i < n; ++i) ztx += z[i] * x[i];
      if (std::abs(z[jmax]) <= ztx) break;
      std::fill(x.begin(), x.end(), 0.0);
      x[jmax] = 1.0;
    }
    return est * norm1_;
  }

  Matrix solve(const Matrix& b) const {
    if (b.rows() != lu_.rows()) throw DimensionError("solve: rhs " + b.shape() + " vs " + lu_.shape());
    Matrix x(b.rows(), b.cols());
    std::vector<double> col(b.rows());
    for (std::size_t c = 0; c < b.cols(); ++c) {
      for (std::size_t r = 0; r < b.rows(); ++r) col[r] = b(r, c);
      const auto sol = solve_vector(col, false);
      for (std::size_t r = 0; r < b.rows(); ++r) x(r, c) = sol[r];
    }
    return x;
  }

 private:
  // Solves A x = b, or A^T x = b when transposed.
  std::vector<double> solve_vector(std::span<const double> b, bool transposed) const {
    const std::size_t n = lu_.rows();
    std::vector<double> x(n);
    if (!transposed) {
      for (std::size_t i = 0; i < n; ++i) x[i] = b[perm_[i]];
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < i; ++k) x[i] -= lu_(i, k) * x[k];
      for (std::size_t i = n; i-- > 0;) {
        for (std::size_t k = i + 1; k < n; ++k) x[i] -= lu_(i, k) * x[k];
        x[i] /= lu_(i, i);
      }
      return x;
    }
    // A = P^T L U  =>  A^T = U^T L^T P
    std::vector<double> w(b.begin(), b.end());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < i; ++k) w[i] -= lu_(k, i) * w[k];
      w[i] /= lu_(i, i);
    }
    for (std::size_t i = n; i-- > 0;)
      for (std::size_t k = i + 1; k < n; ++k) w[i] -= lu_(k, i) * w[k];
    for (std::size_t i = 0; i < n; ++i) x[perm_[i]] = w[i];
    return x;
  }

  Matrix lu_;
  std::vector<std::size_t> perm_;
  double norm1_ = 0.0;
  double parity_ = 1.0;
  bool singular_ = false;
};

/// Solves A X = B. Throws SingularMatrixError when the 1-norm condition
/// estimate exceeds Tolerances::kMaxCondition.
inline Matrix solve(const Matrix& a, const Matrix& b) {
  LuDecomposition lu(a);
  const double cond = lu.condition_estimate();
  if (lu.singular() || !(cond < Tolerances::kMaxCondition)) {
    throw SingularMatrixError(cond);
  }
  return lu.solve(b);
}

inline Matrix inverse(const Matrix& a) { return solve(a, Matrix::identity(a.rows())); }

/// True iff Cholesky of M + shift*I succeeds with strictly positive pivots.
inline bool chol_psd_check(const Matrix& m, double shift) {
  if (!m.square()) return false;
  const std::size_t n = m.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = 0.5 * (m(j, j) + m(j, j)) + shift;
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) return false;
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = 0.5 * (m(i, j) + m(j, i));
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Eigenvalues of a general real matrix: balancing, Hessenberg reduction by
// stabilized elementary similarity transforms, Francis double-shift QR.

inline std::vector<std::complex<double>> eigenvalues(const Matrix& m) {
  if (!m.square()) throw DimensionError("eigenvalues: non-square " + m.shape());
  const int n = static_cast<int>(m.rows());
  std::vector<std::complex<double>> out;
  if (n == 0) return out;
  Matrix a = m;

  // Balance.
  constexpr double radix = 2.0;
  bool done = false;
  while (!done) {
    done = true;
    for (int i = 0; i < n; ++i) {
      double r = 0.0, c = 0.0;
      for (int j = 0; j < n; ++j)
        if (j != i) {
          c += std::abs(a(j, i));
          r += std::abs(a(i, j));
        }
      if (c != 0.0 && r != 0.0) {
        double g = r / radix, f = 1.0;
        const double s = c + r;
        while (c < g) { f *= radix; c *= radix * radix; }
        g = r * radix;
        while (c > g) { f /= radix; c /= radix * radix; }
        if ((c + r) / f < 0.95 * s) {
          done = false;
          g = 1.0 / f;
          for (int j = 0; j < n; ++j) a(i, j) *= g;
          for (int j = 0; j < n; ++j) a(j, i) *= f;
        }
      }
    }
  }

  // Reduce to upper Hessenberg form.
  for (int k = 1; k < n - 1; ++k) {
    double x = 0.0;
    int piv = k;
    for (int j = k; j < n; ++j)
      if (std::abs(a(j, k - 1)) > std::abs(x)) { x = a(j, k - 1); piv = j; }
    if (piv != k) {
      for (int j = k - 1; j < n; ++j) std::swap(a(piv, j), a(k, j));
      for (int j = 0; j < n; ++j) std::swap(a(j, piv), a(j, k));
    }
    if (x != 0.0) {
      for (int i = k + 1; i < n; ++i) {
        double y = a(i, k - 1);
        if (y != 0.0) {
          y /= x;
          a(i, k - 1) = y;
          for (int j = k; j < n; ++j) a(i, j) -= y * a(k, j);
          for (int j = 0; j < n; ++j) a(j, k) += y * a(j, i);
        }
      }
    }
  }
  for (int i = 2; i < n; ++i)
    for (int j = 0; j < i - 1; ++j) a(i, j) = 0.0;

  // Shifted QR on the Hessenberg matrix.
  out.assign(n, {0.0, 0.0});
  double anorm = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::abs(a(i, j));
  int nn = n - 1;
  double t = 0.0;
  const double eps = std::numeric_limits<double>::epsilon();
  while (nn >= 0) {
    int its = 0, l = 0;
    do {
      for (l = nn; l > 0; --l) {
        const double s = std::abs(a(l - 1, l - 1)) + std::abs(a(l, l));
        const double ss = s == 0.0 ? anorm : s;
        if (std::abs(a(l, l - 1)) <= eps * ss) {
          a(l, l - 1) = 0.0;
          break;
        }
      }
      const double x = a(nn, nn);
      if (l == nn) {
        out[nn] = {x + t, 0.0};
        --nn;
      } else {
        const double y = a(nn - 1, nn - 1);
        const double w = a(nn, nn - 1) * a(nn - 1, nn);
        if (l == nn - 1) {
          const double p = 0.5 * (y - x);
          const double q = p * p + w;
          const double z = std::sqrt(std::abs(q));
          const double xt = x + t;
          if (q >= 0.0) {
            const double zz = p + (p >= 0 ? std::abs(z) : -std::abs(z));
            out[nn - 1] = out[nn] = {xt + zz, 0.0};
            if (zz != 0.0) out[nn] = {xt - w / zz, 0.0};
          } else {
            out[nn - 1] = {xt + p, z};
            out[nn] = {xt + p, -z};
          }
          nn -= 2;
        } else {
          if (its == Tolerances::kQrMaxIterationsPerEigenvalue) {
            throw NumericalError("QR eigenvalue iteration did not converge");
          }
          double xx = x, yy = y, ww = w;
          if (its == 10 || its == 20) {
            t += xx;
            for (int i = 0; i <= nn; ++i) a(i, i) -= xx;
            const double s = std::abs(a(nn, nn - 1)) + std::abs(a(nn - 1, nn - 2));
            yy = xx = 0.75 * s;
            ww = -0.4375 * s * s;
          }
          ++its;
          int mm = nn - 2;
          double p = 0, q = 0, r = 0, z = 0;
          for (; mm >= l; --mm) {
            z = a(mm, mm);
            r = xx - z;
            const double s = yy - z;
            p = (r * s - ww) / a(mm + 1, mm) + a(mm, mm + 1);
            q = a(mm + 1, mm + 1) - z - r - s;
            r = a(mm + 2, mm + 1);
            const double sc = std::abs(p) + std::abs(q) + std::abs(r);
            p /= sc;
            q /= sc;
            r /= sc;
            if (mm == l) break;
            const double u = std::abs(a(mm, mm - 1)) * (std::abs(q) + std::abs(r));
            const double v = std::abs(p) * (std::abs(a(mm - 1, mm - 1)) + std::abs(z) +
                                            std::abs(a(mm + 1, mm + 1)));
            if (u <= eps * v) break;
          }
          for (int i = mm; i < nn - 1; ++i) {
            a(i + 2, i) = 0.0;
            if (i != mm) a(i + 2, i - 1) = 0.0;
          }
          for (int k = mm; k < nn; ++k) {
            if (k != mm) {
              p = a(k, k - 1);
              q = a(k + 1, k - 1);
              r = 0.0;
              if (k + 1 != nn) r = a(k + 2, k - 1);
              xx = std::abs(p) + std::abs(q) + std::abs(r);
              if (xx != 0.0) {
                p /= xx;
                q /= xx;
                r /= xx;
              }
            }
            const double s0 = std::sqrt(p * p + q * q + r * r);
            const double s = p >= 0 ? s0 : -s0;
            if (s != 0.0) {
              if (k == mm) {
                if (l != mm) a(k, k - 1) = -a(k, k - 1);
              } else {
                a(k, k - 1) = -s * xx;
              }
              p += s;
              xx = p / s;
              yy = q / s;
              z = r / s;
              q /= p;
              r /= p;
              for (int j = k; j <= nn; ++j) {
                p = a(k, j) + q * a(k + 1, j);
                if (k + 1 != nn) {
                  p += r * a(k + 2, j);
                  a(k + 2, j) -= p * z;
                }
                a(k + 1, j) -= p * yy;
                a(k, j) -= p * xx;
              }
              const int mmin = nn < k + 3 ? nn : k + 3;
              for (int i = l; i <= mmin; ++i) {
                p = xx * a(i, k) + yy * a(i, k + 1);
                if (k + 1 != nn) {
                  p += z * a(i, k + 2);
                  a(i, k + 2) -= p * r;
                }
                a(i, k + 1) -= p * q;
                a(i, k) -= p;
              }
            }
          }
        }
      }
    } while (l < nn - 1);
  }
  return out;
}

/// Largest real part over the spectrum.
inline double spectral_abscissa(const Matrix& m) {
  const auto ev = eigenvalues(m);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& e : ev) best = std::max(best, e.real());
  return best;
}

}  // namespace attackdet
