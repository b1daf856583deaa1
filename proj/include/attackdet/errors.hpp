#pragma once

#include <stdexcept>
#include <string>

namespace attackdet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class SingularMatrixError : public NumericalError {
 public:
  explicit SingularMatrixError(double condition)
      : NumericalError("singular or ill-conditioned matrix (condition estimate " +
                       std::to_string(condition) + ")"),
        condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

/// Model data violates a structural assumption (e.g. E_2i not positive definite).
class ModelError : public Error {
 public:
  using Error::Error;
};

class GraphError : public Error {
 public:
  using Error::Error;
};

/// Configuration or file content rejected; the message names the field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Trajectory left the finite range during integration.
class DivergenceError : public NumericalError {
 public:
  explicit DivergenceError(double time)
      : NumericalError("trajectory diverged at t=" + std::to_string(time)), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

}  // namespace attackdet
