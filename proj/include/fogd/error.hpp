#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

namespace fogd {

/**
 * Base class of every error raised by the library.
 *
 * The driver annotates in-flight errors with the iteration at which they
 * occurred before rethrowing, so callers see e.g. "iteration 7: non-descent
 * direction (D = 3.1e-02)".
 */
class Error : public std::exception {
 public:
  explicit Error(std::string message) : message_{std::move(message)} {
    full_ = message_;
  }

  const char* what() const noexcept override { return full_.c_str(); }

  const std::string& message() const noexcept { return message_; }

  std::optional<int> iteration() const noexcept { return iteration_; }

  void annotate_iteration(int iteration) {
    if (iteration_) {
      return;
    }
    iteration_ = iteration;
    full_ = "iteration " + std::to_string(iteration) + ": " + message_;
  }

 private:
  std::string message_;
  std::string full_;
  std::optional<int> iteration_;
};

/// Malformed arguments: bad node ids, non-disjoint partitions, size mismatches.
class InputError : public Error {
  using Error::Error;
};

/// Block dimensions of a system do not fit together.
class AssemblyError : public Error {
  using Error::Error;
};

/// Singular or numerically singular KKT factorization.
class SolverError : public Error {
 public:
  SolverError(std::string message, int pivot_node, double pivot_magnitude)
      : Error{std::move(message)},
        pivot_node_{pivot_node},
        pivot_magnitude_{pivot_magnitude} {}

  /// Graph node whose pivot block failed, or -1.
  int pivot_node() const noexcept { return pivot_node_; }

  /// Smallest absolute eigenvalue of the failed pivot block.
  double pivot_magnitude() const noexcept { return pivot_magnitude_; }

 private:
  int pivot_node_;
  double pivot_magnitude_;
};

/// A model callback returned NaN/Inf.
class EvaluationError : public Error {
 public:
  EvaluationError(std::string message, int node)
      : Error{std::move(message)}, node_{node} {}

  int node() const noexcept { return node_; }

 private:
  int node_;
};

/// Adaptive Hessian shift escalated past its ceiling.
class ModificationError : public Error {
  using Error::Error;
};

/// Subproblem KKT is singular; carries the measured least singular value
/// of the internal-constraint Jacobian.
class SubproblemError : public Error {
 public:
  SubproblemError(std::string message, int subdomain, double jacobian_sigma_min)
      : Error{std::move(message)},
        subdomain_{subdomain},
        jacobian_sigma_min_{jacobian_sigma_min} {}

  int subdomain() const noexcept { return subdomain_; }
  double jacobian_sigma_min() const noexcept { return jacobian_sigma_min_; }

 private:
  int subdomain_;
  double jacobian_sigma_min_;
};

/// W_l \ T_l is empty: the subdomain is too thin for its constraints.
class DegenerateSubdomainError : public Error {
  using Error::Error;
};

/// Missing or malformed subdomain pieces during composition.
class CompositionError : public Error {
  using Error::Error;
};

/// Directional derivative of the merit function is not negative.
class NonDescentError : public Error {
 public:
  NonDescentError(std::string message, double directional_derivative)
      : Error{std::move(message)},
        directional_derivative_{directional_derivative} {}

  double directional_derivative() const noexcept {
    return directional_derivative_;
  }

 private:
  double directional_derivative_;
};

/// Armijo backtracking exceeded its limit.
class LineSearchError : public Error {
  using Error::Error;
};

/// Too few usable points to fit a rate or slope.
class InsufficientDataError : public Error {
  using Error::Error;
};

}  // namespace fogd
