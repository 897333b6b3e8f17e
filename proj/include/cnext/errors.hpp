#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace cnext {

/// Raised for precondition violations (bad sizes, out-of-range parameters).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A local Hessian failed its Cholesky factorization.
class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(std::size_t agent, const std::string& what)
      : std::runtime_error(what), agent_(agent) {}
  std::size_t agent() const noexcept { return agent_; }

 private:
  std::size_t agent_;
};

/// A non-finite value appeared in the iterate. `quantity` names which one.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::string quantity, std::size_t iteration)
      : std::runtime_error("non-finite value in " + quantity + " at t=" +
                           std::to_string(iteration)),
        quantity_(std::move(quantity)),
        iteration_(iteration) {}
  const std::string& quantity() const noexcept { return quantity_; }
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::string quantity_;
  std::size_t iteration_;
};

/// Iteration budget exhausted; carries the last iterate.
class ConvergenceFailure : public std::runtime_error {
 public:
  ConvergenceFailure(Eigen::VectorXd last, double grad_norm)
      : std::runtime_error("no convergence, gradient norm " +
                           std::to_string(grad_norm)),
        last_(std::move(last)),
        grad_norm_(grad_norm) {}
  const Eigen::VectorXd& last_iterate() const noexcept { return last_; }
  double gradient_norm() const noexcept { return grad_norm_; }

 private:
  Eigen::VectorXd last_;
  double grad_norm_;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what
                                    : (field.empty() ? what : field + ": " + what)),
        field_(std::move(field)),
        line_(line) {}
  const std::string& field() const noexcept { return field_; }
  int line() const noexcept { return line_; }

 private:
  std::string field_;
  int line_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data; `row` is 1-based, 0 when not row-specific.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t row, const std::string& what)
      : std::runtime_error("row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

}  // namespace cnext
