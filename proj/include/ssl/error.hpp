#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ssl {

enum class ErrorKind { validation, solver, io };

// code() is the machine-readable name printed by the CLI.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, std::string detail)
      : std::runtime_error(code + ": " + detail),
        kind_(kind),
        code_(std::move(code)),
        detail_(std::move(detail)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string code_;
  std::string detail_;
};

class ValidationError : public Error {
 public:
  ValidationError(std::string code, std::string detail)
      : Error(ErrorKind::validation, std::move(code), std::move(detail)) {}
};

class StencilError : public ValidationError {
 public:
  explicit StencilError(std::string detail) : ValidationError("stencil", std::move(detail)) {}
};

class GridMismatch : public ValidationError {
 public:
  explicit GridMismatch(std::string detail)
      : ValidationError("grid_mismatch", std::move(detail)) {}
};

class MetricError : public ValidationError {
 public:
  MetricError(std::string detail, double h_bound = 0.0)
      : ValidationError("metric", std::move(detail)), h_bound_(h_bound) {}
  // largest h for which the metric stays positive definite, 0 if unknown
  double h_bound() const noexcept { return h_bound_; }

 private:
  double h_bound_;
};

class SolverError : public Error {
 public:
  SolverError(std::string code, std::string detail, std::vector<double> history = {})
      : Error(ErrorKind::solver, std::move(code), std::move(detail)),
        history_(std::move(history)) {}
  const std::vector<double>& history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

class IoError : public Error {
 public:
  explicit IoError(std::string detail) : Error(ErrorKind::io, "io", std::move(detail)) {}
};

inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::validation: return 3;
    case ErrorKind::solver: return 4;
    case ErrorKind::io: return 5;
  }
  return 1;
}

}  // namespace ssl
