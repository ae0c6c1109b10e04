#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace smm {

enum class ErrorKind {
  invalid_argument,
  parse,
  degenerate_data,
  ill_conditioned,
  fit_failure,
  numeric,
  unsupported,
};

/// Base exception for every failure raised by the library. The kind drives
/// CLI exit codes: argument/config/parse problems map to 2, numeric trouble to 3.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(ErrorKind::invalid_argument, what) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, long row)
      : Error(ErrorKind::parse, "row " + std::to_string(row) + ": " + what), row_(row) {}
  long row() const noexcept { return row_; }

 private:
  long row_;
};

class DegenerateData : public Error {
 public:
  explicit DegenerateData(const std::string& what) : Error(ErrorKind::degenerate_data, what) {}
};

class IllConditioned : public Error {
 public:
  IllConditioned(const std::string& what, double cond)
      : Error(ErrorKind::ill_conditioned, what + " (condition estimate " + std::to_string(cond) + ")"),
        cond_(cond) {}
  double condition_estimate() const noexcept { return cond_; }

 private:
  double cond_;
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

/// Optimizer divergence during a fit. Carries the objective trace up to the failure.
class FitError : public Error {
 public:
  FitError(const std::string& what, std::vector<double> trace)
      : Error(ErrorKind::fit_failure, what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  std::vector<double> trace_;
};

class Unsupported : public Error {
 public:
  explicit Unsupported(const std::string& what) : Error(ErrorKind::unsupported, what) {}
};

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument:
    case ErrorKind::parse:
    case ErrorKind::unsupported:
      return 2;
    default:
      return 3;
  }
}

}  // namespace smm
