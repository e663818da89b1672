#ifndef LOCKIN_ERROR_HPP
#define LOCKIN_ERROR_HPP

#include <optional>
#include <stdexcept>
#include <string>

namespace lockin {

/// Broad failure classes. The CLI maps these onto exit codes.
enum class ErrorKind {
  invalid_parameter,
  validation,
  convergence,
  numeric,
  io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_parameter: return "invalid_parameter";
    case ErrorKind::validation: return "validation";
    case ErrorKind::convergence: return "convergence";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidParameter : public Error {
 public:
  explicit InvalidParameter(const std::string& what) : Error(ErrorKind::invalid_parameter, what) {}
};

/// Malformed input data. `node` names the offending tree node where one exists.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what, std::optional<long long> node = std::nullopt)
      : Error(ErrorKind::validation, what), node_(node) {}
  std::optional<long long> node() const noexcept { return node_; }

 private:
  std::optional<long long> node_;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_estimate, double residual)
      : Error(ErrorKind::convergence, what), last_estimate_(last_estimate), residual_(residual) {}
  double last_estimate() const noexcept { return last_estimate_; }
  double residual() const noexcept { return residual_; }

 private:
  double last_estimate_;
  double residual_;
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

}  // namespace lockin

#endif  // LOCKIN_ERROR_HPP
