#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace cvarnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Broad failure category. The CLI maps each category to its own exit code.
enum class ErrorKind {
  config,     // missing or malformed configuration
  data,       // alignment, coverage, I/O and schema problems
  domain,     // value outside an operation's domain (non-positive price, ...)
  numerical,  // singular fits, divergence, non-stationarity
  infeasible  // constraint sets with no solution
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace cvarnet
