#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace halp {

/// Index of a variable in a model's combined layout: state variables first
/// (in declaration order), then action variables.
using VarId = int;

/// A full assignment to every state and action variable, indexed by VarId.
/// Discrete variables hold exact small integers stored as doubles.
using Point = std::vector<double>;

/// Raised when an operation is called with arguments that violate its
/// contract (wrong dimensions, wrong variable kinds, unbound model, ...).
using MisuseError = std::invalid_argument;

/// Raised when a resource cap is exceeded (state space too large, iteration
/// budget exhausted where no partial result can be returned).
struct BudgetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when an input file cannot be parsed or has the wrong shape.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when a parsed model/basis fails validation.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& what, std::vector<std::string> violations = {})
      : std::runtime_error(what), violations(std::move(violations)) {}
  std::vector<std::string> violations;
};

inline int read_int(double v, const char* what) {
  double r = v < 0 ? v - 0.5 : v + 0.5;
  auto i = static_cast<long long>(r);
  if (static_cast<double>(i) != v)
    throw MisuseError(std::string(what) + ": expected an integral value");
  return static_cast<int>(i);
}

}  // namespace halp
