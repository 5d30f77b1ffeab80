#pragma once

#include <stdexcept>
#include <string>

namespace blora {

/// A function argument is outside the mathematical domain of the operation.
class DomainError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// A scenario violates one of its invariants (M bound, monotonicity, ...).
class InvalidScenario : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// The scenario is well formed but a transmission can never succeed.
class InfeasibleScenario : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// The first receive window ends after the second one would start.
class NegativeIdle : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Even the largest capacitance searched cannot complete the cycle.
class NoFeasibleCapacitance : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class NonConvergence : public std::runtime_error {
public:
  NonConvergence(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}

  [[nodiscard]] double residual() const noexcept { return residual_; }

private:
  double residual_;
};

/// Configuration text could not be parsed or names an unknown key.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& what, int line)
      : std::runtime_error(what), line_(line) {}

  /// 1-based line number, or 0 when unknown.
  [[nodiscard]] int line() const noexcept { return line_; }

private:
  int line_;
};

} // namespace blora
