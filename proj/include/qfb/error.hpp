#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace qfb {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Matrix exponential scaling/squaring or Taylor series failed to converge.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// A physical invariant (trace, Hermiticity, positivity, norm) was broken
// beyond its tolerance. Usually means dt is too large.
class InvariantBreach : public Error {
 public:
  using Error::Error;
};

// No null vector of the Liouvillian below tolerance.
class NoSteadyState : public Error {
 public:
  using Error::Error;
};

// Null space of the Liouvillian has dimension > 1.
class DegenerateSteadyState : public Error {
 public:
  DegenerateSteadyState(const std::string& what, int null_dimension)
      : Error(what), null_dimension_(null_dimension) {}
  int null_dimension() const noexcept { return null_dimension_; }

 private:
  int null_dimension_;
};

// Invalid model or configuration. Carries every problem found, not just the
// first.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : Error(join(problems)), problems_(std::move(problems)) {}
  explicit ConfigError(const std::string& problem)
      : ConfigError(std::vector<std::string>{problem}) {}

  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) {
      if (!out.empty()) out += "; ";
      out += s;
    }
    return out;
  }

  std::vector<std::string> problems_;
};

}  // namespace qfb
