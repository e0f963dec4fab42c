#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace stm {

/// Precondition violated by a caller (bad shape, out-of-range parameter).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Too few Monte Carlo samples to form a moment estimate.
class InsufficientSamples : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A discrete operator could not be assembled or factorized.
class AssemblyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fixed-point iteration hit its iteration cap. Carries the update history.
class NonConvergence : public std::runtime_error {
 public:
  NonConvergence(const std::string& what, std::vector<double> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}

  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  std::vector<double> trace_;
};

/// Malformed or inconsistent experiment configuration. `key()` names the
/// offending entry as a dotted path, e.g. "noise.q_eigenvalues".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(key + ": " + what), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace stm
