#pragma once

#include <stdexcept>
#include <string>

namespace mchmm {

/// Base class for all library errors. Each carries the process exit code the
/// CLI maps it to.
class Error : public std::runtime_error {
 public:
  Error(const std::string& what, int exit_code)
      : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, 2) {}
};

/// Out-of-range state, symbol or shape mismatch.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(what, 2) {}
};

/// Requested operation is not available for this model size or sampler
/// (joint-state cap exceeded, iFFBS asked for a likelihood, ...).
class CapabilityError : public Error {
 public:
  explicit CapabilityError(const std::string& what) : Error(what, 3) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(what, 4) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what, 5) {}
};

}  // namespace mchmm
