#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

// Error hierarchy. Everything thrown on purpose derives from std::runtime_error
// so callers can catch by category; the CLI maps categories to exit codes
// (config -> 2, degraded ensemble -> 3, numerical -> 4).

namespace entlab {

// Bad user-facing configuration: unknown keys, out-of-range parameters,
// unusable density files. Messages name the offending key or parameter.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A mathematically invalid argument to a library function (not tied to any
// config file), e.g. negative shift, probability outside [0,1].
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

// An algorithm failed to meet its accuracy or convergence contract.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::size_t problem_size = 0,
                 int iterations = 0)
      : std::runtime_error(what),
        problem_size(problem_size),
        iterations(iterations) {}

  std::size_t problem_size;
  int iterations;
};

// The Fermi energy fell within the degeneracy guard of an eigenvalue, so the
// projection is ill-defined for this realization.
class DegenerateFermiLevelError : public NumericalError {
 public:
  DegenerateFermiLevelError(const std::string& what, std::size_t problem_size)
      : NumericalError(what, problem_size) {}
};

// Not enough samples to produce the requested statistic (fits, bootstrap).
class InsufficientDataError : public std::runtime_error {
 public:
  explicit InsufficientDataError(const std::string& what)
      : std::runtime_error(what) {}
};

// More than the tolerated fraction of realizations failed even after retry.
class EnsembleDegradedError : public std::runtime_error {
 public:
  EnsembleDegradedError(const std::string& what, std::int64_t requested,
                        std::int64_t failed)
      : std::runtime_error(what), requested(requested), failed(failed) {}

  std::int64_t requested;
  std::int64_t failed;
};

}  // namespace entlab
