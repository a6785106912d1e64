#pragma once

#include <stdexcept>
#include <string>

namespace qkdsync {

/// Invalid parameters or configuration. The CLI maps this to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure could not satisfy its contract (e.g. fold span too
/// small, threshold unreachable).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The synchronization loop lost or never acquired lock. Exit code 3.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Histogram too flat (or empty) for a trustworthy circular mean.
class FlatHistogramError : public ConvergenceError {
 public:
  using ConvergenceError::ConvergenceError;
};

/// Pearson correlation peak below the lock threshold.
class NoLockError : public ConvergenceError {
 public:
  using ConvergenceError::ConvergenceError;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ConfigError(message);
}

}  // namespace detail
}  // namespace qkdsync
