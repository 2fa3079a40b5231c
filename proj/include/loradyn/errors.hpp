#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace loradyn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Matrix shapes that cannot be combined, or a dimension request that cannot
/// be satisfied (e.g. more complement columns than the ambient space has).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition on an argument was violated.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// The request is well-formed but outside what the analysis covers
/// (e.g. a signal/noise split for a task whose update is not rank one).
class UnsupportedConfiguration : public Error {
 public:
  using Error::Error;
};

class SvdNotConverged : public Error {
 public:
  explicit SvdNotConverged(std::size_t sweeps)
      : Error("svd: one-sided Jacobi did not converge after " + std::to_string(sweeps) +
              " sweeps"),
        sweeps_(sweeps) {}

  std::size_t sweeps() const { return sweeps_; }

 private:
  std::size_t sweeps_;
};

/// Raised by the integrators when the loss stops being finite or blows up.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t step, double loss)
      : Error("diverged at step " + std::to_string(step) + " (loss " + std::to_string(loss) +
              "); the learning rate is probably too large"),
        step_(step),
        loss_(loss) {}

  std::size_t step() const { return step_; }
  double loss() const { return loss_; }

 private:
  std::size_t step_;
  double loss_;
};

}  // namespace loradyn
