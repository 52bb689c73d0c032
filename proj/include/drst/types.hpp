#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace drst {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IntVector = Eigen::VectorXi;
using IntMatrix = Eigen::MatrixXi;

/// Raised when a configuration cannot describe a valid model (e.g. a
/// covariance block that is not positive definite).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an estimation routine cannot produce a usable fit.
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when inputs make an inference routine undefined (zero likelihood).
class DegenerateInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The moment constraints admit no positive weights: zero is outside the
/// convex hull of the moment rows. `direction` separates the hull from zero.
class InfeasibleConstraints : public std::runtime_error {
 public:
  InfeasibleConstraints(const std::string& what, Vector direction)
      : std::runtime_error(what), direction_(std::move(direction)) {}
  const Vector& direction() const noexcept { return direction_; }

 private:
  Vector direction_;
};

inline bool all_finite(const Eigen::Ref<const Matrix>& m) {
  return m.allFinite();
}

}  // namespace drst
