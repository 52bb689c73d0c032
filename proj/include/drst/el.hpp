#pragma once

#include "drst/dataset.hpp"
#include "drst/propensity.hpp"
#include "drst/scad.hpp"
#include "drst/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace drst::el {

struct InnerOptions {
  // Feasible instances converge quadratically in a few dozen steps; hitting
  // the cap is treated as infeasibility.
  int max_iter = 50;
  // Newton stops once max_j |sum_i p_i g_ij| falls below tol * (1 + max |g|).
  double tol = 1e-14;
};

struct InnerSolution {
  Vector weights;   // p_i, positive, summing to one
  Vector lagrange;  // dual multiplier, p_i = 1 / (n (1 + lagrange' g_i))
  double constraint_residual = 0.0;  // max_j |sum_i p_i g_ij|
  int iterations = 0;
};

/// Maximizes sum_i log p_i subject to sum_i p_i = 1 and sum_i p_i g_i = 0,
/// where g_i are the rows of G.
///
/// Newton on the convex dual -sum_i log*(1 + lambda' g_i), with log* the
/// usual quadratic continuation of log below 1/n. The dual is bounded exactly
/// when zero is inside the convex hull of the rows; otherwise the iterates
/// run off along a separating direction and InfeasibleConstraints is thrown
/// carrying that direction.
InnerSolution solve_inner_weights(const Eigen::Ref<const Matrix>& G, const InnerOptions& opts = {},
                                  const Vector& warm_start = Vector());

struct ElOptions {
  bool intercept = true;
  int max_outer = 100;
  double outer_tol = 1e-6;        // relative infinity-norm step size
  double zero_threshold = 1e-8;   // |theta_j| below this becomes exactly zero
  double line_search_tol = 1e-10;
  InnerOptions inner;
};

struct ElSolution {
  Vector weights;
  Vector lagrange;
  Vector theta;  // includes the intercept at index 0 when `intercept`
  bool intercept = true;
  double lambda = 0.0;
  double objective = 0.0;  // profile objective at theta
  double loglik = 0.0;     // sum_i log p_i at theta
  bool converged = false;
  int iterations = 0;
  double constraint_residual = 0.0;
  std::vector<double> objective_trace;  // accepted outer iterates
  std::string message;

  PropensityModel model() const { return PropensityModel{theta, intercept}; }
  /// Nonzero penalized coefficients plus the intercept.
  int degrees_of_freedom() const;
};

/// Profile objective sum_i log p_i(theta) - n * sum_j P_SCAD(theta_j; lambda),
/// intercept unpenalized. Throws InfeasibleConstraints.
double profile_objective(const Eigen::Ref<const Vector>& theta, const Eigen::Ref<const Matrix>& design,
                         const Eigen::Ref<const IntVector>& t, const ScadPenalty& pen, bool intercept);

/// Penalized empirical likelihood fit of the propensity coefficients under
/// the balancing constraints. Alternates an inner weight solve with an outer
/// Gauss-Newton step on theta, treating the penalty by local quadratic
/// approximation; coefficients that fall below the zero threshold are set to
/// zero and stay there. Starts from a ridge-stabilized logistic fit unless
/// `theta_init` is given.
ElSolution fit_propensity_el(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const IntVector>& t,
                             const ScadPenalty& pen, const ElOptions& opts = {},
                             const std::optional<Vector>& theta_init = std::nullopt);

ElSolution fit_propensity_el(const Dataset& train, const ScadPenalty& pen, const ElOptions& opts = {});

/// -2 * Bernoulli log-likelihood of the fitted propensities + log(n) * df.
///
/// The empirical log-likelihood ratio is not used here: with as many moments
/// as covariates it stays large at every sparse theta once p is a sizable
/// fraction of n, which drives the selection to the least penalized fits.
double propensity_bic(const ElSolution& sol, const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const IntVector>& t);

struct ElSelection {
  ElSolution best;
  std::vector<double> lambdas;
  std::vector<double> bic;  // +inf where the fit failed
};

/// Fits every lambda of the grid (ascending, warm-started) and keeps the one
/// with the smallest BIC among fits that converged.
ElSelection select_propensity_bic(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const IntVector>& t,
                                  std::vector<double> lambda_grid, double a = 3.7,
                                  const ElOptions& opts = {});

}  // namespace drst::el
