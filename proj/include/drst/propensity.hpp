#pragma once

#include "drst/scad.hpp"
#include "drst/types.hpp"

#include <algorithm>

namespace drst {

/// Propensities are clamped into [kPropensityClip, 1 - kPropensityClip].
inline constexpr double kPropensityClip = 1e-6;

/// Logistic propensity model. With `intercept` set, theta(0) is an
/// unpenalized intercept and theta(1..p) multiply the covariates.
struct PropensityModel {
  Vector theta;
  bool intercept = false;

  Index covariate_dim() const { return theta.size() - (intercept ? 1 : 0); }
};

template <typename Scalar>
Scalar logistic(Scalar z) {
  using std::exp;
  return z >= Scalar(0) ? Scalar(1) / (Scalar(1) + exp(-z)) : exp(z) / (Scalar(1) + exp(z));
}

inline double clip_propensity(double e) {
  return std::min(std::max(e, kPropensityClip), 1.0 - kPropensityClip);
}

/// [1 | X] when the model has an intercept, X otherwise.
Matrix design_matrix(const Eigen::Ref<const Matrix>& x, bool intercept);

/// Clipped e(x) for one covariate vector.
double score(const PropensityModel& model, const Eigen::Ref<const Vector>& x);

/// Clipped e(x_i) for every row of a covariate matrix.
Vector score_all(const PropensityModel& model, const Eigen::Ref<const Matrix>& x);

/// Balancing moment (t - e(x)) * d(x), d(x) the design row of x.
Vector cbps_moment(const PropensityModel& model, const Eigen::Ref<const Vector>& x, int t);

/// Moment rows for a whole sample, given the design matrix: row i is
/// (t_i - e_i) d_i with e = clipped logistic(design * theta).
Matrix cbps_moments(const Eigen::Ref<const Matrix>& design, const Eigen::Ref<const IntVector>& t,
                    const Eigen::Ref<const Vector>& theta);

struct LogisticFitOptions {
  double ridge = 1e-6;  // times n, slopes only; keeps the fit finite under separation
  int max_iter = 100;
  double tol = 1e-10;
};

/// Ridge-stabilized maximum likelihood logistic regression by Newton/IRLS.
PropensityModel fit_logistic(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const IntVector>& t,
                             bool intercept, const LogisticFitOptions& opts = {});

}  // namespace drst
