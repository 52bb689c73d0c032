#pragma once

#include "drst/dataset.hpp"
#include "drst/scad.hpp"
#include "drst/types.hpp"

#include <span>
#include <vector>

namespace drst::outcome {

enum class LatentMode { None, Hard, Soft };

/// Latent-state information attached to a dataset, row-aligned with it.
/// Hard mode carries 1-based state paths (n x horizon); soft mode carries one
/// horizon x K posterior matrix per individual.
struct LatentFeatures {
  LatentMode mode = LatentMode::None;
  int K = 0;
  IntMatrix hard;
  std::vector<Matrix> soft;

  static LatentFeatures none() { return {}; }
  static LatentFeatures from_states(IntMatrix states, int K);
  static LatentFeatures from_posteriors(std::vector<Matrix> posteriors);

  /// State block for individual i at 1-based time t.
  Vector row(Index i, Index t) const;
};

struct FeatureSpec {
  Index covariates = 0;
  int states = 0;  // 0 when no latent block
  bool time = true;

  Index width() const { return covariates + states + (time ? 1 : 0); }
};

FeatureSpec feature_spec(const Dataset& ds, const LatentFeatures& latent, bool include_time = true);

/// Rows [X_i | state block at t | t] for every individual, t 1-based.
Matrix build_features(const Dataset& ds, const LatentFeatures& latent, Index t, bool include_time = true);

/// Features for every (individual, time) pair, individual-major: row
/// i * horizon + (t - 1).
Matrix build_pooled_features(const Dataset& ds, const LatentFeatures& latent, bool include_time = true);

/// Outcomes stacked in the same order as build_pooled_features.
Vector pooled_outcomes(const Dataset& ds);

struct ArmFitOptions {
  bool intercept = true;
  std::vector<bool> penalized;  // per feature column; empty = all penalized
  int max_sweeps = 20000;
  double tol = 1e-12;  // max |delta beta_j| * rms(x_j)
  Vector start;        // warm start; empty = zeros
  double start_intercept = 0.0;
};

struct ArmFit {
  double intercept = 0.0;
  Vector coef;
  double lambda = 0.0;
  int sweeps = 0;
  bool converged = false;
  bool rank_deficient = false;
  Index observations = 0;
  double rss = 0.0;
  std::vector<double> objective_trace;  // after each sweep

  int degrees_of_freedom() const;
};

/// Minimizes 0.5 * mean residual^2 + sum over penalized k of P_SCAD(beta_k)
/// over the rows with arm_mask set, by cyclic coordinate descent with exact
/// univariate SCAD minimization. Intercept and unpenalized columns are
/// updated by plain least squares.
ArmFit fit_arm(const Eigen::Ref<const Matrix>& features, const Eigen::Ref<const Vector>& y,
               const std::vector<bool>& arm_mask, const ScadPenalty& pen, const ArmFitOptions& opts = {});

/// n log(RSS / n) + log(n) * df.
double arm_bic(const ArmFit& fit);

/// Best-BIC fit over a lambda grid, warm-started from large to small lambda.
ArmFit fit_arm_bic(const Eigen::Ref<const Matrix>& features, const Eigen::Ref<const Vector>& y,
                   const std::vector<bool>& arm_mask, std::vector<double> lambda_grid, double a = 3.7,
                   const ArmFitOptions& opts = {});

struct OutcomeFit {
  ArmFit arm0;
  ArmFit arm1;
  FeatureSpec spec;
  double lambda2 = 0.0;  // lambda of the treated arm; each arm carries its own
};

Vector predict(const ArmFit& fit, const Eigen::Ref<const Matrix>& features);
Vector predict(const OutcomeFit& fit, const Eigen::Ref<const Matrix>& features, int arm);

}  // namespace drst::outcome
