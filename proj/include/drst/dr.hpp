#pragma once

#include "drst/synth.hpp"
#include "drst/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace drst::dr {

/// "paper": T Y / e - (1 - T) Y / (1 - e) + m1 - m0.
/// "aipw":  T (Y - m1) / e - (1 - T) (Y - m0) / (1 - e) + m1 - m0.
/// Only the second is doubly robust in general.
enum class Formula { Paper, Aipw };

enum class Components { Both, PropensityOnly, OutcomeOnly };

std::string to_string(Formula f);
Formula formula_from_string(const std::string& s);

inline constexpr double kZ975 = 1.959963984540054;

struct DrEstimate {
  double tau_hat = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double ipw_part = 0.0;  // weighted mean of the inverse-probability terms
  double reg_part = 0.0;  // weighted mean of m1 - m0
  Components mode = Components::Both;
  Formula formula = Formula::Aipw;
  Vector influence;  // per-unit terms whose weighted mean is tau_hat
  Vector weights;

  bool covers(double tau) const { return ci_low <= tau && tau <= ci_high; }
};

/// Uniform-weight estimator; identical to estimate_weighted with p_i = 1/n.
DrEstimate estimate(const Eigen::Ref<const IntVector>& t, const Eigen::Ref<const Vector>& y,
                    const Eigen::Ref<const Vector>& e_hat, const Eigen::Ref<const Vector>& m0_hat,
                    const Eigen::Ref<const Vector>& m1_hat, Formula formula = Formula::Aipw,
                    Components mode = Components::Both);

/// tau_hat = sum_i p_i phi_i. Weights must be non-negative and sum to one
/// (tolerance 1e-8); propensities must lie strictly inside (0, 1).
DrEstimate estimate_weighted(const Eigen::Ref<const IntVector>& t, const Eigen::Ref<const Vector>& y,
                             const Eigen::Ref<const Vector>& weights, const Eigen::Ref<const Vector>& e_hat,
                             const Eigen::Ref<const Vector>& m0_hat, const Eigen::Ref<const Vector>& m1_hat,
                             Formula formula = Formula::Aipw, Components mode = Components::Both);

/// Weighted standard deviation of the influence values over sqrt(n_eff), with
/// n_eff = 1 / sum p_i^2 and the n_eff / (n_eff - 1) small-sample factor.
/// Uniform weights give the usual sd / sqrt(n). Infinite when n_eff <= 1.
double standard_error(const Eigen::Ref<const Vector>& influence, const Eigen::Ref<const Vector>& weights);

/// Nonparametric bootstrap of the weighted mean: units are resampled with
/// replacement and their weights renormalized. Returns the standard deviation
/// of the resampled estimates.
double bootstrap_se(const Eigen::Ref<const Vector>& influence, const Eigen::Ref<const Vector>& weights,
                    int resamples, std::uint64_t seed);

/// Replaces the Wald interval of `est` by tau_hat +- z * bootstrap se.
void use_bootstrap_interval(DrEstimate& est, int resamples, std::uint64_t seed);

enum class Wrong { None, Propensity, Outcome, Both };

std::string to_string(Wrong w);

struct DrCheckReport {
  Wrong wrong = Wrong::None;
  int replications = 0;
  double tau_true = 0.0;
  double bias = 0.0;       // mean(tau_hat) - tau
  double mc_se = 0.0;      // Monte Carlo standard error of the bias
  double coverage = 0.0;   // fraction of Wald intervals containing tau
  std::vector<double> estimates;
};

/// Monte Carlo bias of the aipw estimator on the outcome at the last time
/// point. A correct component is the DGP oracle; a wrong propensity is a
/// logistic fit on row-permuted covariates, a wrong outcome model is the
/// per-arm mean. Replication r uses dgp seed `cfg.seed + r`.
DrCheckReport double_robustness_check(const synth::DgpConfig& cfg, Wrong wrong, int replications);

}  // namespace drst::dr
