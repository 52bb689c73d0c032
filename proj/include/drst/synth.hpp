#pragma once

#include "drst/dataset.hpp"
#include "drst/hmm.hpp"
#include "drst/rng.hpp"
#include "drst/types.hpp"

#include <cstdint>

namespace drst::synth {

enum class TreatmentModel {
  // P(T=1|X) = logistic(sin X1 + log(|X2| + 1) + 0.5 X3^2)
  Nonlinear,
  // P(T=1|X) = logistic(treatment_intercept + X treatment_theta)
  SparseLogistic,
};

/// Synthetic longitudinal design. Defaults: n = 500, p = 100, horizon 5,
/// 3 latent states with sticky transitions (0.8 on the diagonal) and a
/// uniform start, Gamma = (1, 2, 3), beta = (+1, -1, +1, ...) on the first
/// ten covariates and zero elsewhere, additive treatment effect 1, unit
/// noise, equicorrelated covariate blocks of width 10 with rho = 0.5.
struct DgpConfig {
  Index n = 500;
  Index p = 100;
  Index horizon = 5;
  int K = 3;
  Index block_size = 10;
  double within_block_rho = 0.5;
  hmm::HmmModel hmm;
  Vector gamma;
  Vector beta;
  double treatment_effect = 1.0;
  double noise_sd = 1.0;
  std::uint64_t seed = 1;
  TreatmentModel treatment_model = TreatmentModel::Nonlinear;
  Vector treatment_theta;  // length p, SparseLogistic only
  double treatment_intercept = 0.0;

  void validate() const;
};

DgpConfig default_config();

/// Default sparse coefficients: `nonzero` alternating +-magnitude entries at
/// indices 0..nonzero-1.
Vector alternating_sparse(Index p, Index nonzero, double magnitude = 1.0);

/// Rows i.i.d. N(0, Sigma), Sigma block-diagonal with equicorrelated blocks.
/// Throws ConfigError when a block is not positive definite.
Matrix gen_covariates(const DgpConfig& cfg, Rng& rng);

/// Nonlinear mechanism h(X) = sin X1 + log(|X2| + 1) + 0.5 X3^2.
double nonlinear_index(const Eigen::Ref<const Vector>& x);

/// True P(T=1 | X) for each row under the configured mechanism.
Vector true_propensity(const DgpConfig& cfg, const Eigen::Ref<const Matrix>& x);

/// Bernoulli draws under the nonlinear mechanism. Requires p >= 3.
IntVector assign_treatment(const Eigen::Ref<const Matrix>& x, Rng& rng);

/// Bernoulli draws under the configured mechanism.
IntVector assign_treatment(const DgpConfig& cfg, const Eigen::Ref<const Matrix>& x, Rng& rng);

/// Y_i(t) = Gamma[Z_it] + X_i beta + effect T_i + eps, eps ~ N(0, noise_sd^2).
Matrix gen_outcomes(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const IntMatrix>& z,
                    const Eigen::Ref<const IntVector>& t, const DgpConfig& cfg, Rng& rng);

/// Full dataset, deterministic given cfg.seed; true_ate = treatment_effect.
Dataset generate(const DgpConfig& cfg);

/// Marginal latent-state distribution at 1-based time t.
Vector state_marginal(const DgpConfig& cfg, Index t);

/// E[Y(t) | X, T = arm] under the DGP, latent state integrated out.
Vector true_outcome_mean(const DgpConfig& cfg, const Eigen::Ref<const Matrix>& x, int arm, Index t);

}  // namespace drst::synth
