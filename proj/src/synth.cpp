#include "drst/synth.hpp"

#include "drst/propensity.hpp"

#include <cmath>

namespace drst::synth {

Vector alternating_sparse(Index p, Index nonzero, double magnitude) {
  Vector b = Vector::Zero(p);
  for (Index j = 0; j < std::min(p, nonzero); ++j) b(j) = (j % 2 == 0 ? 1.0 : -1.0) * magnitude;
  return b;
}

DgpConfig default_config() {
  DgpConfig cfg;
  Matrix A(3, 3);
  A << 0.8, 0.1, 0.1,
       0.1, 0.8, 0.1,
       0.1, 0.1, 0.8;
  cfg.hmm = hmm::make_chain(A, Vector::Constant(3, 1.0 / 3.0));
  cfg.gamma = Vector(3);
  cfg.gamma << 1.0, 2.0, 3.0;
  cfg.beta = alternating_sparse(cfg.p, 10);
  return cfg;
}

void DgpConfig::validate() const {
  if (n < 1 || p < 1 || horizon < 1) throw ConfigError("dgp: n, p and horizon must be positive");
  if (K < 1 || hmm.K != K) throw ConfigError("dgp: hmm state count must equal K");
  try {
    hmm.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("dgp: ") + e.what());
  }
  if (gamma.size() != K) throw ConfigError("dgp: gamma must have length K");
  if (beta.size() != p) throw ConfigError("dgp: beta must have length p");
  if (block_size < 1) throw ConfigError("dgp: block_size must be >= 1");
  if (!(within_block_rho > -1.0 && within_block_rho < 1.0)) throw ConfigError("dgp: rho must lie in (-1, 1)");
  if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) throw ConfigError("dgp: noise_sd must be >= 0");
  if (!std::isfinite(treatment_effect) || !gamma.allFinite() || !beta.allFinite()) {
    throw ConfigError("dgp: non-finite coefficient");
  }
  if (treatment_model == TreatmentModel::Nonlinear && p < 3) {
    throw ConfigError("dgp: the nonlinear treatment mechanism needs p >= 3");
  }
  if (treatment_model == TreatmentModel::SparseLogistic &&
      (treatment_theta.size() != p || !treatment_theta.allFinite() || !std::isfinite(treatment_intercept))) {
    throw ConfigError("dgp: treatment_theta must be a finite length-p vector");
  }
}

Matrix gen_covariates(const DgpConfig& cfg, Rng& rng) {
  if (cfg.block_size < 1) throw ConfigError("dgp: block_size must be >= 1");
  Matrix x(cfg.n, cfg.p);
  for (Index i = 0; i < cfg.n; ++i) {
    for (Index j = 0; j < cfg.p; ++j) x(i, j) = standard_normal(rng);
  }
  // Per-block Cholesky factor; the last block may be narrower.
  for (Index start = 0; start < cfg.p; start += cfg.block_size) {
    const Index w = std::min(cfg.block_size, cfg.p - start);
    Matrix sigma = Matrix::Constant(w, w, cfg.within_block_rho);
    sigma.diagonal().setOnes();
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success) {
      throw ConfigError("dgp: covariate block correlation is not positive definite");
    }
    const Matrix L = llt.matrixL();
    x.middleCols(start, w) = x.middleCols(start, w) * L.transpose();
  }
  return x;
}

double nonlinear_index(const Eigen::Ref<const Vector>& x) {
  if (x.size() < 3) throw std::invalid_argument("nonlinear_index: need p >= 3");
  return std::sin(x(0)) + std::log(std::abs(x(1)) + 1.0) + 0.5 * x(2) * x(2);
}

Vector true_propensity(const DgpConfig& cfg, const Eigen::Ref<const Matrix>& x) {
  Vector e(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    const double h = cfg.treatment_model == TreatmentModel::Nonlinear
                         ? nonlinear_index(x.row(i).transpose())
                         : cfg.treatment_intercept + x.row(i).dot(cfg.treatment_theta);
    e(i) = logistic(h);
  }
  return e;
}

namespace {

IntVector bernoulli(const Vector& prob, Rng& rng) {
  IntVector t(prob.size());
  for (Index i = 0; i < prob.size(); ++i) t(i) = uniform01(rng) < prob(i) ? 1 : 0;
  return t;
}

}  // namespace

IntVector assign_treatment(const Eigen::Ref<const Matrix>& x, Rng& rng) {
  if (x.cols() < 3) throw std::invalid_argument("assign_treatment: need p >= 3");
  Vector e(x.rows());
  for (Index i = 0; i < x.rows(); ++i) e(i) = logistic(nonlinear_index(x.row(i).transpose()));
  return bernoulli(e, rng);
}

IntVector assign_treatment(const DgpConfig& cfg, const Eigen::Ref<const Matrix>& x, Rng& rng) {
  if (cfg.treatment_model == TreatmentModel::Nonlinear) return assign_treatment(x, rng);
  return bernoulli(true_propensity(cfg, x), rng);
}

Matrix gen_outcomes(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const IntMatrix>& z,
                    const Eigen::Ref<const IntVector>& t, const DgpConfig& cfg, Rng& rng) {
  if (z.rows() != x.rows() || t.size() != x.rows() || x.cols() != cfg.beta.size()) {
    throw std::invalid_argument("gen_outcomes: dimension mismatch");
  }
  if (z.size() > 0 && (z.minCoeff() < 1 || z.maxCoeff() > cfg.gamma.size())) {
    throw std::invalid_argument("gen_outcomes: latent state outside 1..K");
  }
  const Vector xb = x * cfg.beta;
  Matrix y(x.rows(), z.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index s = 0; s < z.cols(); ++s) {
      y(i, s) = cfg.gamma(z(i, s) - 1) + xb(i) + cfg.treatment_effect * t(i) +
                cfg.noise_sd * standard_normal(rng);
    }
  }
  return y;
}

Dataset generate(const DgpConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  Matrix x = gen_covariates(cfg, rng);
  IntVector t = assign_treatment(cfg, x, rng);
  IntMatrix z = hmm::sample_paths(cfg.hmm, cfg.n, cfg.horizon, rng);
  Matrix y = gen_outcomes(x, z, t, cfg, rng);
  return make_dataset(std::move(x), std::move(t), std::move(y), std::move(z), cfg.K, cfg.treatment_effect);
}

Vector state_marginal(const DgpConfig& cfg, Index t) {
  if (t < 1) throw std::invalid_argument("state_marginal: t must be >= 1");
  Eigen::RowVectorXd pi = cfg.hmm.pi0.transpose();
  for (Index s = 1; s < t; ++s) pi = pi * cfg.hmm.A;
  return pi.transpose();
}

Vector true_outcome_mean(const DgpConfig& cfg, const Eigen::Ref<const Matrix>& x, int arm, Index t) {
  const double state_part = state_marginal(cfg, t).dot(cfg.gamma);
  return (x * cfg.beta).array() + state_part + cfg.treatment_effect * arm;
}

}  // namespace drst::synth
