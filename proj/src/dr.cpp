#include "drst/dr.hpp"

#include "drst/propensity.hpp"
#include "drst/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace drst::dr {

std::string to_string(Formula f) {
  return f == Formula::Paper ? "paper" : "aipw";
}

Formula formula_from_string(const std::string& s) {
  if (s == "paper") return Formula::Paper;
  if (s == "aipw") return Formula::Aipw;
  throw std::invalid_argument("unknown dr formula '" + s + "'");
}

std::string to_string(Wrong w) {
  switch (w) {
    case Wrong::None: return "none";
    case Wrong::Propensity: return "propensity";
    case Wrong::Outcome: return "outcome";
    case Wrong::Both: return "both";
  }
  return "?";
}

DrEstimate estimate(const Eigen::Ref<const IntVector>& t, const Eigen::Ref<const Vector>& y,
                    const Eigen::Ref<const Vector>& e_hat, const Eigen::Ref<const Vector>& m0_hat,
                    const Eigen::Ref<const Vector>& m1_hat, Formula formula, Components mode) {
  const Index n = t.size();
  if (n == 0) throw std::invalid_argument("dr: empty sample");
  const Vector w = Vector::Constant(n, 1.0 / static_cast<double>(n));
  return estimate_weighted(t, y, w, e_hat, m0_hat, m1_hat, formula, mode);
}

DrEstimate estimate_weighted(const Eigen::Ref<const IntVector>& t, const Eigen::Ref<const Vector>& y,
                             const Eigen::Ref<const Vector>& weights, const Eigen::Ref<const Vector>& e_hat,
                             const Eigen::Ref<const Vector>& m0_hat, const Eigen::Ref<const Vector>& m1_hat,
                             Formula formula, Components mode) {
  const Index n = t.size();
  if (n == 0) throw std::invalid_argument("dr: empty sample");
  if (y.size() != n || weights.size() != n || e_hat.size() != n || m0_hat.size() != n || m1_hat.size() != n) {
    throw std::invalid_argument("dr: input lengths differ");
  }
  if (!weights.allFinite() || weights.minCoeff() < 0.0 || std::abs(weights.sum() - 1.0) > 1e-8) {
    throw std::invalid_argument("dr: weights must be non-negative and sum to one");
  }
  if (!y.allFinite() || !m0_hat.allFinite() || !m1_hat.allFinite()) {
    throw std::invalid_argument("dr: non-finite outcome or prediction");
  }
  for (Index i = 0; i < n; ++i) {
    if (!(e_hat(i) > 0.0 && e_hat(i) < 1.0)) {
      throw std::logic_error("dr: propensity outside (0, 1) reached the estimator");
    }
    if (t(i) != 0 && t(i) != 1) throw std::invalid_argument("dr: treatment must be 0/1");
  }

  DrEstimate est;
  est.formula = formula;
  est.mode = mode;
  est.influence.resize(n);
  est.weights = weights;
  for (Index i = 0; i < n; ++i) {
    const double r1 = formula == Formula::Aipw ? y(i) - m1_hat(i) : y(i);
    const double r0 = formula == Formula::Aipw ? y(i) - m0_hat(i) : y(i);
    const double ipw = t(i) == 1 ? r1 / e_hat(i) : -r0 / (1.0 - e_hat(i));
    const double reg = m1_hat(i) - m0_hat(i);
    est.ipw_part += weights(i) * ipw;
    est.reg_part += weights(i) * reg;
    est.influence(i) = ipw + reg;
  }
  est.tau_hat = weights.dot(est.influence);
  est.se = standard_error(est.influence, weights);
  est.ci_low = est.tau_hat - kZ975 * est.se;
  est.ci_high = est.tau_hat + kZ975 * est.se;
  return est;
}

double standard_error(const Eigen::Ref<const Vector>& influence, const Eigen::Ref<const Vector>& weights) {
  if (influence.size() < 2) throw std::invalid_argument("standard_error: need at least two values");
  if (weights.size() != influence.size()) throw std::invalid_argument("standard_error: length mismatch");
  const double mean = weights.dot(influence);
  const double spread = (weights.array() * (influence.array() - mean).square()).sum();
  const double n_eff = 1.0 / weights.squaredNorm();
  if (!(n_eff > 1.0 + 1e-12)) return std::numeric_limits<double>::infinity();
  const double var = spread * n_eff / (n_eff - 1.0);
  return std::sqrt(var / n_eff);
}

double bootstrap_se(const Eigen::Ref<const Vector>& influence, const Eigen::Ref<const Vector>& weights,
                    int resamples, std::uint64_t seed) {
  const Index n = influence.size();
  if (n < 2 || weights.size() != n) throw std::invalid_argument("bootstrap_se: bad input");
  if (resamples < 2) throw std::invalid_argument("bootstrap_se: need at least two resamples");
  Rng rng(seed);
  std::uniform_int_distribution<Index> pick(0, n - 1);
  Vector stats(resamples);
  for (int b = 0; b < resamples; ++b) {
    double num = 0.0;
    double den = 0.0;
    for (Index k = 0; k < n; ++k) {
      const Index i = pick(rng);
      num += weights(i) * influence(i);
      den += weights(i);
    }
    stats(b) = den > 0.0 ? num / den : 0.0;
  }
  const double mean = stats.mean();
  return std::sqrt((stats.array() - mean).square().sum() / (resamples - 1));
}

void use_bootstrap_interval(DrEstimate& est, int resamples, std::uint64_t seed) {
  est.se = bootstrap_se(est.influence, est.weights, resamples, seed);
  est.ci_low = est.tau_hat - kZ975 * est.se;
  est.ci_high = est.tau_hat + kZ975 * est.se;
}

DrCheckReport double_robustness_check(const synth::DgpConfig& cfg, Wrong wrong, int replications) {
  if (replications < 1) throw std::invalid_argument("double_robustness_check: replications must be >= 1");
  DrCheckReport rep;
  rep.wrong = wrong;
  rep.replications = replications;
  rep.tau_true = cfg.treatment_effect;
  const bool prop_wrong = wrong == Wrong::Propensity || wrong == Wrong::Both;
  const bool out_wrong = wrong == Wrong::Outcome || wrong == Wrong::Both;
  int covered = 0;
  for (int r = 0; r < replications; ++r) {
    synth::DgpConfig c = cfg;
    c.seed = cfg.seed + static_cast<std::uint64_t>(r);
    const Dataset ds = synth::generate(c);
    const Index n = ds.n();
    const Index H = ds.horizon();
    const Vector y = ds.outcomes.col(H - 1);

    Vector e(n);
    if (prop_wrong) {
      Rng rng(derive_seed(c.seed, 0, "permute"));
      std::vector<Index> perm(static_cast<std::size_t>(n));
      std::iota(perm.begin(), perm.end(), Index{0});
      std::shuffle(perm.begin(), perm.end(), rng);
      Matrix xp(n, ds.p());
      for (Index i = 0; i < n; ++i) xp.row(i) = ds.covariates.row(perm[static_cast<std::size_t>(i)]);
      const PropensityModel model = fit_logistic(xp, ds.treatment, true);
      e = score_all(model, ds.covariates);
    } else {
      e = synth::true_propensity(c, ds.covariates).unaryExpr([](double v) { return clip_propensity(v); });
    }

    Vector m0(n), m1(n);
    if (out_wrong) {
      double s0 = 0.0, s1 = 0.0;
      Index n0 = 0, n1 = 0;
      for (Index i = 0; i < n; ++i) {
        if (ds.treatment(i) == 1) {
          s1 += y(i);
          ++n1;
        } else {
          s0 += y(i);
          ++n0;
        }
      }
      m0.setConstant(n0 > 0 ? s0 / static_cast<double>(n0) : 0.0);
      m1.setConstant(n1 > 0 ? s1 / static_cast<double>(n1) : 0.0);
    } else {
      m0 = synth::true_outcome_mean(c, ds.covariates, 0, H);
      m1 = synth::true_outcome_mean(c, ds.covariates, 1, H);
    }
    const DrEstimate est = estimate(ds.treatment, y, e, m0, m1, Formula::Aipw);
    rep.estimates.push_back(est.tau_hat);
    if (est.covers(rep.tau_true)) ++covered;
  }
  const Eigen::Map<const Vector> est(rep.estimates.data(), static_cast<Index>(rep.estimates.size()));
  rep.bias = est.mean() - rep.tau_true;
  rep.mc_se = replications > 1
                  ? std::sqrt((est.array() - est.mean()).square().sum() / (replications - 1) / replications)
                  : 0.0;
  rep.coverage = static_cast<double>(covered) / replications;
  return rep;
}

}  // namespace drst::dr
