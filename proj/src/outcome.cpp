#include "drst/outcome.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace drst::outcome {

LatentFeatures LatentFeatures::from_states(IntMatrix states, int K) {
  if (K < 1) throw std::invalid_argument("latent features: K must be >= 1");
  if (states.size() > 0 && (states.minCoeff() < 1 || states.maxCoeff() > K)) {
    throw std::invalid_argument("latent features: state outside 1..K");
  }
  LatentFeatures lf;
  lf.mode = LatentMode::Hard;
  lf.K = K;
  lf.hard = std::move(states);
  return lf;
}

LatentFeatures LatentFeatures::from_posteriors(std::vector<Matrix> posteriors) {
  if (posteriors.empty()) throw std::invalid_argument("latent features: no posteriors");
  LatentFeatures lf;
  lf.mode = LatentMode::Soft;
  lf.K = static_cast<int>(posteriors.front().cols());
  for (const auto& m : posteriors) {
    if (m.cols() != lf.K || m.rows() != posteriors.front().rows()) {
      throw std::invalid_argument("latent features: ragged posteriors");
    }
  }
  lf.soft = std::move(posteriors);
  return lf;
}

Vector LatentFeatures::row(Index i, Index t) const {
  switch (mode) {
    case LatentMode::Hard:
      if (i < 0 || i >= hard.rows() || t < 1 || t > hard.cols()) {
        throw std::invalid_argument("latent features: no state for requested (i, t)");
      }
      return one_hot_state(hard(i, t - 1), K);
    case LatentMode::Soft: {
      if (i < 0 || i >= static_cast<Index>(soft.size()) || t < 1 ||
          t > soft[static_cast<std::size_t>(i)].rows()) {
        throw std::invalid_argument("latent features: no posterior for requested (i, t)");
      }
      return soft[static_cast<std::size_t>(i)].row(t - 1).transpose();
    }
    case LatentMode::None:
      break;
  }
  throw std::invalid_argument("latent features: none available");
}

FeatureSpec feature_spec(const Dataset& ds, const LatentFeatures& latent, bool include_time) {
  return FeatureSpec{ds.p(), latent.mode == LatentMode::None ? 0 : latent.K, include_time};
}

Matrix build_features(const Dataset& ds, const LatentFeatures& latent, Index t, bool include_time) {
  if (t < 1 || t > ds.horizon()) throw std::invalid_argument("build_features: time out of range");
  const FeatureSpec spec = feature_spec(ds, latent, include_time);
  Matrix f(ds.n(), spec.width());
  f.leftCols(ds.p()) = ds.covariates;
  for (Index i = 0; i < ds.n(); ++i) {
    if (spec.states > 0) f.row(i).segment(ds.p(), spec.states) = latent.row(i, t).transpose();
    if (include_time) f(i, spec.width() - 1) = static_cast<double>(t);
  }
  return f;
}

Matrix build_pooled_features(const Dataset& ds, const LatentFeatures& latent, bool include_time) {
  const FeatureSpec spec = feature_spec(ds, latent, include_time);
  const Index H = ds.horizon();
  Matrix f(ds.n() * H, spec.width());
  for (Index t = 1; t <= H; ++t) {
    const Matrix ft = build_features(ds, latent, t, include_time);
    for (Index i = 0; i < ds.n(); ++i) f.row(i * H + t - 1) = ft.row(i);
  }
  return f;
}

Vector pooled_outcomes(const Dataset& ds) {
  const Index H = ds.horizon();
  Vector y(ds.n() * H);
  for (Index i = 0; i < ds.n(); ++i) {
    for (Index t = 0; t < H; ++t) y(i * H + t) = ds.outcomes(i, t);
  }
  return y;
}

int ArmFit::degrees_of_freedom() const {
  int df = 1;  // intercept or, without one, a conservative count of 1
  for (Index j = 0; j < coef.size(); ++j) {
    if (coef(j) != 0.0) ++df;
  }
  return df;
}

namespace {

// Exact minimizer of 0.5 z b^2 - u b + P(b).
double scad_univariate(double z, double u, const ScadPenalty& pen) {
  if (pen.lambda == 0.0) return u / z;
  const double lam = pen.lambda;
  const double al = pen.a * lam;
  const double s = u >= 0.0 ? 1.0 : -1.0;
  auto f = [&](double b) { return 0.5 * z * b * b - u * b + scad_value(b, pen); };
  std::array<double, 6> cand{};
  std::size_t nc = 0;
  cand[nc++] = 0.0;
  cand[nc++] = s * lam;
  cand[nc++] = s * al;
  // |b| <= lambda
  {
    const double b = s * std::max(std::abs(u) - lam, 0.0) / z;
    if (std::abs(b) <= lam) cand[nc++] = b;
  }
  // lambda < |b| <= a lambda, convex only when z > 1 / (a - 1)
  {
    const double curv = z - 1.0 / (pen.a - 1.0);
    if (curv > 0.0) {
      const double b = s * std::max(std::abs(u) - al / (pen.a - 1.0), 0.0) / curv;
      if (std::abs(b) > lam && std::abs(b) <= al) cand[nc++] = b;
    }
  }
  // |b| > a lambda
  {
    const double b = u / z;
    if (std::abs(b) > al) cand[nc++] = b;
  }
  double best = cand[0];
  double fbest = f(best);
  for (std::size_t k = 1; k < nc; ++k) {
    const double fk = f(cand[k]);
    if (fk < fbest || (fk == fbest && std::abs(cand[k]) < std::abs(best))) {
      best = cand[k];
      fbest = fk;
    }
  }
  return best;
}

}  // namespace

ArmFit fit_arm(const Eigen::Ref<const Matrix>& features, const Eigen::Ref<const Vector>& y,
               const std::vector<bool>& arm_mask, const ScadPenalty& pen, const ArmFitOptions& opts) {
  pen.validate();
  const Index q = features.cols();
  if (features.rows() != y.size() || static_cast<Index>(arm_mask.size()) != y.size()) {
    throw std::invalid_argument("fit_arm: dimension mismatch");
  }
  if (!opts.penalized.empty() && static_cast<Index>(opts.penalized.size()) != q) {
    throw std::invalid_argument("fit_arm: penalized mask has wrong length");
  }
  std::vector<Index> rows;
  for (Index i = 0; i < y.size(); ++i) {
    if (arm_mask[static_cast<std::size_t>(i)]) rows.push_back(i);
  }
  const auto m = static_cast<Index>(rows.size());
  if (m == 0) throw EstimationError("fit_arm: arm has no observations");
  Matrix X(m, q);
  Vector ys(m);
  for (Index r = 0; r < m; ++r) {
    X.row(r) = features.row(rows[static_cast<std::size_t>(r)]);
    ys(r) = y(rows[static_cast<std::size_t>(r)]);
  }
  if (!X.allFinite() || !ys.allFinite()) throw std::invalid_argument("fit_arm: non-finite input");
  const auto md = static_cast<double>(m);
  const Vector z = X.colwise().squaredNorm().transpose() / md;
  auto is_pen = [&](Index j) { return opts.penalized.empty() || opts.penalized[static_cast<std::size_t>(j)]; };

  ArmFit fit;
  fit.lambda = pen.lambda;
  fit.observations = m;
  fit.coef = Vector::Zero(q);
  if (opts.start.size() == q) {
    fit.coef = opts.start;
    if (opts.intercept) fit.intercept = opts.start_intercept;
  }
  Vector r = ys - X * fit.coef;
  r.array() -= fit.intercept;
  auto objective = [&]() {
    double pen_sum = 0.0;
    for (Index j = 0; j < q; ++j) {
      if (is_pen(j)) pen_sum += scad_value(fit.coef(j), pen);
    }
    return 0.5 * r.squaredNorm() / md + pen_sum;
  };

  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    double max_change = 0.0;
    if (opts.intercept) {
      const double shift = r.mean();
      fit.intercept += shift;
      r.array() -= shift;
      max_change = std::abs(shift);
    }
    for (Index j = 0; j < q; ++j) {
      if (z(j) <= 0.0) continue;
      const double old = fit.coef(j);
      const double u = X.col(j).dot(r) / md + z(j) * old;
      const double nb = is_pen(j) ? scad_univariate(z(j), u, pen) : u / z(j);
      if (nb != old) {
        r.noalias() -= (nb - old) * X.col(j);
        fit.coef(j) = nb;
        max_change = std::max(max_change, std::abs(nb - old) * std::sqrt(z(j)));
      }
    }
    fit.objective_trace.push_back(objective());
    fit.sweeps = sweep + 1;
    if (max_change <= opts.tol) {
      fit.converged = true;
      break;
    }
  }
  fit.rss = r.squaredNorm();

  std::vector<Index> active;
  for (Index j = 0; j < q; ++j) {
    if (fit.coef(j) != 0.0) active.push_back(j);
  }
  const Index cols = static_cast<Index>(active.size()) + (opts.intercept ? 1 : 0);
  if (cols >= m) {
    throw EstimationError("fit_arm: no more observations than active coefficients");
  }
  if (cols > 0) {
    Matrix A(m, cols);
    Index c = 0;
    if (opts.intercept) A.col(c++).setOnes();
    for (Index j : active) A.col(c++) = X.col(j);
    Eigen::ColPivHouseholderQR<Matrix> qr(A);
    qr.setThreshold(1e-10);
    fit.rank_deficient = qr.rank() < cols;
  }
  return fit;
}

double arm_bic(const ArmFit& fit) {
  const auto m = static_cast<double>(fit.observations);
  return m * std::log(std::max(fit.rss / m, 1e-300)) + std::log(m) * fit.degrees_of_freedom();
}

ArmFit fit_arm_bic(const Eigen::Ref<const Matrix>& features, const Eigen::Ref<const Vector>& y,
                   const std::vector<bool>& arm_mask, std::vector<double> lambda_grid, double a,
                   const ArmFitOptions& opts) {
  if (lambda_grid.empty()) throw std::invalid_argument("fit_arm_bic: empty lambda grid");
  std::sort(lambda_grid.begin(), lambda_grid.end(), std::greater<>());
  ArmFit best;
  double best_bic = std::numeric_limits<double>::infinity();
  bool have = false;
  ArmFitOptions warm = opts;
  for (double lam : lambda_grid) {
    ArmFit f;
    try {
      f = fit_arm(features, y, arm_mask, ScadPenalty{lam, a}, warm);
    } catch (const EstimationError&) {
      continue;
    }
    warm.start = f.coef;
    warm.start_intercept = f.intercept;
    const double bic = arm_bic(f);
    if (!have || bic < best_bic) {
      best = std::move(f);
      best_bic = bic;
      have = true;
    }
  }
  if (!have) throw EstimationError("fit_arm_bic: no lambda produced a valid fit");
  return best;
}

Vector predict(const ArmFit& fit, const Eigen::Ref<const Matrix>& features) {
  if (features.cols() != fit.coef.size()) throw std::invalid_argument("predict: feature width mismatch");
  return (features * fit.coef).array() + fit.intercept;
}

Vector predict(const OutcomeFit& fit, const Eigen::Ref<const Matrix>& features, int arm) {
  if (features.cols() != fit.spec.width()) throw std::invalid_argument("predict: feature width mismatch");
  if (arm != 0 && arm != 1) throw std::invalid_argument("predict: arm must be 0 or 1");
  return predict(arm == 0 ? fit.arm0 : fit.arm1, features);
}

}  // namespace drst::outcome
