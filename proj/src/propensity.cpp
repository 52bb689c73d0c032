#include "drst/propensity.hpp"

#include <cmath>

namespace drst {

Matrix design_matrix(const Eigen::Ref<const Matrix>& x, bool intercept) {
  if (!intercept) return x;
  Matrix d(x.rows(), x.cols() + 1);
  d.col(0).setOnes();
  d.rightCols(x.cols()) = x;
  return d;
}

namespace {

void check_dim(const PropensityModel& model, Index p) {
  if (model.covariate_dim() != p) {
    throw std::invalid_argument("propensity: covariate dimension does not match theta");
  }
  if (!model.theta.allFinite()) throw std::invalid_argument("propensity: non-finite theta");
}

double linear_index(const PropensityModel& model, const Eigen::Ref<const Vector>& x) {
  if (model.intercept) return model.theta(0) + model.theta.tail(x.size()).dot(x);
  return model.theta.dot(x);
}

}  // namespace

double score(const PropensityModel& model, const Eigen::Ref<const Vector>& x) {
  check_dim(model, x.size());
  return clip_propensity(logistic(linear_index(model, x)));
}

Vector score_all(const PropensityModel& model, const Eigen::Ref<const Matrix>& x) {
  check_dim(model, x.cols());
  Vector eta = model.intercept
                   ? Vector((x * model.theta.tail(x.cols())).array() + model.theta(0))
                   : Vector(x * model.theta);
  return eta.unaryExpr([](double z) { return clip_propensity(logistic(z)); });
}

Vector cbps_moment(const PropensityModel& model, const Eigen::Ref<const Vector>& x, int t) {
  if (t != 0 && t != 1) throw std::invalid_argument("cbps_moment: t must be 0 or 1");
  const double resid = static_cast<double>(t) - score(model, x);
  if (!model.intercept) return resid * x;
  Vector g(x.size() + 1);
  g(0) = resid;
  g.tail(x.size()) = resid * x;
  return g;
}

Matrix cbps_moments(const Eigen::Ref<const Matrix>& design, const Eigen::Ref<const IntVector>& t,
                    const Eigen::Ref<const Vector>& theta) {
  if (design.cols() != theta.size() || design.rows() != t.size()) {
    throw std::invalid_argument("cbps_moments: dimension mismatch");
  }
  const Vector eta = design * theta;
  Vector resid(t.size());
  for (Index i = 0; i < t.size(); ++i) {
    resid(i) = static_cast<double>(t(i)) - clip_propensity(logistic(eta(i)));
  }
  return resid.asDiagonal() * design;
}

PropensityModel fit_logistic(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const IntVector>& t,
                             bool intercept, const LogisticFitOptions& opts) {
  if (x.rows() != t.size() || x.rows() == 0) throw std::invalid_argument("fit_logistic: dimension mismatch");
  const Matrix d = design_matrix(x, intercept);
  const Index n = d.rows();
  const Index q = d.cols();
  Vector ridge = Vector::Constant(q, opts.ridge * static_cast<double>(n));
  if (intercept) ridge(0) = 0.0;
  Vector y = t.cast<double>();
  Vector theta = Vector::Zero(q);
  auto penalized_loglik = [&](const Vector& th) {
    const Vector eta = d * th;
    double ll = 0.0;
    for (Index i = 0; i < n; ++i) {
      // log(1 + exp(eta)) computed stably
      const double sp = eta(i) > 0 ? eta(i) + std::log1p(std::exp(-eta(i))) : std::log1p(std::exp(eta(i)));
      ll += y(i) * eta(i) - sp;
    }
    return ll - 0.5 * th.dot(ridge.asDiagonal() * th);
  };
  double current = penalized_loglik(theta);
  for (int it = 0; it < opts.max_iter; ++it) {
    const Vector eta = d * theta;
    Vector mu(n), w(n);
    for (Index i = 0; i < n; ++i) {
      mu(i) = logistic(eta(i));
      w(i) = std::max(mu(i) * (1.0 - mu(i)), 1e-12);
    }
    const Vector grad = d.transpose() * (y - mu) - ridge.cwiseProduct(theta);
    Matrix h = d.transpose() * w.asDiagonal() * d;
    h.diagonal() += ridge;
    h.diagonal().array() += 1e-12;
    const Vector step = h.ldlt().solve(grad);
    double alpha = 1.0;
    Vector cand = theta + step;
    double next = penalized_loglik(cand);
    while (next < current && alpha > 1e-10) {
      alpha *= 0.5;
      cand = theta + alpha * step;
      next = penalized_loglik(cand);
    }
    if (next < current) break;
    const double change = (cand - theta).lpNorm<Eigen::Infinity>();
    theta = cand;
    current = next;
    if (change < opts.tol * (1.0 + theta.lpNorm<Eigen::Infinity>())) break;
  }
  return PropensityModel{theta, intercept};
}

}  // namespace drst
