#include "drst/el.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace drst::el {

namespace {

struct LogStar {
  double eps;
  double value(double z) const {
    if (z >= eps) return std::log(z);
    const double r = z / eps;
    return std::log(eps) - 1.5 + 2.0 * r - 0.5 * r * r;
  }
  double d1(double z) const { return z >= eps ? 1.0 / z : (2.0 - z / eps) / eps; }
  double d2(double z) const { return z >= eps ? -1.0 / (z * z) : -1.0 / (eps * eps); }
};

}  // namespace

InnerSolution solve_inner_weights(const Eigen::Ref<const Matrix>& G, const InnerOptions& opts,
                                  const Vector& warm_start) {
  const Index n = G.rows();
  const Index q = G.cols();
  if (n < 1) throw std::invalid_argument("solve_inner_weights: empty moment matrix");
  if (!G.allFinite()) throw std::invalid_argument("solve_inner_weights: non-finite moments");
  const LogStar ls{1.0 / static_cast<double>(n)};
  const double gscale = 1.0 + G.cwiseAbs().maxCoeff();

  Vector lambda = warm_start.size() == q ? warm_start : Vector::Zero(q);
  Vector z = Vector::Ones(n) + G * lambda;
  auto dual = [&](const Vector& zz) {
    double f = 0.0;
    for (Index i = 0; i < n; ++i) f -= ls.value(zz(i));
    return f;
  };
  double f = dual(z);

  InnerSolution sol;
  bool converged = false;
  for (int it = 0; it < opts.max_iter; ++it) {
    Vector d1(n), h(n);
    for (Index i = 0; i < n; ++i) {
      d1(i) = ls.d1(z(i));
      h(i) = -ls.d2(z(i));
    }
    const Vector grad = -(G.transpose() * d1);
    sol.iterations = it;
    if (grad.lpNorm<Eigen::Infinity>() / static_cast<double>(n) <= opts.tol * gscale) {
      converged = true;
      break;
    }
    // Only the lower triangle is formed; LDLT reads nothing else.
    const Matrix gs = h.cwiseSqrt().asDiagonal() * G;
    Matrix hess = Matrix::Zero(q, q);
    hess.selfadjointView<Eigen::Lower>().rankUpdate(gs.transpose());
    const double ridge = 1e-14 * (hess.trace() / static_cast<double>(std::max<Index>(q, 1)) + 1e-300);
    hess.diagonal().array() += ridge;
    const Vector step = -hess.ldlt().solve(grad);
    if (!step.allFinite()) break;
    // Backtracking on the convex dual.
    double alpha = 1.0;
    Vector cand_lambda, cand_z;
    double cand_f = std::numeric_limits<double>::infinity();
    const double slope = grad.dot(step);
    if (-slope <= 1e-15 * (1.0 + std::abs(f))) {
      // The predicted decrease is below the rounding of f, so f can no longer
      // rank steps. Take full steps while they shrink the gradient; an
      // ill-conditioned Hessian can stall short of tol.
      cand_lambda = lambda + step;
      cand_z = Vector::Ones(n) + G * cand_lambda;
      Vector cand_d1(n);
      for (Index i = 0; i < n; ++i) cand_d1(i) = ls.d1(cand_z(i));
      if ((G.transpose() * cand_d1).lpNorm<Eigen::Infinity>() < grad.lpNorm<Eigen::Infinity>()) {
        lambda = cand_lambda;
        z = cand_z;
        f = dual(z);
        continue;
      }
      sol.iterations = it + 1;
      converged = grad.lpNorm<Eigen::Infinity>() / static_cast<double>(n) <= 1e-10 * gscale;
      break;
    }
    bool armijo = false;
    for (int k = 0; k < 60 && !armijo; ++k) {
      cand_lambda = lambda + alpha * step;
      cand_z = Vector::Ones(n) + G * cand_lambda;
      cand_f = dual(cand_z);
      armijo = cand_f <= f + 1e-4 * alpha * slope;
      if (!armijo) alpha *= 0.5;
    }
    if (!armijo) {
      // Rounding in f defeats the sufficient-decrease test.
      sol.iterations = it + 1;
      converged = grad.lpNorm<Eigen::Infinity>() / static_cast<double>(n) <= 1e-10 * gscale;
      break;
    }
    lambda = cand_lambda;
    z = cand_z;
    f = cand_f;
    if (lambda.norm() * gscale > 1e12) break;
  }

  const double eps = 1.0 / static_cast<double>(n);
  if (!converged || z.minCoeff() < eps * (1.0 - 1e-9)) {
    const double nrm = lambda.norm();
    Vector dir = nrm > 0.0 ? Vector(lambda / nrm) : Vector::Zero(q);
    throw InfeasibleConstraints("solve_inner_weights: zero is outside the convex hull of the moments",
                                std::move(dir));
  }
  sol.weights = z.cwiseInverse() / static_cast<double>(n);
  sol.weights /= sol.weights.sum();
  sol.lagrange = lambda;
  sol.constraint_residual = (G.transpose() * sol.weights).lpNorm<Eigen::Infinity>();
  return sol;
}

int ElSolution::degrees_of_freedom() const {
  int df = 0;
  for (Index j = 0; j < theta.size(); ++j) {
    if (intercept && j == 0) {
      ++df;
    } else if (theta(j) != 0.0) {
      ++df;
    }
  }
  return df;
}

namespace {

struct Evaluation {
  bool feasible = false;
  double objective = -std::numeric_limits<double>::infinity();
  double loglik = 0.0;
  Vector e;
  Matrix G;
  InnerSolution inner;
};

double penalty_sum(const Vector& theta, const ScadPenalty& pen, bool intercept) {
  double s = 0.0;
  for (Index j = intercept ? 1 : 0; j < theta.size(); ++j) s += scad_value(theta(j), pen);
  return s;
}

Evaluation evaluate(const Vector& theta, const Matrix& design, const IntVector& t, const ScadPenalty& pen,
                    bool intercept, const InnerOptions& inner_opts, const Vector& warm) {
  Evaluation ev;
  const Index n = design.rows();
  const Vector eta = design * theta;
  ev.e.resize(n);
  Vector resid(n);
  for (Index i = 0; i < n; ++i) {
    ev.e(i) = clip_propensity(logistic(eta(i)));
    resid(i) = static_cast<double>(t(i)) - ev.e(i);
  }
  ev.G = resid.asDiagonal() * design;
  try {
    ev.inner = solve_inner_weights(ev.G, inner_opts, warm);
  } catch (const InfeasibleConstraints&) {
    return ev;
  }
  ev.feasible = true;
  ev.loglik = ev.inner.weights.array().log().sum();
  ev.objective = ev.loglik - static_cast<double>(n) * penalty_sum(theta, pen, intercept);
  return ev;
}

}  // namespace

double profile_objective(const Eigen::Ref<const Vector>& theta, const Eigen::Ref<const Matrix>& design,
                         const Eigen::Ref<const IntVector>& t, const ScadPenalty& pen, bool intercept) {
  pen.validate();
  if (design.cols() != theta.size() || design.rows() != t.size()) {
    throw std::invalid_argument("profile_objective: dimension mismatch");
  }
  const Matrix G = cbps_moments(design, t, theta);
  const auto inner = solve_inner_weights(G);
  const auto n = static_cast<double>(design.rows());
  return inner.weights.array().log().sum() - n * penalty_sum(theta, pen, intercept);
}

ElSolution fit_propensity_el(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const IntVector>& t,
                             const ScadPenalty& pen, const ElOptions& opts,
                             const std::optional<Vector>& theta_init) {
  pen.validate();
  if (x.rows() != t.size()) throw std::invalid_argument("fit_propensity_el: dimension mismatch");
  if (x.rows() < 2) throw std::invalid_argument("fit_propensity_el: need at least two units");
  const Index treated = t.sum();
  if (treated == 0 || treated == t.size()) {
    throw std::invalid_argument("fit_propensity_el: both treatment arms must be present");
  }
  const Matrix design = design_matrix(x, opts.intercept);
  const IntVector tt = t;
  const Index n = design.rows();
  const Index q = design.cols();
  const auto nd = static_cast<double>(n);
  const Index first_pen = opts.intercept ? 1 : 0;

  Vector theta = theta_init ? *theta_init : fit_logistic(x, t, opts.intercept).theta;
  if (theta.size() != q) throw std::invalid_argument("fit_propensity_el: theta_init has wrong length");
  for (Index j = first_pen; j < q; ++j) {
    if (std::abs(theta(j)) < opts.zero_threshold) theta(j) = 0.0;
  }

  ElSolution sol;
  sol.intercept = opts.intercept;
  sol.lambda = pen.lambda;

  Evaluation cur = evaluate(theta, design, tt, pen, opts.intercept, opts.inner, Vector());
  if (!cur.feasible) {
    // Retreat toward the intercept-only model, where the moments are centered.
    Vector fallback = Vector::Zero(q);
    if (opts.intercept) {
      const double rate = static_cast<double>(treated) / nd;
      fallback(0) = std::log(rate / (1.0 - rate));
    }
    for (int k = 1; k <= 20 && !cur.feasible; ++k) {
      const double w = std::pow(0.5, k);
      Vector cand = w * theta + (1.0 - w) * fallback;
      cur = evaluate(cand, design, tt, pen, opts.intercept, opts.inner, Vector());
      if (cur.feasible) theta = cand;
    }
    if (!cur.feasible) {
      sol.theta = theta;
      sol.weights = Vector::Constant(n, 1.0 / nd);
      sol.lagrange = Vector::Zero(q);
      sol.objective = -std::numeric_limits<double>::infinity();
      sol.constraint_residual = std::numeric_limits<double>::infinity();
      sol.message = "no feasible starting point for the balancing constraints";
      return sol;
    }
  }
  sol.objective_trace.push_back(cur.objective);

  bool converged = false;
  int it = 0;
  double last_alpha = 1.0;
  for (; it < opts.max_outer; ++it) {
    const Vector& lam = cur.inner.lagrange;
    const Vector z = Vector::Ones(n) + cur.G * lam;
    const Vector v = cur.e.array() * (1.0 - cur.e.array());
    // Envelope gradient of sum log p_i.
    const Vector grad = design.transpose() * (v.cwiseQuotient(z).cwiseProduct(design * lam));
    // Gauss-Newton curvature n J' S^-1 J of the quadratic approximation
    // -(n/2) gbar' S^-1 gbar, with J = dgbar/dtheta and S the weighted
    // moment covariance.
    const Matrix J = -(design.transpose() * v.asDiagonal() * design) / nd;
    Matrix S = cur.G.transpose() * cur.inner.weights.asDiagonal() * cur.G;
    S.diagonal().array() += 1e-12 * (S.trace() / static_cast<double>(q) + 1e-300);
    Matrix H = nd * J.transpose() * S.ldlt().solve(J);

    std::vector<Index> active;
    for (Index j = 0; j < q; ++j) {
      if (j < first_pen || theta(j) != 0.0) active.push_back(j);
    }
    const auto m = static_cast<Index>(active.size());
    Matrix Ha(m, m);
    Vector rhs(m), th_a(m);
    for (Index a = 0; a < m; ++a) th_a(a) = theta(active[a]);
    for (Index a = 0; a < m; ++a) {
      for (Index b = 0; b < m; ++b) Ha(a, b) = H(active[a], active[b]);
    }
    rhs = Ha * th_a;
    for (Index a = 0; a < m; ++a) rhs(a) += grad(active[a]);
    for (Index a = 0; a < m; ++a) {
      const Index j = active[a];
      if (j < first_pen) continue;
      Ha(a, a) += nd * scad_deriv(theta(j), pen) / std::abs(theta(j));
    }
    Ha.diagonal().array() += 1e-12 * (Ha.diagonal().cwiseAbs().maxCoeff() + 1e-300);
    const Vector target = Ha.ldlt().solve(rhs);
    Vector dir = Vector::Zero(q);
    for (Index a = 0; a < m; ++a) dir(active[a]) = target(a) - th_a(a);
    if (!dir.allFinite()) {
      sol.message = "non-finite outer step";
      break;
    }

    // LQA shrinks a coefficient whose optimum is zero only geometrically, at
    // rate |score| / (n lambda). Try zeroing the shrinking ones inside the
    // lasso-like region outright; kept only if the objective does not drop.
    {
      Vector snap = theta;
      bool any = false;
      for (Index a = 0; a < m; ++a) {
        const Index j = active[a];
        if (j >= first_pen && std::abs(theta(j)) < pen.lambda && std::abs(target(a)) < std::abs(theta(j))) {
          snap(j) = 0.0;
          any = true;
        }
      }
      if (any) {
        Evaluation trial = evaluate(snap, design, tt, pen, opts.intercept, opts.inner, cur.inner.lagrange);
        if (trial.feasible && trial.objective >= cur.objective - opts.line_search_tol) {
          theta = snap;
          cur = std::move(trial);
          sol.objective_trace.push_back(cur.objective);
          continue;
        }
      }
    }

    bool accepted = false;
    // Start near the last accepted step; full steps are often infeasible and
    // each infeasible trial costs a whole inner solve.
    double alpha = std::min(1.0, 2.0 * last_alpha);
    Evaluation next;
    Vector cand;
    for (int k = 0; k < 40; ++k, alpha *= 0.5) {
      cand = theta + alpha * dir;
      for (Index j = first_pen; j < q; ++j) {
        if (std::abs(cand(j)) < opts.zero_threshold) cand(j) = 0.0;
      }
      next = evaluate(cand, design, tt, pen, opts.intercept, opts.inner, cur.inner.lagrange);
      if (next.feasible && next.objective >= cur.objective - opts.line_search_tol) {
        accepted = true;
        last_alpha = alpha;
        break;
      }
    }
    const double scale = 1.0 + theta.lpNorm<Eigen::Infinity>();
    if (!accepted) {
      converged = dir.lpNorm<Eigen::Infinity>() <= 1e-6 * scale;
      if (!converged) sol.message = "line search failed";
      break;
    }
    const double change = (cand - theta).lpNorm<Eigen::Infinity>();
    theta = cand;
    cur = std::move(next);
    sol.objective_trace.push_back(cur.objective);
    if (change <= opts.outer_tol * scale) {
      converged = true;
      ++it;
      break;
    }
  }
  if (!converged && sol.message.empty()) sol.message = "outer iteration limit reached";

  sol.theta = theta;
  sol.weights = cur.inner.weights;
  sol.lagrange = cur.inner.lagrange;
  sol.objective = cur.objective;
  sol.loglik = cur.loglik;
  sol.constraint_residual = cur.inner.constraint_residual;
  sol.iterations = it;
  sol.converged = converged;
  return sol;
}

ElSolution fit_propensity_el(const Dataset& train, const ScadPenalty& pen, const ElOptions& opts) {
  return fit_propensity_el(train.covariates, train.treatment, pen, opts);
}

double propensity_bic(const ElSolution& sol, const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const IntVector>& t) {
  if (x.rows() != t.size()) throw std::invalid_argument("propensity_bic: dimension mismatch");
  const Vector e = score_all(sol.model(), x);
  double ll = 0.0;
  for (Index i = 0; i < t.size(); ++i) ll += t(i) == 1 ? std::log(e(i)) : std::log1p(-e(i));
  return -2.0 * ll + std::log(static_cast<double>(t.size())) * sol.degrees_of_freedom();
}

ElSelection select_propensity_bic(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const IntVector>& t,
                                  std::vector<double> lambda_grid, double a, const ElOptions& opts) {
  if (lambda_grid.empty()) throw std::invalid_argument("select_propensity_bic: empty lambda grid");
  std::sort(lambda_grid.begin(), lambda_grid.end());
  ElSelection sel;
  sel.lambdas = lambda_grid;
  std::optional<Vector> warm;
  bool have_best = false;
  double best_bic = std::numeric_limits<double>::infinity();
  for (double lam : lambda_grid) {
    ElSolution sol = fit_propensity_el(x, t, ScadPenalty{lam, a}, opts, warm);
    const double bic = sol.converged ? propensity_bic(sol, x, t) : std::numeric_limits<double>::infinity();
    sel.bic.push_back(bic);
    if (sol.converged) warm = sol.theta;
    if (!have_best || bic < best_bic) {
      best_bic = bic;
      sel.best = std::move(sol);
      have_best = true;
    }
  }
  return sel;
}

}  // namespace drst::el
