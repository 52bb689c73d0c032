#include "drst/outcome.hpp"
#include "drst/synth.hpp"

#include "generators.hpp"

#include <doctest.h>

#include <cmath>

using namespace drst;
using namespace drst::outcome;

namespace {

std::vector<bool> all_rows(Index n) { return std::vector<bool>(static_cast<std::size_t>(n), true); }

Dataset tiny_panel() {
  auto cfg = synth::default_config();
  cfg.n = 6;
  cfg.p = 3;
  cfg.horizon = 4;
  cfg.beta = synth::alternating_sparse(3, 2);
  return synth::generate(cfg);
}

// KKT conditions of 0.5 mean r^2 + sum P(beta_j): a zero coefficient has
// |x_j' r / m| <= lambda, a nonzero one has x_j' r / m = sign * P'(|beta_j|).
void check_kkt(const ArmFit& fit, const Matrix& X, const Vector& y, const ScadPenalty& pen, double slack) {
  const Vector r = (y - X * fit.coef).array() - fit.intercept;
  const double m = static_cast<double>(X.rows());
  for (Index j = 0; j < X.cols(); ++j) {
    const double score = X.col(j).dot(r) / m;
    if (fit.coef(j) == 0.0) {
      CHECK(std::abs(score) <= pen.lambda + slack);
    } else {
      const double sign = fit.coef(j) > 0 ? 1.0 : -1.0;
      CHECK(std::abs(score - sign * scad_deriv(fit.coef(j), pen)) <= slack);
    }
  }
  CHECK(std::abs(r.mean()) <= slack);
}

}  // namespace

TEST_CASE("lambda = 0 matches the normal equations") {
  Rng rng(11);
  for (int rep = 0; rep < 10; ++rep) {
    const Index m = gen::integer(rng, 40, 200);
    const Index q = gen::integer(rng, 1, 6);
    const Matrix X = gen::normal_matrix(rng, m, q);
    const Vector y = X * gen::normal_vector(rng, q) + gen::normal_vector(rng, m) + Vector::Constant(m, 0.7);
    const auto fit = fit_arm(X, y, all_rows(m), ScadPenalty{0.0, 3.7});
    REQUIRE(fit.converged);
    Matrix A(m, q + 1);
    A << Vector::Ones(m), X;
    const Vector oracle = (A.transpose() * A).ldlt().solve(A.transpose() * y);
    CHECK(std::abs(fit.intercept - oracle(0)) < 1e-8);
    CHECK((fit.coef - oracle.tail(q)).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("zero outcome gives the zero fit") {
  Rng rng(12);
  const Matrix X = gen::normal_matrix(rng, 50, 4);
  const auto fit = fit_arm(X, Vector::Zero(50), all_rows(50), ScadPenalty{0.1, 3.7});
  CHECK(fit.coef.isZero(0.0));
  CHECK(fit.intercept == 0.0);
  CHECK(fit.rss == 0.0);
}

TEST_CASE("large lambda zeroes every penalized coefficient exactly") {
  Rng rng(13);
  const Matrix X = gen::normal_matrix(rng, 80, 5);
  const Vector y = X * Vector{{0.3, -0.2, 0.0, 0.1, 0.0}} + gen::normal_vector(rng, 80) + Vector::Constant(80, 2.0);
  ArmFitOptions opts;
  opts.penalized = {true, true, false, true, true};
  const auto fit = fit_arm(X, y, all_rows(80), ScadPenalty{100.0, 3.7}, opts);
  CHECK(fit.coef(0) == 0.0);
  CHECK(fit.coef(1) == 0.0);
  CHECK(fit.coef(3) == 0.0);
  CHECK(fit.coef(4) == 0.0);
  CHECK(fit.coef(2) != 0.0);  // unpenalized
  CHECK(fit.degrees_of_freedom() == 2);
}

TEST_CASE("noise-free sparse signal is recovered exactly") {
  // Coefficients beyond a * lambda carry no penalty gradient, so the exact
  // solution is a stationary point with zero residual.
  Rng rng(14);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix X = gen::normal_matrix(rng, 120, 8);
    Vector beta = Vector::Zero(8);
    beta(1) = 2.0;
    beta(4) = -1.5;
    beta(6) = 1.0;
    const Vector y = (X * beta).array() + 0.5;
    ArmFitOptions opts;
    opts.start = beta;
    opts.start_intercept = 0.5;
    const auto warm = fit_arm(X, y, all_rows(120), ScadPenalty{0.1, 3.7}, opts);
    CHECK((warm.coef - beta).cwiseAbs().maxCoeff() < 1e-10);
    const auto cold = fit_arm(X, y, all_rows(120), ScadPenalty{0.1, 3.7});
    CHECK((cold.coef - beta).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(std::abs(cold.intercept - 0.5) < 1e-8);
  }
}

TEST_CASE("fits satisfy the SCAD KKT conditions") {
  Rng rng(15);
  for (int rep = 0; rep < 30; ++rep) {
    const Index m = gen::integer(rng, 60, 300);
    const Index q = gen::integer(rng, 2, 12);
    const Matrix X = gen::normal_matrix(rng, m, q);
    Vector beta = gen::normal_vector(rng, q);
    for (Index j = 0; j < q; ++j) {
      if (gen::uniform(rng, 0.0, 1.0) < 0.5) beta(j) = 0.0;
    }
    const Vector y = X * beta + gen::normal_vector(rng, m, 0.5);
    const ScadPenalty pen{gen::uniform(rng, 0.01, 0.5), gen::uniform(rng, 2.5, 5.0)};
    const auto fit = fit_arm(X, y, all_rows(m), pen);
    REQUIRE(fit.converged);
    check_kkt(fit, X, y, pen, 1e-8);
  }
}

TEST_CASE("coordinate descent never raises the objective") {
  Rng rng(16);
  for (int rep = 0; rep < 30; ++rep) {
    const Index m = gen::integer(rng, 30, 150);
    const Index q = gen::integer(rng, 2, 20);
    const Matrix X = gen::normal_matrix(rng, m, q);
    const Vector y = X * gen::normal_vector(rng, q) + gen::normal_vector(rng, m);
    const auto fit = fit_arm(X, y, all_rows(m), ScadPenalty{gen::uniform(rng, 0.0, 1.0), 3.7});
    for (std::size_t k = 1; k < fit.objective_trace.size(); ++k) {
      CHECK(fit.objective_trace[k] <= fit.objective_trace[k - 1] + 1e-14 * (1.0 + std::abs(fit.objective_trace[k - 1])));
    }
  }
}

TEST_CASE("arm mask fits the masked rows only") {
  Rng rng(17);
  const Matrix X = gen::normal_matrix(rng, 60, 3);
  const Vector y = gen::normal_vector(rng, 60);
  std::vector<bool> mask(60, false);
  std::vector<Index> rows;
  for (Index i = 0; i < 60; i += 3) {
    mask[static_cast<std::size_t>(i)] = true;
    rows.push_back(i);
  }
  Matrix Xs(static_cast<Index>(rows.size()), 3);
  Vector ys(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    Xs.row(static_cast<Index>(r)) = X.row(rows[r]);
    ys(static_cast<Index>(r)) = y(rows[r]);
  }
  const ScadPenalty pen{0.05, 3.7};
  const auto a = fit_arm(X, y, mask, pen);
  const auto b = fit_arm(Xs, ys, all_rows(Xs.rows()), pen);
  CHECK(a.coef == b.coef);
  CHECK(a.intercept == b.intercept);
  CHECK(a.observations == 20);
}

TEST_CASE("fit_arm validation") {
  const Matrix X = Matrix::Zero(4, 2);
  CHECK_THROWS_AS(fit_arm(X, Vector::Zero(3), all_rows(3), ScadPenalty{0.1, 3.7}), std::invalid_argument);
  CHECK_THROWS_AS(fit_arm(X, Vector::Zero(4), std::vector<bool>(4, false), ScadPenalty{0.1, 3.7}), EstimationError);
  ArmFitOptions opts;
  opts.penalized = {true};
  CHECK_THROWS_AS(fit_arm(X, Vector::Zero(4), all_rows(4), ScadPenalty{0.1, 3.7}, opts), std::invalid_argument);
  CHECK_THROWS_AS(fit_arm(X, Vector::Zero(4), all_rows(4), ScadPenalty{0.1, 1.5}), std::invalid_argument);
}

TEST_CASE("arm_bic example") {
  ArmFit f;
  f.observations = 100;
  f.rss = 100.0 * std::exp(1.0);
  f.coef = Vector{{0.0, 1.0, -2.0}};
  // df = intercept plus two nonzero coefficients.
  CHECK(arm_bic(f) == doctest::Approx(100.0 + std::log(100.0) * f.degrees_of_freedom()));
}

TEST_CASE("fit_arm_bic recovers a sparse support") {
  Rng rng(18);
  const Matrix X = gen::normal_matrix(rng, 400, 20);
  Vector beta = Vector::Zero(20);
  beta(0) = 1.0;
  beta(3) = -1.0;
  beta(7) = 1.0;
  const Vector y = X * beta + gen::normal_vector(rng, 400, 0.5);
  const auto fit = fit_arm_bic(X, y, all_rows(400), {0.01, 0.05, 0.1, 0.2, 0.4});
  for (Index j = 0; j < 20; ++j) CHECK((fit.coef(j) != 0.0) == (beta(j) != 0.0));
}

TEST_CASE("build_features layout") {
  const Dataset ds = tiny_panel();
  SUBCASE("no latent block") {
    const Matrix f = build_features(ds, LatentFeatures::none(), 2);
    CHECK(f.cols() == 4);
    CHECK(f.leftCols(3) == ds.covariates);
    CHECK((f.col(3).array() == 2.0).all());
    CHECK(build_features(ds, LatentFeatures::none(), 2, false).cols() == 3);
  }
  SUBCASE("soft mode passes posteriors through") {
    std::vector<Matrix> post(6, Matrix::Constant(4, 3, 1.0 / 3));
    const Matrix f = build_features(ds, LatentFeatures::from_posteriors(post), 4);
    CHECK(f.cols() == 7);
    CHECK((f.middleCols(3, 3).array() == 1.0 / 3).all());
    CHECK((f.col(6).array() == 4.0).all());
  }
  SUBCASE("hard mode is one-hot") {
    const auto lf = LatentFeatures::from_states(*ds.latent_states, 3);
    const Matrix f = build_features(ds, lf, 3);
    for (Index i = 0; i < 6; ++i) {
      CHECK(f.row(i).segment(3, 3).transpose() == one_hot_state((*ds.latent_states)(i, 2), 3));
    }
  }
  CHECK_THROWS_AS(build_features(ds, LatentFeatures::none(), 0), std::invalid_argument);
  CHECK_THROWS_AS(build_features(ds, LatentFeatures::none(), 5), std::invalid_argument);
}

TEST_CASE("pooled rows are individual-major") {
  const Dataset ds = tiny_panel();
  const auto lf = LatentFeatures::from_states(*ds.latent_states, 3);
  const Matrix pooled = build_pooled_features(ds, lf);
  const Vector y = pooled_outcomes(ds);
  REQUIRE(pooled.rows() == 24);
  for (Index i = 0; i < 6; ++i) {
    for (Index t = 1; t <= 4; ++t) {
      CHECK(pooled.row(i * 4 + t - 1) == build_features(ds, lf, t).row(i));
      CHECK(y(i * 4 + t - 1) == ds.outcomes(i, t - 1));
    }
  }
}

TEST_CASE("latent feature validation") {
  CHECK_THROWS_AS(LatentFeatures::from_states(IntMatrix::Constant(2, 2, 4), 3), std::invalid_argument);
  CHECK_THROWS_AS(LatentFeatures::from_posteriors({}), std::invalid_argument);
  CHECK_THROWS_AS(LatentFeatures::from_posteriors({Matrix::Zero(2, 3), Matrix::Zero(2, 2)}), std::invalid_argument);
  const auto lf = LatentFeatures::from_states(IntMatrix::Constant(2, 2, 1), 3);
  CHECK_THROWS_AS(lf.row(2, 1), std::invalid_argument);
  CHECK_THROWS_AS(LatentFeatures::none().row(0, 1), std::invalid_argument);
}

TEST_CASE("predict checks widths and arms") {
  OutcomeFit fit;
  fit.spec = FeatureSpec{2, 0, true};
  fit.arm0.coef = Vector{{1.0, 0.0, 0.5}};
  fit.arm0.intercept = 1.0;
  fit.arm1 = fit.arm0;
  fit.arm1.intercept = 3.0;
  const Matrix f{{1.0, 9.0, 2.0}};
  CHECK(predict(fit, f, 0)(0) == 3.0);
  CHECK(predict(fit, f, 1)(0) == 5.0);
  CHECK_THROWS_AS(predict(fit, f, 2), std::invalid_argument);
  CHECK_THROWS_AS(predict(fit, Matrix::Zero(1, 2), 0), std::invalid_argument);
}
