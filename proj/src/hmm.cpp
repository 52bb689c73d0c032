#include "drst/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace drst::hmm {

namespace {

constexpr double kStochasticTol = 1e-12;

double log_normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

// Emission densities rescaled per time step so the largest equals one;
// `log_shift(t)` holds the removed log factor.
void scaled_emissions(const HmmModel& m, const Eigen::Ref<const Vector>& obs, Matrix& b,
                      Vector& log_shift) {
  const Index T = obs.size();
  b.resize(T, m.K);
  log_shift.resize(T);
  for (Index t = 0; t < T; ++t) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < m.K; ++k) {
      b(t, k) = log_normal_pdf(obs(t), m.emit_mean(k), m.emit_sd(k));
      mx = std::max(mx, b(t, k));
    }
    for (int k = 0; k < m.K; ++k) b(t, k) = std::exp(b(t, k) - mx);
    log_shift(t) = mx;
  }
}

struct EStep {
  Matrix gamma;     // T x K
  Matrix filtered;  // T x K
  Matrix xi_sum;    // K x K
  double loglik = 0.0;
};

EStep e_step(const HmmModel& m, const Eigen::Ref<const Vector>& obs, bool want_xi) {
  if (!obs.allFinite()) throw std::invalid_argument("hmm: non-finite observation");
  const Index T = obs.size();
  if (T == 0) throw std::invalid_argument("hmm: empty observation sequence");
  Matrix b;
  Vector shift;
  scaled_emissions(m, obs, b, shift);

  Matrix alpha(T, m.K);
  Vector c(T);
  double loglik = 0.0;
  for (Index t = 0; t < T; ++t) {
    if (t == 0) {
      alpha.row(0) = m.pi0.transpose().cwiseProduct(b.row(0));
    } else {
      alpha.row(t) = (alpha.row(t - 1) * m.A).cwiseProduct(b.row(t));
    }
    c(t) = alpha.row(t).sum();
    if (!(c(t) > 0.0) || !std::isfinite(c(t))) {
      throw DegenerateInput("hmm: observation sequence has zero likelihood");
    }
    alpha.row(t) /= c(t);
    loglik += std::log(c(t)) + shift(t);
  }

  Matrix beta(T, m.K);
  beta.row(T - 1).setOnes();
  for (Index t = T - 2; t >= 0; --t) {
    const Eigen::RowVectorXd next = b.row(t + 1).cwiseProduct(beta.row(t + 1));
    beta.row(t) = (m.A * next.transpose()).transpose() / c(t + 1);
  }

  EStep out;
  out.gamma = alpha.cwiseProduct(beta);
  for (Index t = 0; t < T; ++t) out.gamma.row(t) /= out.gamma.row(t).sum();
  out.filtered = alpha;
  out.loglik = loglik;
  if (want_xi) {
    out.xi_sum = Matrix::Zero(m.K, m.K);
    for (Index t = 0; t + 1 < T; ++t) {
      const Eigen::RowVectorXd next = b.row(t + 1).cwiseProduct(beta.row(t + 1));
      out.xi_sum.noalias() +=
          (alpha.row(t).transpose() * next).cwiseProduct(m.A) / c(t + 1);
    }
  }
  return out;
}

}  // namespace

void HmmModel::validate() const {
  if (K < 1) throw std::invalid_argument("hmm: K must be >= 1");
  if (pi0.size() != K || A.rows() != K || A.cols() != K || emit_mean.size() != K ||
      emit_sd.size() != K) {
    throw std::invalid_argument("hmm: parameter shapes disagree with K");
  }
  if (!pi0.allFinite() || !A.allFinite() || !emit_mean.allFinite() || !emit_sd.allFinite()) {
    throw std::invalid_argument("hmm: non-finite parameter");
  }
  if (pi0.minCoeff() < 0.0 || std::abs(pi0.sum() - 1.0) > kStochasticTol) {
    throw std::invalid_argument("hmm: pi0 must be a probability vector");
  }
  if (A.minCoeff() < 0.0) throw std::invalid_argument("hmm: negative transition probability");
  for (int k = 0; k < K; ++k) {
    if (std::abs(A.row(k).sum() - 1.0) > kStochasticTol) {
      throw std::invalid_argument("hmm: transition rows must sum to 1");
    }
  }
  if (emit_sd.minCoeff() <= 0.0) throw std::invalid_argument("hmm: emission sd must be > 0");
}

HmmModel make_chain(Matrix A, Vector pi0) {
  HmmModel m;
  m.K = static_cast<int>(A.rows());
  m.A = std::move(A);
  m.pi0 = std::move(pi0);
  m.emit_mean = Vector::Zero(m.K);
  m.emit_sd = Vector::Ones(m.K);
  m.validate();
  return m;
}

namespace {

int draw_categorical(const Eigen::Ref<const Eigen::RowVectorXd>& probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  const auto K = static_cast<int>(probs.size());
  for (int k = 0; k < K; ++k) {
    acc += probs(k);
    if (u < acc) return k;
  }
  // u landed in the rounding gap above the cumulative sum: last state with mass.
  for (int k = K - 1; k >= 0; --k) {
    if (probs(k) > 0.0) return k;
  }
  return K - 1;
}

}  // namespace

IntMatrix sample_paths(const HmmModel& model, Index n, Index horizon, Rng& rng) {
  model.validate();
  IntMatrix z(n, horizon);
  for (Index i = 0; i < n; ++i) {
    int state = 0;
    for (Index t = 0; t < horizon; ++t) {
      state = t == 0 ? draw_categorical(model.pi0.transpose(), rng)
                     : draw_categorical(model.A.row(state), rng);
      z(i, t) = state + 1;
    }
  }
  return z;
}

Posterior forward_backward(const HmmModel& model, const Eigen::Ref<const Vector>& obs) {
  model.validate();
  auto e = e_step(model, obs, false);
  return Posterior{std::move(e.gamma), std::move(e.filtered), e.loglik};
}

IntVector viterbi(const HmmModel& model, const Eigen::Ref<const Vector>& obs) {
  model.validate();
  if (!obs.allFinite()) throw std::invalid_argument("viterbi: non-finite observation");
  const Index T = obs.size();
  if (T == 0) throw std::invalid_argument("viterbi: empty observation sequence");
  const int K = model.K;
  const Matrix logA = model.A.array().log().matrix();
  Matrix logb(T, K);
  for (Index t = 0; t < T; ++t) {
    for (int k = 0; k < K; ++k) logb(t, k) = log_normal_pdf(obs(t), model.emit_mean(k), model.emit_sd(k));
  }
  // suffix(t, k): best log-probability of observations after t given Z_t = k.
  Matrix suffix(T, K);
  suffix.row(T - 1).setZero();
  for (Index t = T - 2; t >= 0; --t) {
    for (int i = 0; i < K; ++i) {
      double best = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < K; ++j) best = std::max(best, logA(i, j) + logb(t + 1, j) + suffix(t + 1, j));
      suffix(t, i) = best;
    }
  }
  // Forward selection, first (lowest) maximizer at every position.
  IntVector path(T);
  int prev = -1;
  for (Index t = 0; t < T; ++t) {
    double best = -std::numeric_limits<double>::infinity();
    int arg = -1;
    for (int k = 0; k < K; ++k) {
      const double head = t == 0 ? std::log(model.pi0(k)) : logA(prev, k);
      const double score = head + logb(t, k) + suffix(t, k);
      if (score > best) {
        best = score;
        arg = k;
      }
    }
    if (arg < 0) throw DegenerateInput("viterbi: no state path has positive probability");
    path(t) = arg + 1;
    prev = arg;
  }
  return path;
}

HmmModel canonical_order(const HmmModel& model) {
  std::vector<int> order(static_cast<std::size_t>(model.K));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return model.emit_mean(a) < model.emit_mean(b); });
  HmmModel out = model;
  for (int a = 0; a < model.K; ++a) {
    const int oa = order[static_cast<std::size_t>(a)];
    out.pi0(a) = model.pi0(oa);
    out.emit_mean(a) = model.emit_mean(oa);
    out.emit_sd(a) = model.emit_sd(oa);
    for (int b = 0; b < model.K; ++b) out.A(a, b) = model.A(oa, order[static_cast<std::size_t>(b)]);
  }
  return out;
}

BaumWelchResult baum_welch(const HmmModel& init, const Eigen::Ref<const Matrix>& obs_set,
                           const BaumWelchOptions& opts) {
  init.validate();
  if (obs_set.rows() < 1 || obs_set.cols() < 1) {
    throw std::invalid_argument("baum_welch: need at least one non-empty sequence");
  }
  const int K = init.K;
  const Index S = obs_set.rows();
  const Index T = obs_set.cols();
  const double pooled_mean = obs_set.mean();
  const double pooled_sd = std::max(
      std::sqrt((obs_set.array() - pooled_mean).square().mean()), 1e-12);
  const double sd_floor = 1e-3 * pooled_sd;

  BaumWelchResult res;
  res.model = init;
  for (int it = 0;; ++it) {
    Vector pi_acc = Vector::Zero(K);
    Matrix xi_acc = Matrix::Zero(K, K);
    Vector occ = Vector::Zero(K);       // all t
    Vector occ_head = Vector::Zero(K);  // t < T-1
    Vector sum_o = Vector::Zero(K);
    double ll = 0.0;
    std::vector<Matrix> gammas;
    gammas.reserve(static_cast<std::size_t>(S));
    // Sequential reduction in sequence order keeps the accumulators
    // bit-reproducible.
    for (Index s = 0; s < S; ++s) {
      const Vector obs = obs_set.row(s).transpose();
      auto e = e_step(res.model, obs, true);
      ll += e.loglik;
      pi_acc += e.gamma.row(0).transpose();
      xi_acc += e.xi_sum;
      occ += e.gamma.colwise().sum().transpose();
      if (T > 1) occ_head += e.gamma.topRows(T - 1).colwise().sum().transpose();
      sum_o += e.gamma.transpose() * obs;
      gammas.push_back(std::move(e.gamma));
    }
    res.loglik_trace.push_back(ll);
    if (it > 0 && ll - res.loglik_trace[static_cast<std::size_t>(it - 1)] < opts.tol) break;
    if (it >= opts.max_iter) break;

    HmmModel next = res.model;
    next.pi0 = pi_acc / static_cast<double>(S);
    for (int k = 0; k < K; ++k) {
      if (occ(k) < 1e-10) {
        next.emit_mean(k) = pooled_mean + (k - 0.5 * (K - 1)) * pooled_sd;
        next.emit_sd(k) = pooled_sd;
        next.A.row(k).setConstant(1.0 / K);
        ++res.reinitialized;
        continue;
      }
      next.emit_mean(k) = sum_o(k) / occ(k);
      if (occ_head(k) > 0.0) next.A.row(k) = xi_acc.row(k) / occ_head(k);
    }
    for (int k = 0; k < K; ++k) {
      if (occ(k) < 1e-10) continue;
      double ss = 0.0;
      for (Index s = 0; s < S; ++s) {
        const auto& g = gammas[static_cast<std::size_t>(s)];
        for (Index t = 0; t < T; ++t) {
          const double d = obs_set(s, t) - next.emit_mean(k);
          ss += g(t, k) * d * d;
        }
      }
      next.emit_sd(k) = std::max(std::sqrt(ss / occ(k)), sd_floor);
    }
    // Renormalize against rounding so the stochastic invariants hold to 1e-12.
    next.pi0 /= next.pi0.sum();
    for (int k = 0; k < K; ++k) next.A.row(k) /= next.A.row(k).sum();
    res.model = std::move(next);
    ++res.iterations;
  }
  res.model = canonical_order(res.model);
  return res;
}

Vector predict_next(const HmmModel& model, const Eigen::Ref<const Vector>& filtered_row) {
  return (filtered_row.transpose() * model.A).transpose();
}

}  // namespace drst::hmm
