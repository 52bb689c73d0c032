#pragma once

#include "drst/rng.hpp"
#include "drst/types.hpp"

#include <vector>

namespace drst::hmm {

/// Discrete-state HMM with Gaussian emissions.
struct HmmModel {
  int K = 0;
  Vector pi0;        // initial distribution
  Matrix A;          // row-stochastic transitions, A(i, j) = P(j | i)
  Vector emit_mean;  // per-state emission mean
  Vector emit_sd;    // per-state emission sd

  void validate() const;
};

/// Model with uniform pi0, the given transitions and standard-normal emissions.
HmmModel make_chain(Matrix A, Vector pi0);

struct Posterior {
  Matrix smoothed;  // horizon x K, P(Z_t = k | all observations)
  Matrix filtered;  // horizon x K, P(Z_t = k | observations up to t)
  double loglik = 0.0;
};

/// n paths of length `horizon`, states 1-based.
IntMatrix sample_paths(const HmmModel& model, Index n, Index horizon, Rng& rng);

/// Scaled forward-backward. Throws DegenerateInput when every state assigns
/// zero density to some observation.
Posterior forward_backward(const HmmModel& model, const Eigen::Ref<const Vector>& obs);

/// Most probable state path (1-based). Among equally probable paths the
/// lexicographically smallest one is returned, i.e. ties go to the lower
/// state index at the earliest position where optimal paths differ.
IntVector viterbi(const HmmModel& model, const Eigen::Ref<const Vector>& obs);

struct BaumWelchOptions {
  int max_iter = 200;
  double tol = 1e-8;  // absolute log-likelihood improvement
};

struct BaumWelchResult {
  HmmModel model;
  std::vector<double> loglik_trace;  // entry k: log-likelihood of the k-th iterate
  int iterations = 0;                // EM steps applied
  int reinitialized = 0;             // starved-state restarts
};

/// EM fit over a set of sequences (rows of `obs_set`, each of the same
/// length). The returned model's states are relabeled by ascending emission
/// mean.
///
/// A state whose total posterior occupancy falls below 1e-10 is restarted at
/// mean = pooled mean + (k - (K-1)/2) * pooled sd, sd = pooled sd, with its
/// transition row reset to uniform. The restart is counted in `reinitialized`.
BaumWelchResult baum_welch(const HmmModel& init, const Eigen::Ref<const Matrix>& obs_set,
                           const BaumWelchOptions& opts = {});

/// Permutes states so emission means ascend.
HmmModel canonical_order(const HmmModel& model);

/// P(Z_{t+1} | observations up to t) from a filtered row.
Vector predict_next(const HmmModel& model, const Eigen::Ref<const Vector>& filtered_row);

}  // namespace drst::hmm
