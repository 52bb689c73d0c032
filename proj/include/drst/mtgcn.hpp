#pragma once

#include "drst/dataset.hpp"
#include "drst/types.hpp"

#include <cstdint>
#include <vector>

namespace drst::mtgcn {

/// Node graphs, one adjacency per view. Each adjacency is symmetric,
/// non-negative and has a zero diagonal; self-loops are added at
/// normalization time.
struct GraphSpec {
  Index node_count = 0;
  std::vector<Matrix> adjacencies;

  void validate() const;
};

/// D^{-1/2} (A + I) D^{-1/2} with D the row sums of A + I.
Matrix normalize_adjacency(const Eigen::Ref<const Matrix>& a);

/// Next-step training samples. Column b of `inputs` is one graph signal
/// (one scalar per node); row b of `targets` holds the outcomes at each
/// task offset. `strata` labels samples for the within-stratum graph view.
struct Samples {
  Matrix inputs;   // nodes x samples
  Matrix targets;  // samples x tasks
  IntVector strata;
};

/// One sample per (individual, t) with t + max(offsets) <= horizon. Node
/// signals are the chosen covariates, then the K entries of `filtered[i]`
/// row t (if given), then the treatment indicator. Strata are the most
/// probable filtered state (1-based) or, without posteriors, the treatment
/// arm (1 or 2).
Samples make_samples(const Dataset& ds, const std::vector<Matrix>* filtered,
                     const std::vector<Index>& covariate_nodes, const std::vector<int>& offsets = {1});

/// View 1: |correlation| between node signals over all samples. View 2: the
/// size-weighted mean |correlation| within strata (strata with fewer than
/// three samples are skipped). Entries below `threshold` are pruned; nodes
/// with zero variance get no edges.
GraphSpec build_graphs(const Samples& train, double threshold = 0.2);

enum class Activation { Tanh, Linear };

/// Graph convolutional trunk with per-task linear heads.
///
/// Layer l maps H (nodes x C_l) to sum_v act(Ahat_v H W[l][v]); the first
/// layer has one input channel. Head h predicts
///   bias(h) + skip.col(h) . x + sum_{n,c} R[h](n, c) H_L(n, c)
/// on standardized inputs x, in standardized target units.
struct MtgcnModel {
  Index nodes = 0;
  int views = 0;
  int layers = 2;
  int hidden = 16;
  int tasks = 1;
  Activation activation = Activation::Tanh;

  std::vector<std::vector<Matrix>> W;  // [layer][view], C_l x C_{l+1}
  Vector bias;                         // per task
  Matrix skip;                         // nodes x tasks
  std::vector<Matrix> readout;         // per task, nodes x hidden

  Vector input_mean;  // per node
  Vector input_scale;
  Vector target_mean;  // per task
  Vector target_scale;

  Index parameter_count() const;
  void validate() const;
};

/// Glorot-uniform trunk weights, small random readout, zero bias and skip,
/// identity scaling.
MtgcnModel init_model(Index nodes, int views, int tasks, std::uint64_t seed, int layers = 2, int hidden = 16,
                      Activation activation = Activation::Tanh);

/// Sets input and target standardization from training samples.
void fit_scaling(MtgcnModel& model, const Samples& train);

/// Predictions in target units, samples x tasks.
Matrix forward(const MtgcnModel& model, const GraphSpec& graphs, const Eigen::Ref<const Matrix>& inputs);

/// Flat parameter vector: W[l][v] for every layer and view, then per task
/// bias, skip column and readout matrix (all column-major).
Vector pack(const MtgcnModel& model);
void unpack(MtgcnModel& model, const Eigen::Ref<const Vector>& params);

/// Parameter index ranges [begin, end) per layer; the last range is the
/// readout.
std::vector<std::pair<Index, Index>> parameter_groups(const MtgcnModel& model);

/// Mean squared error in standardized target units, and its gradient with
/// respect to pack(model).
double loss(const MtgcnModel& model, const GraphSpec& graphs, const Samples& data, Vector* gradient = nullptr);

struct GradientCheck {
  double max_relative_error = 0.0;
  int probes = 0;
};

/// Compares directional derivatives along random directions, `probes` per
/// parameter group, with central differences of step h. Relative error is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-10).
GradientCheck gradient_check(const MtgcnModel& model, const GraphSpec& graphs, const Samples& data,
                             int probes = 20, std::uint64_t seed = 7, double h = 1e-5);

struct TrainOptions {
  int epochs = 200;  // upper bound; see stop_tolerance
  double learning_rate = 0.01;
  // Stop once the loss fell by less than this fraction over the last
  // stop_window epochs. Zero trains for exactly `epochs`.
  double stop_tolerance = 1e-3;
  int stop_window = 10;
  bool check_gradients = true;
  int gradient_probes = 20;
  double gradient_tolerance = 1e-4;
  int gradient_samples = 256;  // leading samples used by the self-check
  std::uint64_t seed = 7;
};

struct TrainResult {
  std::vector<double> loss_trace;  // loss before training, then after each accepted step
  int epochs = 0;
  int rejected_steps = 0;
  GradientCheck gradient;
};

/// Full-batch Adam on the mean squared next-step error. A step that raises
/// the loss is rejected and retried at half the learning rate, so the trace
/// never increases. Throws EstimationError on divergence (non-finite loss or
/// loss above 1e6) and std::logic_error when the gradient self-check fails.
TrainResult train(MtgcnModel& model, const GraphSpec& graphs, const Samples& data, const TrainOptions& opts = {});

/// Root mean squared error of the first task over all samples, target units.
double predictive_error(const MtgcnModel& model, const GraphSpec& graphs, const Samples& test);

}  // namespace drst::mtgcn
