#pragma once

#include "drst/config.hpp"
#include "drst/dataset.hpp"
#include "drst/dr.hpp"
#include "drst/el.hpp"
#include "drst/metrics.hpp"
#include "drst/mtgcn.hpp"
#include "drst/outcome.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace drst {

/// How the test-set weights p_i were obtained.
enum class WeightSource { Uniform, El, UniformFallback };

std::string to_string(WeightSource w);

struct PipelineOutput {
  std::optional<dr::DrEstimate> estimate;  // empty for prediction-only methods
  std::optional<double> pe;
  WeightSource weights = WeightSource::Uniform;
  double lambda_propensity = std::numeric_limits<double>::quiet_NaN();
  double lambda_outcome0 = std::numeric_limits<double>::quiet_NaN();
  double lambda_outcome1 = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> loss_trace;  // MTGCN training loss, when trained
};

/// Shared fits for one train/test split, computed on first use and reused
/// by every method of the replication.
class Pipeline {
 public:
  Pipeline(Dataset train, Dataset test, const ExperimentConfig& cfg, std::uint64_t stream_seed);
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  /// proposed: HMM posteriors, EL propensity, SCAD outcome with the latent
  ///   block, weighted estimator, MTGCN predictive error.
  /// ipw_only: EL propensity with m0 = m1 = 0, uniform weights; PE from the
  ///   inverse-probability weighted arm means.
  /// outcome_only: static SCAD outcome with e = 0.5, uniform weights; PE from
  ///   the static regression.
  /// cbps_scad_static: EL propensity and weights with the static outcome
  ///   model; PE from the static regression.
  /// mtgcn_only: MTGCN without latent nodes, PE only.
  /// Throws std::invalid_argument for other names.
  PipelineOutput run(const std::string& method);

 private:
  struct State;
  std::unique_ptr<State> s_;
};

PipelineOutput method_pipeline(const std::string& name, const Dataset& train, const Dataset& test,
                               const ExperimentConfig& cfg, std::uint64_t stream_seed = 0);

struct MethodResult {
  int replication = 0;
  std::string method;
  std::uint64_t dgp_seed = 0;
  bool ok = false;
  std::string error;
  PipelineOutput output;
};

/// Every requested method on replication r (dgp seed cfg.seed + r). Failures
/// are caught per method and reported in the result.
std::vector<MethodResult> run_replication(const ExperimentConfig& cfg, int r);

struct RunSummary {
  std::vector<metrics::MetricRow> table;
  std::vector<MethodResult> results;  // ordered by replication, then method
  int failures = 0;
};

/// Runs all replications, up to cfg.workers at a time, and aggregates. With
/// `write_outputs`, writes replications.csv, traces.csv, metrics.csv,
/// metrics.txt and manifest.json into cfg.output_dir.
RunSummary run(const ExperimentConfig& cfg, bool write_outputs = true);

}  // namespace drst
