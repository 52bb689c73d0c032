#pragma once

#include "drst/types.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace drst {

/// Longitudinal observational data: baseline covariates, a binary treatment,
/// an outcome path per individual and (synthetic data only) the latent state
/// paths and the true average treatment effect.
///
/// Latent states are stored 1-based ({1..K}); every routine that indexes
/// arrays by state converts at the boundary.
struct Dataset {
  Matrix covariates;                       // n x p
  IntVector treatment;                     // n, entries 0/1
  Matrix outcomes;                         // n x horizon
  std::optional<IntMatrix> latent_states;  // n x horizon, entries 1..state_count
  int state_count = 0;
  std::optional<double> true_ate;

  Index n() const { return covariates.rows(); }
  Index p() const { return covariates.cols(); }
  Index horizon() const { return outcomes.cols(); }

  /// Throws std::invalid_argument when any invariant is broken.
  void validate() const;
};

/// Builds and validates a dataset.
Dataset make_dataset(Matrix covariates, IntVector treatment, Matrix outcomes,
                     std::optional<IntMatrix> latent_states = std::nullopt, int state_count = 0,
                     std::optional<double> true_ate = std::nullopt);

/// Rows `ids` of `ds`, in the given order.
Dataset subset(const Dataset& ds, std::span<const Index> ids);

struct SplitIndex {
  std::vector<Index> train_ids;  // sorted ascending
  std::vector<Index> test_ids;   // sorted ascending
};

/// Uniformly random partition with round(train_fraction * n) training rows.
SplitIndex split(const Dataset& ds, double train_fraction, std::uint64_t seed);

/// Indicator vector of length K with a one at (1-based) state z.
Vector one_hot_state(int z, int state_count);

// Columnar text format.
//
// Panel file: header `id,t,T,Y[,Z]`, one row per (individual, time), t is
// 1-based, rows ordered by id then t. Covariate sidecar: header
// `id,x1,...,xp`, one row per individual. Numbers use the shortest
// representation that round-trips exactly. true_ate is not persisted.
void write_csv(const Dataset& ds, const std::filesystem::path& panel_path,
               const std::filesystem::path& covariate_path);
Dataset read_csv(const std::filesystem::path& panel_path,
                 const std::filesystem::path& covariate_path);

}  // namespace drst
