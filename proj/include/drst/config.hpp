#pragma once

#include "drst/dr.hpp"
#include "drst/el.hpp"
#include "drst/hmm.hpp"
#include "drst/mtgcn.hpp"
#include "drst/outcome.hpp"
#include "drst/synth.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace drst {

inline const std::vector<std::string> kAllMethods = {"proposed", "ipw_only", "outcome_only", "cbps_scad_static",
                                                      "mtgcn_only"};

std::vector<double> default_lambda_grid();

struct MtgcnSettings {
  int layers = 2;
  int hidden = 16;
  mtgcn::Activation activation = mtgcn::Activation::Tanh;
  double threshold = 0.2;
  std::vector<int> offsets{1};
  mtgcn::TrainOptions train;
};

struct ExperimentConfig {
  synth::DgpConfig dgp = synth::default_config();
  std::vector<std::string> methods = kAllMethods;
  int replications = 100;
  std::vector<double> lambda_grid = default_lambda_grid();
  double scad_a = 3.7;
  std::filesystem::path output_dir = "results";
  std::uint64_t seed = 1;
  double train_fraction = 0.7;
  int workers = 1;
  dr::Formula formula = dr::Formula::Aipw;
  bool bootstrap = false;
  int bootstrap_resamples = 200;
  el::ElOptions el;
  outcome::ArmFitOptions outcome;
  hmm::BaumWelchOptions hmm;
  MtgcnSettings mtgcn;
  // Latent block of the proposed outcome regression: smoothed posteriors
  // (Soft) or one-hot Viterbi paths (Hard).
  outcome::LatentMode latent_features = outcome::LatentMode::Soft;
  // Append time-averaged smoothed posteriors (first K-1 states; the K-th is
  // collinear with the intercept) to the proposed method's propensity model.
  bool propensity_latent = false;
  // Experimental: use MTGCN predictions of Y at the last time as m0, m1 in
  // the proposed method instead of the SCAD outcome regression.
  bool mtgcn_outcome = false;

  void validate() const;
};

/// Small preset for smoke runs: n = 60, p = 6, 2 replications, short training.
ExperimentConfig quick_config();

// Config text grammar, one setting per line:
//
//   line    := key '=' value | blank | '#' comment
//   value   := number | word | words | list
//   words   := word (',' word)*            e.g. methods = proposed, ipw_only
//   list    := '[' [item (',' item)*] ']'  item := number | list
//
// Keys are listed in README.md. Unknown or repeated keys are errors. Vectors
// and matrices that depend on p or K (beta, gamma, transition, ...) are
// resolved after all scalars, so their defaults follow the configured sizes.
ExperimentConfig parse_config(std::string_view text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

/// Text that parse_config maps back to the same configuration.
std::string to_config_text(const ExperimentConfig& cfg);

}  // namespace drst
