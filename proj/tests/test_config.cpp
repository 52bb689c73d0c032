#include "drst/config.hpp"

#include <doctest.h>

using namespace drst;

TEST_CASE("config text round trips") {
  for (const auto& base : {ExperimentConfig{}, quick_config()}) {
    const std::string text = to_config_text(base);
    const auto back = parse_config(text);
    CHECK(to_config_text(back) == text);
    CHECK(back.dgp.n == base.dgp.n);
    CHECK(back.dgp.beta == base.dgp.beta);
    CHECK(back.dgp.hmm.A == base.dgp.hmm.A);
    CHECK(back.lambda_grid == base.lambda_grid);
    CHECK(back.methods == base.methods);
  }
}

TEST_CASE("config keys set fields") {
  const auto cfg = parse_config(
      "# comment\n"
      "n = 300\n"
      "p = 10   # trailing comment\n"
      "beta_nonzero = 3\n"
      "methods = proposed, outcome_only\n"
      "lambda_grid = [0, 0.1]\n"
      "latent_features = hard\n"
      "propensity_latent = true\n"
      "dr_formula = paper\n"
      "treatment_model = sparse_logistic\n"
      "mtgcn.offsets = [1, 2]\n"
      "mtgcn.activation = linear\n"
      "K = 2\n"
      "transition = [[0.9, 0.1], [0.2, 0.8]]\n"
      "initial = [0.5, 0.5]\n");
  CHECK(cfg.dgp.n == 300);
  CHECK(cfg.dgp.p == 10);
  CHECK(cfg.dgp.beta.size() == 10);
  CHECK((cfg.dgp.beta.array() != 0.0).count() == 3);
  CHECK(cfg.methods == std::vector<std::string>{"proposed", "outcome_only"});
  CHECK(cfg.lambda_grid == std::vector<double>{0.0, 0.1});
  CHECK(cfg.latent_features == outcome::LatentMode::Hard);
  CHECK(cfg.propensity_latent);
  CHECK(cfg.formula == dr::Formula::Paper);
  CHECK(cfg.dgp.treatment_model == synth::TreatmentModel::SparseLogistic);
  CHECK(cfg.mtgcn.offsets == std::vector<int>{1, 2});
  CHECK(cfg.mtgcn.activation == mtgcn::Activation::Linear);
  CHECK(cfg.dgp.K == 2);
  CHECK(cfg.dgp.hmm.A(0, 0) == 0.9);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_config("bogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("n = 10\nn = 20\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("n 10\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("n =\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("n = ten\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("methods = proposed, nope\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("methods = proposed, proposed\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("train_fraction = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("latent_features = fuzzy\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("mtgcn.offsets = [0]\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("bootstrap = maybe\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("beta = [1, 2]\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.txt"), std::runtime_error);
}
