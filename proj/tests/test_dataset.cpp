#include "drst/dataset.hpp"
#include "drst/synth.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>

using namespace drst;

namespace {

Dataset small() {
  auto cfg = synth::default_config();
  cfg.n = 40;
  cfg.p = 6;
  cfg.beta = synth::alternating_sparse(6, 3);
  return synth::generate(cfg);
}

}  // namespace

TEST_CASE("make_dataset rejects broken invariants") {
  const Matrix x = Matrix::Zero(3, 2);
  const Matrix y = Matrix::Zero(3, 4);
  CHECK_NOTHROW(make_dataset(x, IntVector{{0, 1, 0}}, y));
  CHECK_THROWS_AS(make_dataset(x, IntVector{{0, 2, 0}}, y), std::invalid_argument);
  CHECK_THROWS_AS(make_dataset(x, IntVector{{0, 1}}, y), std::invalid_argument);
  CHECK_THROWS_AS(make_dataset(x, IntVector{{0, 1, 0}}, Matrix::Zero(2, 4)), std::invalid_argument);
  Matrix bad = y;
  bad(1, 1) = std::nan("");
  CHECK_THROWS_AS(make_dataset(x, IntVector{{0, 1, 0}}, bad), std::invalid_argument);
  CHECK_THROWS_AS(make_dataset(x, IntVector{{0, 1, 0}}, y, IntMatrix::Constant(3, 4, 4), 3), std::invalid_argument);
}

TEST_CASE("split is a sorted partition of the requested size") {
  const Dataset ds = small();
  const auto sp = split(ds, 0.7, 9);
  CHECK(sp.train_ids.size() == 28);
  CHECK(sp.test_ids.size() == 12);
  CHECK(std::is_sorted(sp.train_ids.begin(), sp.train_ids.end()));
  CHECK(std::is_sorted(sp.test_ids.begin(), sp.test_ids.end()));
  std::vector<Index> all = sp.train_ids;
  all.insert(all.end(), sp.test_ids.begin(), sp.test_ids.end());
  std::sort(all.begin(), all.end());
  for (Index i = 0; i < 40; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);
  CHECK(split(ds, 0.7, 9).train_ids == sp.train_ids);
  CHECK(split(ds, 0.7, 10).train_ids != sp.train_ids);
}

TEST_CASE("subset keeps rows in the given order") {
  const Dataset ds = small();
  const std::vector<Index> ids{5, 2, 9};
  const Dataset s = subset(ds, ids);
  CHECK(s.n() == 3);
  CHECK(s.covariates.row(0) == ds.covariates.row(5));
  CHECK(s.outcomes.row(2) == ds.outcomes.row(9));
  CHECK(s.treatment(1) == ds.treatment(2));
  CHECK(s.latent_states->row(1) == ds.latent_states->row(2));
  CHECK(s.true_ate == ds.true_ate);
}

TEST_CASE("one_hot_state") {
  CHECK(one_hot_state(2, 3) == Vector{{0.0, 1.0, 0.0}});
  CHECK_THROWS_AS(one_hot_state(0, 3), std::invalid_argument);
  CHECK_THROWS_AS(one_hot_state(4, 3), std::invalid_argument);
}

TEST_CASE("csv round trip is exact") {
  const Dataset ds = small();
  const auto dir = std::filesystem::temp_directory_path() / "drst_dataset_test";
  std::filesystem::create_directories(dir);
  write_csv(ds, dir / "panel.csv", dir / "cov.csv");
  const Dataset back = read_csv(dir / "panel.csv", dir / "cov.csv");
  CHECK(back.covariates == ds.covariates);
  CHECK(back.outcomes == ds.outcomes);
  CHECK(back.treatment == ds.treatment);
  REQUIRE(back.latent_states);
  CHECK(*back.latent_states == *ds.latent_states);
  CHECK_FALSE(back.true_ate);
  std::filesystem::remove_all(dir);
}
