#include "drst/experiment.hpp"
#include "drst/synth.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace drst;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("drst_test_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("quick run writes every output and is deterministic") {
  auto cfg = quick_config();
  cfg.output_dir = scratch("a");
  const auto a = run(cfg);
  CHECK(a.failures == 0);
  CHECK(a.table.size() == kAllMethods.size());
  CHECK(a.results.size() == kAllMethods.size() * 2);
  for (const char* f : {"replications.csv", "traces.csv", "metrics.csv", "metrics.txt", "manifest.json"}) {
    CHECK(fs::exists(cfg.output_dir / f));
  }

  auto cfg2 = cfg;
  cfg2.output_dir = scratch("b");
  cfg2.workers = 2;
  run(cfg2);
  for (const char* f : {"replications.csv", "traces.csv", "metrics.csv", "metrics.txt"}) {
    CHECK(slurp(cfg.output_dir / f) == slurp(cfg2.output_dir / f));
  }
  fs::remove_all(cfg.output_dir);
  fs::remove_all(cfg2.output_dir);
}

TEST_CASE("unknown method name throws") {
  const auto cfg = quick_config();
  const Dataset ds = synth::generate(cfg.dgp);
  const auto ids = split(ds, cfg.train_fraction, 1);
  CHECK_THROWS_AS(method_pipeline("nope", subset(ds, ids.train_ids), subset(ds, ids.test_ids), cfg),
                  std::invalid_argument);
}

TEST_CASE("a failing method does not take down the others") {
  // An impossible gradient tolerance makes every MTGCN self-check fail.
  auto cfg = quick_config();
  cfg.mtgcn.train.gradient_tolerance = 0.0;
  const auto results = run_replication(cfg, 0);
  REQUIRE(results.size() == kAllMethods.size());
  for (const auto& r : results) {
    const bool uses_mtgcn = r.method == "proposed" || r.method == "mtgcn_only";
    CHECK(r.ok == !uses_mtgcn);
    if (uses_mtgcn) CHECK(!r.error.empty());
  }
}
