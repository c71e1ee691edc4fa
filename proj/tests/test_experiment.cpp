#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <set>

#include "forge/errors.hpp"
#include "forge/experiment.hpp"
#include "toy.hpp"

using namespace forge;

namespace {

struct Fixture {
  Dataset real_train, synthetic, eval;
};

// Real and synthetic toy domains with a texture gap; the eval set follows the
// real distribution so purely synthetic training underperforms on it.
Fixture make_fixture(const std::filesystem::path& dir) {
  Fixture f;
  f.real_train = testsupport::write_toy_dataset(dir / "real", 8, 1,
                                                {"live", "playdoh"}, 60, 64, "train",
                                                0.0, "real");
  f.synthetic = testsupport::write_toy_dataset(dir / "synth", 8, 1,
                                               {"live", "playdoh"}, 61, 64, "train",
                                               0.08, "synthetic");
  f.eval = testsupport::write_toy_dataset(dir / "eval", 8, 1, {"live", "playdoh"}, 62,
                                          64, "test", 0.0, "real");
  return f;
}

AugmentationConfig small_config(const std::filesystem::path& out) {
  AugmentationConfig cfg;
  cfg.real_fractions = {0, 50, 100};
  cfg.detector.input_size = 32;
  cfg.detector.steps = 30;
  cfg.detector.batch = 4;
  cfg.detector.val_fraction = 0.25;
  cfg.fdr_target = 0.25;  // small eval sets need a loose operating point
  cfg.out_dir = out;
  return cfg;
}

}  // namespace

TEST_CASE("experiment: four compositions, sweep points, vacuous cells") {
  const auto dir = testsupport::make_temp_dir("exp_shape");
  const Fixture f = make_fixture(dir);

  const auto cfg = small_config(dir / "out");
  const auto result = run_augmentation_experiment(
      f.real_train, f.synthetic, {{"toy_eval", &f.eval}}, cfg);

  // every (composition, fraction) pair accounted for
  std::set<std::pair<std::string, double>> seen;
  for (const auto& c : result.cells) seen.insert({c.composition, c.real_fraction});
  CHECK(seen.size() == 4 * 3);

  // real_only at fraction 0 is recorded as skipped with a reason
  bool found_skip = false;
  for (const auto& c : result.cells)
    if (c.composition == "real_only" && c.real_fraction == 0 && c.skipped) {
      found_skip = true;
      CHECK(c.skip_reason == "empty_training_set");
    }
  CHECK(found_skip);

  // CSV artifacts exist with the expected headers
  std::ifstream csv(result.results_csv);
  std::string header;
  std::getline(csv, header);
  CHECK(header == "composition,real_fraction,eval_set,tdr_at_fdr_0.2pct,threshold");

  std::ifstream plot(result.plot_csv);
  std::getline(plot, header);
  CHECK(header == "real_fraction,eval_set,tdr_at_fdr_0.2pct");
  int plot_rows = 0;
  std::string line;
  while (std::getline(plot, line))
    if (!line.empty()) ++plot_rows;
  CHECK(plot_rows == 3);  // one sweep row per fraction for real_plus_synthetic
}

TEST_CASE("experiment: identical provenance flags are ExperimentError") {
  const auto dir = testsupport::make_temp_dir("exp_prov");
  Fixture f = make_fixture(dir);
  Dataset bad = f.synthetic;
  bad.provenance = f.real_train.provenance;
  try {
    run_augmentation_experiment(f.real_train, bad, {{"e", &f.eval}},
                                small_config(dir / "out"));
    FAIL("expected ExperimentError");
  } catch (const Error& e) {
    CHECK(e.code() == "ExperimentError");
  }
}

TEST_CASE("experiment: deterministic across runs") {
  const auto dir = testsupport::make_temp_dir("exp_det");
  const Fixture f = make_fixture(dir);
  AugmentationConfig cfg = small_config(dir / "out1");
  cfg.compositions = {Composition::real_plus_synthetic};
  cfg.real_fractions = {100};
  cfg.detector.steps = 20;

  const auto a = run_augmentation_experiment(f.real_train, f.synthetic,
                                             {{"e", &f.eval}}, cfg);
  cfg.out_dir = dir / "out2";
  const auto b = run_augmentation_experiment(f.real_train, f.synthetic,
                                             {{"e", &f.eval}}, cfg);
  REQUIRE(a.cells.size() == b.cells.size());
  for (size_t i = 0; i < a.cells.size(); ++i) {
    CHECK(a.cells[i].tdr == b.cells[i].tdr);
    CHECK(a.cells[i].threshold == b.cells[i].threshold);
  }
}
