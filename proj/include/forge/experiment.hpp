#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "forge/dataset.hpp"
#include "forge/detector.hpp"

namespace forge {

// The four training-set compositions of the augmentation study.
enum class Composition {
  synthetic_only,
  synthetic_plus_real_live,
  real_only,
  real_plus_synthetic,
};

std::string composition_name(Composition c);
std::vector<Composition> all_compositions();

struct AugmentationConfig {
  std::vector<Composition> compositions = all_compositions();
  std::vector<double> real_fractions = {0, 25, 50, 75, 100};  // percent
  double fdr_target = 0.002;
  DetectorTrainConfig detector;  // per-cell training settings
  std::uint64_t seed = 17;
  int jobs = 1;  // parallel cells; results are merged deterministically
  std::filesystem::path out_dir;
};

struct ExperimentCell {
  std::string composition;
  double real_fraction = 0.0;
  std::string eval_set;
  double tdr = 0.0;
  double threshold = 0.0;
  bool skipped = false;
  std::string skip_reason;
};

struct AugmentationResult {
  std::vector<ExperimentCell> cells;
  std::filesystem::path results_csv;
  std::filesystem::path plot_csv;  // real-fraction sweep for real+synthetic
};

struct NamedEvalSet {
  std::string name;
  const Dataset* dataset;  // test-split records are scored
};

// Trains one whole-image detector per (composition, real-fraction) cell and
// reports TDR at the target FDR on every eval set. `real` and `synthetic`
// must carry different provenance flags (ExperimentError otherwise).
AugmentationResult run_augmentation_experiment(const Dataset& real,
                                               const Dataset& synthetic,
                                               const std::vector<NamedEvalSet>& eval_sets,
                                               const AugmentationConfig& config);

}  // namespace forge
