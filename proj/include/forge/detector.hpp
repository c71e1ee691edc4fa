#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "forge/dataset.hpp"
#include "forge/image.hpp"
#include "forge/metrics.hpp"
#include "forge/minutiae.hpp"

namespace forge {

inline constexpr int kPatchSize = 96;

// Patches centered on minutiae (edge-clamped so the window stays inside),
// ordered by minutia quality descending, at most max_patches. Zero minutiae
// is EmptyPatchSet; callers fall back to the whole-image score.
std::vector<Image> extract_minutiae_patches(const Image& image,
                                            const std::vector<Minutia>& minutiae,
                                            int size = kPatchSize, int max_patches = 20);

// Weighted fusion of the two branch scores; defaults favor the patch branch.
struct FusionConfig {
  double w_patch = 0.8;
  double w_whole = 0.2;
};

void validate_fusion(const FusionConfig& config);

enum class DetectorBranchKind { whole, patch };

struct DetectorTrainConfig {
  std::string backbone = "small_cnn";  // or "inception_mini"
  int input_size = 96;                 // whole branch resize target
  int patch_size = kPatchSize;
  int max_patches = 8;  // training patches cached per image
  float lr = 0.01f;     // defaults follow the full-scale recipe
  int decay_every = 500;
  float decay_gamma = 0.5f;
  int steps = 2000;          // desk-scale default
  int full_scale_steps = 200000;  // documented full-scale setting
  int batch = 8;
  double val_fraction = 0.2;
  std::uint64_t seed = 5;
  std::filesystem::path loss_log;  // CSV "step,loss"
};

// One branch of the two-branch detector: a small binary classifier over
// whole images or minutiae patches. Scores are spoof probabilities
// (higher = more spoof-like).
class DetectorBranch {
 public:
  DetectorBranch() = default;

  double score_image(const Image& image);  // resizes to the branch input
  double score_patch(const Image& patch);  // expects patch-size input

  bool trained() const { return trained_; }
  DetectorBranchKind kind() const { return kind_; }

  void save(const std::filesystem::path& path) const;
  static DetectorBranch load(const std::filesystem::path& path);

  // Stable digest of all parameters (for reproducibility checks).
  std::uint64_t weights_hash() const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
  DetectorBranchKind kind_ = DetectorBranchKind::whole;
  std::string backbone_;
  int input_size_ = 96;
  bool trained_ = false;

  friend struct DetectorTrainer;
};

struct DetectorTrainResult {
  DetectorBranch branch;
  std::vector<double> losses;
  double val_accuracy = 0.0;
};

// Binary live/spoof training. The dataset must contain both classes
// (TrainConfigError otherwise). Deterministic per seed.
DetectorTrainResult train_detector(const Dataset& dataset, DetectorBranchKind kind,
                                   const DetectorTrainConfig& config);

// Fused spoof score: w_patch * mean(patch scores) + w_whole * whole score.
// With no minutiae the whole-image score is returned alone. ParamsError when
// a required branch is untrained.
double spoof_score(DetectorBranch& whole, DetectorBranch& patch,
                   const FusionConfig& fusion, const Image& image,
                   const std::vector<Minutia>& minutiae);

struct DetectionScoreSet {
  std::vector<double> live_scores;
  std::vector<double> spoof_scores;  // higher = more spoof-like
};

struct TdrAtFdr {
  double fdr = 0.0;
  double threshold = 0.0;
  double tdr = 0.0;
};

// Smallest observed score tau with live-rate(tau) <= fdr_target; TDR is the
// spoof fraction >= tau.
TdrAtFdr tdr_at_fdr(const DetectionScoreSet& scores, double fdr_target = 0.002);

}  // namespace forge
