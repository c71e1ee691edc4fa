#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "forge/config.hpp"
#include "forge/dataset.hpp"

namespace forge {

struct GenerationConfig {
  int n_fingers = 1;
  int impressions_per_finger = 1;
  std::vector<std::string> materials;  // each needs a renderer checkpoint
  std::uint64_t root_seed = 0;
  std::filesystem::path masterprint_checkpoint;
  std::filesystem::path basis_file;
  std::map<std::string, std::filesystem::path> renderer_checkpoints;
  std::filesystem::path out_root;
  std::string split = "train";
  bool dump_warped = false;  // also write the shared warped binary per impression
  int output_size = 512;

  static GenerationConfig from_file(const std::filesystem::path& path);
  void validate() const;  // ConfigError on missing checkpoints etc.
};

// Deterministic three-stage generation: one master print per finger, one
// pose + distortion per impression (shared by every material), one texture
// latent per (finger, impression, material). Writes PNGs + manifest.csv under
// out_root; re-running with the same config skips images already on disk and
// reproduces the identical dataset.
Dataset generate_dataset(const GenerationConfig& config);

struct ReportConfig {
  std::filesystem::path synthetic_root, synthetic_manifest;
  std::filesystem::path real_root, real_manifest;
  std::filesystem::path out_dir;
  std::filesystem::path embedder_checkpoint;  // empty -> projection embedder
  std::uint64_t projection_seed = 21;
  double leakage_threshold = 0.9;
  std::vector<double> far_targets = {0.5, 0.1, 0.01};
  long imposter_cap = 200000;
  std::string nfiq2_binary;  // optional external scorer

  static ReportConfig from_file(const std::filesystem::path& path);
};

// Runs the quantitative protocol: fingerprint stats (both datasets), match
// score distributions with TAR@FAR (live-live, plus live-spoof per synthetic
// material), and the identity-leakage audit. Emits stats.csv, scores.csv,
// tars.csv, leakage.json and a summary.json index; sub-step failures are
// recorded in the summary without aborting the bundle.
std::filesystem::path replicate_eval_protocol(const ReportConfig& config);

}  // namespace forge
