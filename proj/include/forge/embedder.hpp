#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "forge/dataset.hpp"
#include "forge/image.hpp"
#include "forge/metrics.hpp"
#include "forge/nn/layers.hpp"

#include <json.hpp>

namespace forge {

inline constexpr int kEmbeddingDim = 192;

// Fixed-length identity embedding source. Implementations return unit
// vectors and are deterministic; instances keep forward caches, so share one
// per thread rather than across threads.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Eigen::VectorXf embed(const Image& image) = 0;
  virtual int dim() const { return kEmbeddingDim; }
};

// Training-free fallback: hard-binarize at 0.5, mean-pool onto a fixed grid,
// center, and project through a seeded Gaussian matrix. Deterministic per
// seed; an exact image copy always scores 1.0 against itself.
class ProjectionEmbedder : public Embedder {
 public:
  explicit ProjectionEmbedder(std::uint64_t seed, int grid = 64);
  Eigen::VectorXf embed(const Image& image) override;

 private:
  int grid_;
  Eigen::MatrixXf projection_;  // (dim, grid*grid)
};

// Small fully convolutional CNN + global average pooling + dense head,
// L2-normalized. Accepts any input with dims divisible by 16.
class CnnEmbedder : public Embedder {
 public:
  CnnEmbedder(int base_channels, std::uint64_t seed);

  Eigen::VectorXf embed(const Image& image) override;

  // Batch entry points for loss graphs; columns of the result are unit
  // embeddings. backward() maps gradients w.r.t. the embeddings back to the
  // input (parameters still accumulate grads; freeze by not stepping them).
  Eigen::MatrixXf forward(const nn::Tensor& x, bool train);
  nn::Tensor backward(const Eigen::MatrixXf& g_embed);

  std::vector<nn::ParamRef> params();
  int base_channels() const { return base_channels_; }

  void save(const std::filesystem::path& path) const;
  static CnnEmbedder load(const std::filesystem::path& path);

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
  int base_channels_;
};

double match_score(const Eigen::VectorXf& a, const Eigen::VectorXf& b);

struct ScoreSet {
  std::vector<double> genuine;
  std::vector<double> imposter;
};

enum class Pairing { live_live, live_spoof };

struct ScoreDistributionConfig {
  Pairing pairing = Pairing::live_live;
  std::string spoof_material;  // live_spoof: restrict to one material ("" = all)
  long imposter_cap = 1000000;  // enumerate up to this, sample beyond
  std::uint64_t sample_seed = 99;
};

// Genuine = same-finger cross-impression pairs under the pairing rule;
// imposter = different-finger pairs, enumerated up to the cap and uniformly
// sampled beyond it. PairingError when no genuine pair exists.
ScoreSet score_distributions(const Dataset& dataset, Embedder& embedder,
                             const ScoreDistributionConfig& config);

struct TarAtFar {
  double far = 0.0;
  double threshold = 0.0;
  double tar = 0.0;
};

// For each target: smallest observed score tau with imposter-rate(tau) <=
// target, TAR = genuine fraction >= tau.
std::vector<TarAtFar> tar_at_far(const ScoreSet& scores,
                                 const std::vector<double>& far_targets);

void write_score_csv(const ScoreSet& scores, const std::string& label_prefix,
                     const std::filesystem::path& path, bool append = false);

struct LeakagePair {
  std::string synthetic_finger;
  int synthetic_impression = 0;
  std::string training_finger;
  int training_impression = 0;
  double score = 0.0;
};

struct LeakageReport {
  std::vector<LeakagePair> pairs;  // score >= threshold, descending score
  int flagged_fingers = 0;         // distinct synthetic fingers flagged
  double max_score = -1.0;
  long total_comparisons = 0;
  double threshold = 0.0;

  nlohmann::json to_json() const;
};

// Scores every (synthetic, training) pair; |synthetic| * |training|
// comparisons total.
LeakageReport leakage_check(const Dataset& synthetic, const Dataset& training,
                            Embedder& embedder, double threshold);

struct EmbedderTrainConfig {
  int base_channels = 8;
  int steps = 400;
  int triples = 4;  // (anchor, positive, negative) triples per step
  float lr = 1e-3f;
  float margin = 0.3f;
  std::uint64_t seed = 11;
};

// Margin-based contrastive training on a multi-impression dataset: pulls
// same-finger pairs together, pushes different-finger pairs below the margin.
CnnEmbedder train_embedder(const Dataset& dataset, const EmbedderTrainConfig& config);

}  // namespace forge
