#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "forge/image.hpp"
#include "forge/nn/layers.hpp"

namespace forge {

// Local-mean adaptive threshold (window 25 px, offset 0.02, dark pixels are
// ridges) followed by a 3x3 binary median despeckle. Low local variance
// (< 1e-4) marks background. Returns a strict {0,1} image, ridges = 1.
Image classical_binarize(const Image& gray);

// Foreground/background mask from the same variance rule (1 = foreground).
Image segment_foreground(const Image& gray);

// Resize the short side to 256, center-crop and binarize; the standard
// preparation for master-print training data.
Image prepare_binary_256(const Image& gray);

// Convolutional autoencoder binarizer. Fully convolutional U-shape with four
// 2x down/up levels and additive skips everywhere except the lowest level, so
// it runs at any input divisible by 16; 512x512 inputs are processed as four
// 256x256 tiles to match the trained statistics. The soft output is
// differentiable w.r.t. the input, which is what the texture renderer's pixel
// loss needs.
class Binarizer {
 public:
  Binarizer(int base_channels, std::uint64_t seed);

  Image binarize(const Image& gray);  // soft map in [0,1]

  // Loss-graph entry points (single tile, c=1 tensors).
  nn::Tensor forward_logits(const nn::Tensor& x, bool train);
  nn::Tensor forward_soft(const nn::Tensor& x, bool train);
  nn::Tensor backward_soft(const nn::Tensor& gy);
  nn::Tensor backward_logits(const nn::Tensor& gy);

  std::vector<nn::ParamRef> params();
  int base_channels() const { return base_channels_; }

  void save(const std::filesystem::path& path, int step = 0) const;
  static Binarizer load(const std::filesystem::path& path);

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
  int base_channels_;
};

struct BinarizerTrainConfig {
  int base_channels = 8;
  int steps = 2000;
  int batch = 4;
  int crop = 96;  // random training crops; 0 trains on full images
  float lr = 1e-3f;
  std::uint64_t seed = 7;
  int log_every = 50;
  std::filesystem::path loss_log;  // optional CSV "step,loss"
};

struct BinarizerTrainResult {
  Binarizer net;
  std::vector<double> losses;  // one entry per step
  double final_loss = 0.0;
};

// Supervised training on (grayscale, binary) pairs with mean per-pixel
// binary cross-entropy. Pairs must be same-shape and strictly {0,1} targets.
BinarizerTrainResult train_binarizer(const std::vector<std::pair<Image, Image>>& pairs,
                                     const BinarizerTrainConfig& config);

// Fraction of pixels where hard(net output) matches the {0,1} target.
double binarizer_accuracy(Binarizer& net, const std::vector<std::pair<Image, Image>>& pairs);

}  // namespace forge
