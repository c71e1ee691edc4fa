#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "forge/dataset.hpp"
#include "forge/image.hpp"
#include "forge/nn/losses.hpp"
#include "forge/random.hpp"

namespace forge {

inline constexpr int kIdentityLatentDim = 256;
inline constexpr int kMasterPrintSize = 256;

struct IdentityLatent {
  Eigen::VectorXf z;  // length 256, standard normal
};

// 256 i.i.d. standard-normal entries, fully determined by the seed.
IdentityLatent sample_identity_latent(std::uint64_t seed);

// Binary ridge map of one identity. Soft values in [0,1]; hardening happens
// only at export.
struct MasterPrint {
  Image image;  // 256x256, [0,1]
  float threshold = 0.5f;

  Image hard() const {
    Image out(image.rows(), image.cols());
    for (long i = 0; i < image.size(); ++i)
      out.data()[i] = image.data()[i] >= threshold ? 1.0f : 0.0f;
    return out;
  }
};

struct MasterGanConfig {
  int base_channels = 64;  // channels at the 4x4 base; halved per up-block
  int min_channels = 4;
  int steps = 500;
  int batch = 4;
  float lr_g = 2e-4f;
  float lr_d = 2e-4f;
  std::uint64_t seed = 1;
  std::filesystem::path loss_log;  // optional CSV "step,loss_G,loss_D"
};

// Stage-1 GAN: residual up-sampling generator from a 4x4 base through six
// 2x blocks to 256x256, with a mirrored residual down-sampling discriminator.
class MasterPrintGan {
 public:
  MasterPrintGan(int base_channels, int min_channels, std::uint64_t seed);

  // Pure function of (params, z).
  MasterPrint generate(const IdentityLatent& latent);

  void save(const std::filesystem::path& path, int step = 0) const;
  static MasterPrintGan load(const std::filesystem::path& path);

  int base_channels() const { return base_channels_; }
  int min_channels() const { return min_channels_; }
  int step() const { return step_; }

  struct Nets;  // generator + discriminator internals
  Nets& nets() { return *nets_; }

 private:
  std::shared_ptr<Nets> nets_;
  int base_channels_;
  int min_channels_;
  int step_ = 0;

  friend struct MasterGanTrainer;
};

// (loss_G, loss_D) and logit gradients for score batches; thin wrapper over
// the shared two-sided loss with its +-30 logit clamp.
nn::GanLossResult adversarial_loss(const Eigen::VectorXf& d_real,
                                   const Eigen::VectorXf& d_fake);

struct MasterGanTrainResult {
  MasterPrintGan gan;
  std::vector<double> loss_g;
  std::vector<double> loss_d;
};

// Trains on live-only, pre-binarized 256x256 images. A spoof record or a
// non-binary image fails with TrainConfigError.
MasterGanTrainResult train_masterprint_gan(const Dataset& dataset,
                                           const MasterGanConfig& config);

}  // namespace forge
