#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "forge/binarizer.hpp"
#include "forge/dataset.hpp"
#include "forge/embedder.hpp"
#include "forge/image.hpp"
#include "forge/nn/losses.hpp"
#include "forge/random.hpp"

namespace forge {

inline constexpr int kTextureLatentDim = 128;

struct TextureLatent {
  Eigen::VectorXf z;  // length 128, standard normal
};

TextureLatent sample_texture_latent(std::uint64_t seed);

// Generator-side loss weights; (1, 2, 10) unless overridden.
struct LossWeights {
  double adv = 1.0;
  double dp = 2.0;
  double pixel = 10.0;
};

// Loss breakdown for one batch:
//   dp      = 0.5 * sum (R - R_hat)^2            embedding distance
//   pixel   = 0.5 * sum (I_w - I_w_hat)^2        binary-image distance
//   adv_g   = -mean log sigmoid(d_fake)          generator fooling term
//   adv_d   = two-sided discriminator loss
//   total_g = w.adv * adv_g + w.dp * dp + w.pixel * pixel
//   total_d = adv_d
struct RendererLosses {
  double adv_g = 0.0;
  double adv_d = 0.0;
  double dp = 0.0;
  double pixel = 0.0;
  double total_g = 0.0;
  double total_d = 0.0;
};

double embedding_loss(const Eigen::VectorXf& embed_real, const Eigen::VectorXf& embed_fake);
double pixel_loss(const Image& binary_truth, const Image& binary_rendered);
double combine_generator_loss(double adv, double dp, double pixel,
                              const LossWeights& w = {});

RendererLosses renderer_losses(const Eigen::VectorXf& embed_real,
                               const Eigen::VectorXf& embed_fake,
                               const Image& binary_truth, const Image& binary_rendered,
                               const Eigen::VectorXf& d_real,
                               const Eigen::VectorXf& d_fake,
                               const LossWeights& w = {});

// Encoder-decoder texture network. The texture latent is mapped by a two
// layer MLP to per-site (gamma, beta) pairs that modulate instance norms in
// the decoder. Fully convolutional: trains at the corpus resolution and
// renders 512x512 warped binaries unchanged.
class TextureRenderer {
 public:
  TextureRenderer(int base_channels, std::uint64_t seed);

  // Deterministic in (params, warped_binary, latent). Input dims must be
  // divisible by 8 (RenderError otherwise); output matches the input shape.
  Image render(const Image& warped_binary, const TextureLatent& latent);

  const std::string& material() const { return material_; }
  const std::string& parent() const { return parent_; }
  void set_material(const std::string& m) { material_ = m; }
  void set_parent(const std::string& p) { parent_ = p; }

  // Deep copy of the weights; fine-tuning must not mutate its parent.
  TextureRenderer clone() const;

  void save(const std::filesystem::path& path, int step = 0) const;
  static TextureRenderer load(const std::filesystem::path& path);

  int base_channels() const { return base_channels_; }

  struct Nets;
  Nets& nets() { return *nets_; }

 private:
  std::shared_ptr<Nets> nets_;
  int base_channels_ = 8;
  std::string material_ = "untrained";
  std::string parent_;

  friend struct RendererTrainer;
};

struct RendererTrainConfig {
  int base_channels = 8;
  int disc_channels = 24;
  int train_resolution = 256;  // images are short-side resized + cropped
  int steps = 500;
  int batch = 2;
  float lr_g = 2e-4f;
  float lr_d = 2e-4f;
  LossWeights weights;
  std::uint64_t seed = 3;
  std::filesystem::path loss_log;  // CSV "step,L_adv,L_dp,L_i"
  int finetune_epochs = 3;         // per-material fine-tuning length
};

struct RendererTrainResult {
  TextureRenderer renderer;
  std::vector<double> adv_log, dp_log, pixel_log;
};

// Trains one texture network on the records matching `material`:
//   "live"      -> live records          (pretrain / live branch)
//   "all_spoof" -> every non-live record (spoof branch)
//   otherwise   -> one spoof material; requires `init` (LineageError if
//                  absent) and runs config.finetune_epochs epochs.
// The embedder and binarizer stay frozen; only their input gradients flow.
RendererTrainResult train_renderer(const Dataset& dataset,
                                   const std::optional<TextureRenderer>& init,
                                   const std::string& material, CnnEmbedder& embedder,
                                   Binarizer& binarizer,
                                   const RendererTrainConfig& config);

// Three-tier schedule: pretrain on lives, branch into live + all-spoof
// models, then fine-tune one checkpoint per spoof material from the all-spoof
// model. Writes checkpoints under out_dir and a lineage JSON
// (material -> {path, parent}). Returns the lineage file path.
std::filesystem::path run_renderer_schedule(const Dataset& dataset,
                                            CnnEmbedder& embedder, Binarizer& binarizer,
                                            const RendererTrainConfig& config,
                                            const std::filesystem::path& out_dir);

}  // namespace forge
