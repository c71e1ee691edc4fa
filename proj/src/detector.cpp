#include "forge/detector.hpp"

#include <algorithm>
#include <fstream>

#include "forge/binarizer.hpp"
#include "forge/container.hpp"
#include "forge/errors.hpp"
#include "forge/nn/checkpoint.hpp"
#include "forge/nn/losses.hpp"
#include "forge/nn/optimizer.hpp"
#include "forge/nn/tensor.hpp"
#include "forge/random.hpp"

namespace forge {

std::vector<Image> extract_minutiae_patches(const Image& image,
                                            const std::vector<Minutia>& minutiae,
                                            int size, int max_patches) {
  require(!minutiae.empty(), "EmptyPatchSet", "no minutiae to center patches on");
  const int h = static_cast<int>(image.rows());
  const int w = static_cast<int>(image.cols());
  require(h >= size && w >= size, "EmptyPatchSet",
          "image smaller than the patch size");
  for (const auto& m : minutiae)
    require(m.x >= 0 && m.x < w && m.y >= 0 && m.y < h, "EmptyPatchSet",
            "minutia outside image bounds");

  // Highest quality first; deterministic tie-break on position.
  std::vector<Minutia> order = minutiae;
  std::sort(order.begin(), order.end(), [](const Minutia& a, const Minutia& b) {
    if (a.quality != b.quality) return a.quality > b.quality;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  if (static_cast<int>(order.size()) > max_patches) order.resize(max_patches);

  const int half = size / 2;
  std::vector<Image> patches;
  patches.reserve(order.size());
  for (const auto& m : order) {
    // Clamp the window so a border minutia still yields a full-size patch.
    const int x0 = std::clamp(m.x - half, 0, w - size);
    const int y0 = std::clamp(m.y - half, 0, h - size);
    Image patch(size, size);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) patch(y, x) = image(y0 + y, x0 + x);
    patches.push_back(std::move(patch));
  }
  return patches;
}

void validate_fusion(const FusionConfig& config) {
  require(config.w_patch >= 0 && config.w_whole >= 0, "ParamsError",
          "fusion weights must be non-negative");
  require(std::abs(config.w_patch + config.w_whole - 1.0) < 1e-9, "ParamsError",
          "fusion weights must sum to 1");
}

// ---------------------------------------------------------------------------
// Branch network

struct DetectorBranch::Impl {
  nn::Sequential body;
  std::string backbone;

  Impl(const std::string& kind, std::uint64_t seed) : backbone(kind) {
    Rng rng(seed);
    if (kind == "small_cnn") {
      body.add<nn::Conv2d>(1, 8, 3, rng);
      body.add<nn::LeakyReLU>();
      body.add<nn::AvgPool2>();
      body.add<nn::Conv2d>(8, 16, 3, rng);
      body.add<nn::LeakyReLU>();
      body.add<nn::AvgPool2>();
      body.add<nn::Conv2d>(16, 32, 3, rng);
      body.add<nn::LeakyReLU>();
      body.add<nn::AvgPool2>();
      body.add<nn::GlobalAvgPool>();
      body.add<nn::Flatten>();
      body.add<nn::Dense>(32, 1, rng);
    } else if (kind == "inception_mini") {
      body.add<nn::Conv2d>(1, 12, 3, rng);
      body.add<nn::LeakyReLU>();
      body.add<nn::AvgPool2>();
      auto* b1 = body.add<nn::InceptionBlock>(12, 8, 6, 12, 4, rng);
      body.add<nn::AvgPool2>();
      auto* b2 = body.add<nn::InceptionBlock>(b1->out_channels(), 12, 8, 16, 4, rng);
      body.add<nn::AvgPool2>();
      body.add<nn::GlobalAvgPool>();
      body.add<nn::Flatten>();
      body.add<nn::Dense>(b2->out_channels(), 1, rng);
    } else {
      fail("TrainConfigError", "unknown backbone '" + kind + "'");
    }
  }

  std::vector<nn::ParamRef> params() {
    std::vector<nn::ParamRef> out;
    body.collect(out, "net");
    return out;
  }
};

double DetectorBranch::score_image(const Image& image) {
  require(trained_, "ParamsError", "detector branch is untrained");
  const Image resized = resize_short_crop(image, input_size_);
  const nn::Tensor logit = impl_->body.forward(nn::from_image(resized), false);
  return nn::sigmoid(logit.d(0, 0));
}

double DetectorBranch::score_patch(const Image& patch) {
  require(trained_, "ParamsError", "detector branch is untrained");
  Image in = patch;
  const int want = input_size_;
  if (patch.rows() != want || patch.cols() != want)
    in = resize_short_crop(patch, want);
  const nn::Tensor logit = impl_->body.forward(nn::from_image(in), false);
  return nn::sigmoid(logit.d(0, 0));
}

void DetectorBranch::save(const std::filesystem::path& path) const {
  require(trained_, "ParamsError", "refusing to save an untrained branch");
  Container c("detector_branch");
  c.meta()["kind"] = kind_ == DetectorBranchKind::whole ? "whole" : "patch";
  c.meta()["backbone"] = backbone_;
  c.meta()["input_size"] = input_size_;
  auto refs = impl_->params();
  nn::save_params(c, refs);
  c.save(path);
}

DetectorBranch DetectorBranch::load(const std::filesystem::path& path) {
  const Container c = Container::load(path);
  require(c.kind() == "detector_branch", "ParamsError",
          path.string() + " is not a detector checkpoint");
  DetectorBranch branch;
  branch.backbone_ = c.meta().at("backbone").get<std::string>();
  branch.kind_ = c.meta().at("kind").get<std::string>() == "whole"
                     ? DetectorBranchKind::whole
                     : DetectorBranchKind::patch;
  branch.input_size_ = c.meta().at("input_size").get<int>();
  branch.impl_ = std::make_shared<Impl>(branch.backbone_, 0);
  auto refs = branch.impl_->params();
  nn::load_params(c, refs);
  branch.trained_ = true;
  return branch;
}

std::uint64_t DetectorBranch::weights_hash() const {
  require(impl_ != nullptr, "ParamsError", "empty branch");
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto refs = impl_->params();
  for (const auto& p : refs) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p.value->data());
    const size_t len = static_cast<size_t>(p.value->size()) * sizeof(float);
    for (size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Training

DetectorTrainResult train_detector(const Dataset& dataset, DetectorBranchKind kind,
                                   const DetectorTrainConfig& config) {
  bool has_live = false, has_spoof = false;
  for (const auto& r : dataset.records) (r.is_live ? has_live : has_spoof) = true;
  require(has_live && has_spoof, "TrainConfigError",
          "detector training needs both live and spoof records");

  Rng rng(config.seed);

  // Deterministic shuffled split into train/validation.
  std::vector<int> order(dataset.records.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.below(i)]);
  const int val_count = std::max(
      2, static_cast<int>(config.val_fraction * static_cast<double>(order.size())));
  std::vector<int> val_idx(order.begin(), order.begin() + val_count);
  std::vector<int> train_idx(order.begin() + val_count, order.end());
  // Both classes must survive the split.
  bool tl = false, ts = false;
  for (int i : train_idx) (dataset.records[i].is_live ? tl : ts) = true;
  require(tl && ts, "TrainConfigError", "training split lost a class; dataset too small");

  const int in_size =
      kind == DetectorBranchKind::whole ? config.input_size : config.patch_size;

  // Materialize training inputs: resized whole images, or per-image cached
  // minutiae patches.
  std::vector<std::pair<Image, float>> examples;
  const auto add_record = [&](int idx, std::vector<std::pair<Image, float>>& sink) {
    const auto& r = dataset.records[idx];
    const Image img = dataset.load_image(r);
    const float label = r.is_live ? 0.0f : 1.0f;
    if (kind == DetectorBranchKind::whole) {
      sink.push_back({resize_short_crop(img, in_size), label});
      return;
    }
    const Image binary = classical_binarize(img);
    const auto minutiae = extract_minutiae(binary);
    if (minutiae.empty()) return;  // documented fallback: patch branch skips it
    for (auto& p :
         extract_minutiae_patches(img, minutiae, config.patch_size, config.max_patches))
      sink.push_back({std::move(p), label});
  };

  std::vector<std::pair<Image, float>> train_set, val_set;
  for (int i : train_idx) add_record(i, train_set);
  for (int i : val_idx) add_record(i, val_set);
  require(!train_set.empty() && !val_set.empty(), "TrainConfigError",
          "no usable examples after preprocessing");

  DetectorTrainResult result;
  result.branch.kind_ = kind;
  result.branch.backbone_ = config.backbone;
  result.branch.input_size_ = in_size;
  result.branch.impl_ = std::make_shared<DetectorBranch::Impl>(config.backbone, rng.next_u64());

  nn::Adam opt(result.branch.impl_->params(), config.lr);
  opt.set_step_decay(config.decay_every, config.decay_gamma);

  std::ofstream log;
  if (!config.loss_log.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(config.loss_log.parent_path(), ec);
    log.open(config.loss_log, std::ios::trunc);
    log << "step,loss\n";
  }

  const int b = config.batch;
  for (int step = 0; step < config.steps; ++step) {
    nn::Tensor x(b, 1, in_size, in_size);
    Eigen::MatrixXf target(1, b);
    for (int s = 0; s < b; ++s) {
      const auto& [img, label] = train_set[rng.below(train_set.size())];
      nn::set_sample_image(x, s, img);
      target(0, s) = label;
    }
    opt.zero_grad();
    const nn::Tensor logits = result.branch.impl_->body.forward(x, true);
    Eigen::MatrixXf grad;
    const double loss = nn::bce_with_logits(logits.d, target, grad);
    nn::Tensor gl = logits;
    gl.d = grad;
    result.branch.impl_->body.backward(gl);
    opt.step();
    result.losses.push_back(loss);
    if (log.is_open()) log << step << ',' << loss << "\n";
  }
  result.branch.trained_ = true;

  long correct = 0;
  for (const auto& [img, label] : val_set) {
    const nn::Tensor logit = result.branch.impl_->body.forward(nn::from_image(img), false);
    const bool spoof = nn::sigmoid(logit.d(0, 0)) >= 0.5;
    correct += spoof == (label > 0.5f) ? 1 : 0;
  }
  result.val_accuracy = static_cast<double>(correct) / static_cast<double>(val_set.size());
  return result;
}

double spoof_score(DetectorBranch& whole, DetectorBranch& patch,
                   const FusionConfig& fusion, const Image& image,
                   const std::vector<Minutia>& minutiae) {
  validate_fusion(fusion);
  require(whole.trained(), "ParamsError", "whole-image branch is untrained");
  const double whole_score = whole.score_image(image);
  if (minutiae.empty()) return whole_score;  // fallback: no patches to score

  require(patch.trained(), "ParamsError", "patch branch is untrained");
  const auto patches = extract_minutiae_patches(image, minutiae);
  double acc = 0.0;
  for (const auto& p : patches) acc += patch.score_patch(p);
  const double patch_score = acc / static_cast<double>(patches.size());
  return fusion.w_patch * patch_score + fusion.w_whole * whole_score;
}

TdrAtFdr tdr_at_fdr(const DetectionScoreSet& scores, double fdr_target) {
  require(!scores.live_scores.empty() && !scores.spoof_scores.empty(), "MetricError",
          "live and spoof score lists must be non-empty");
  const OperatingPoint op =
      sweep_threshold(scores.spoof_scores, scores.live_scores, fdr_target);
  return {fdr_target, op.threshold, op.positive_rate};
}

}  // namespace forge
