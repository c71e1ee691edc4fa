#include "forge/embedder.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "forge/container.hpp"
#include "forge/errors.hpp"
#include "forge/nn/checkpoint.hpp"
#include "forge/nn/optimizer.hpp"
#include "forge/nn/tensor.hpp"
#include "forge/random.hpp"

namespace forge {

// ---------------------------------------------------------------------------
// ProjectionEmbedder

ProjectionEmbedder::ProjectionEmbedder(std::uint64_t seed, int grid) : grid_(grid) {
  Rng rng(seed);
  projection_.resize(kEmbeddingDim, grid * grid);
  for (long i = 0; i < projection_.size(); ++i) projection_.data()[i] = rng.normal_f();
}

Eigen::VectorXf ProjectionEmbedder::embed(const Image& image) {
  // Hard features: binarize at 0.5, pool to the grid, center at 0.
  const Image small = resize_bilinear(image, grid_, grid_);
  Eigen::VectorXf feat(grid_ * grid_);
  for (int y = 0; y < grid_; ++y)
    for (int x = 0; x < grid_; ++x)
      feat[y * grid_ + x] = small(y, x) >= 0.5f ? 0.5f : -0.5f;
  Eigen::VectorXf v = projection_ * feat;
  const float norm = v.norm();
  if (norm > 0.0f) v /= norm;
  return v;
}

// ---------------------------------------------------------------------------
// CnnEmbedder

struct CnnEmbedder::Impl {
  nn::Sequential body;
  nn::Dense head;
  Eigen::MatrixXf raw_;    // pre-normalization embeddings of the last forward
  Eigen::MatrixXf unit_;   // normalized embeddings

  Impl(int c, Rng& rng) : head(4 * c, kEmbeddingDim, rng) {
    body.add<nn::Conv2d>(1, c, 3, rng);
    body.add<nn::LeakyReLU>();
    body.add<nn::AvgPool2>();
    body.add<nn::Conv2d>(c, 2 * c, 3, rng);
    body.add<nn::LeakyReLU>();
    body.add<nn::AvgPool2>();
    body.add<nn::Conv2d>(2 * c, 2 * c, 3, rng);
    body.add<nn::LeakyReLU>();
    body.add<nn::AvgPool2>();
    body.add<nn::Conv2d>(2 * c, 4 * c, 3, rng);
    body.add<nn::LeakyReLU>();
    body.add<nn::AvgPool2>();
    body.add<nn::GlobalAvgPool>();
    body.add<nn::Flatten>();
  }
};

CnnEmbedder::CnnEmbedder(int base_channels, std::uint64_t seed)
    : base_channels_(base_channels) {
  Rng rng(seed);
  impl_ = std::make_shared<Impl>(base_channels, rng);
}

Eigen::MatrixXf CnnEmbedder::forward(const nn::Tensor& x, bool train) {
  require(x.h % 16 == 0 && x.w % 16 == 0, "ParamsError",
          "embedder input dims must be divisible by 16");
  const nn::Tensor feat = impl_->body.forward(x, train);
  const nn::Tensor raw = impl_->head.forward(feat, train);
  Eigen::MatrixXf unit = raw.d;
  for (int s = 0; s < raw.n; ++s) {
    const float norm = unit.col(s).norm();
    if (norm > 0.0f) unit.col(s) /= norm;
  }
  if (train) {
    impl_->raw_ = raw.d;
    impl_->unit_ = unit;
  }
  return unit;
}

nn::Tensor CnnEmbedder::backward(const Eigen::MatrixXf& g_embed) {
  // Through y = v / |v|:  dL/dv = (g - y (y . g)) / |v|
  nn::Tensor g_raw(static_cast<int>(g_embed.cols()), kEmbeddingDim, 1, 1);
  for (int s = 0; s < g_embed.cols(); ++s) {
    const float norm = impl_->raw_.col(s).norm();
    const Eigen::VectorXf y = impl_->unit_.col(s);
    const Eigen::VectorXf g = g_embed.col(s);
    g_raw.d.col(s) = (g - y * y.dot(g)) / std::max(norm, 1e-12f);
  }
  return impl_->body.backward(impl_->head.backward(g_raw));
}

Eigen::VectorXf CnnEmbedder::embed(const Image& image) {
  // Pool large inputs down so embedding cost stays flat across resolutions.
  Image small = downsample_to(image, 128);
  const int h = static_cast<int>(small.rows()), w = static_cast<int>(small.cols());
  if (h % 16 != 0 || w % 16 != 0)
    small = center_crop(small, (h / 16) * 16, (w / 16) * 16);
  require(small.rows() >= 16 && small.cols() >= 16, "ParamsError",
          "image too small to embed");
  return forward(nn::from_image(small), false).col(0);
}

std::vector<nn::ParamRef> CnnEmbedder::params() {
  std::vector<nn::ParamRef> out;
  impl_->body.collect(out, "body");
  impl_->head.collect(out, "head");
  return out;
}

void CnnEmbedder::save(const std::filesystem::path& path) const {
  Container c("embedder");
  c.meta()["base_channels"] = base_channels_;
  c.meta()["dim"] = kEmbeddingDim;
  auto refs = const_cast<CnnEmbedder*>(this)->params();
  nn::save_params(c, refs);
  c.save(path);
}

CnnEmbedder CnnEmbedder::load(const std::filesystem::path& path) {
  const Container c = Container::load(path);
  require(c.kind() == "embedder", "ParamsError",
          path.string() + " is not an embedder checkpoint");
  CnnEmbedder net(c.meta().at("base_channels").get<int>(), 0);
  auto refs = net.params();
  nn::load_params(c, refs);
  return net;
}

// ---------------------------------------------------------------------------
// Scoring

double match_score(const Eigen::VectorXf& a, const Eigen::VectorXf& b) {
  require(a.size() == b.size(), "MatchError",
          "embedding lengths differ: " + std::to_string(a.size()) + " vs " +
              std::to_string(b.size()));
  require(a.size() > 0, "MatchError", "empty embeddings");
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

namespace {

struct IndexedRecord {
  int index;
  const ImpressionRecord* rec;
};

std::map<std::string, std::vector<IndexedRecord>> by_finger(
    const std::vector<ImpressionRecord>& records, bool live_only, bool spoof_only,
    const std::string& material) {
  std::map<std::string, std::vector<IndexedRecord>> out;
  for (size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (live_only && !r.is_live) continue;
    if (spoof_only) {
      if (r.is_live) continue;
      if (!material.empty() && r.material != material) continue;
    }
    out[r.finger_id].push_back({static_cast<int>(i), &r});
  }
  return out;
}

}  // namespace

ScoreSet score_distributions(const Dataset& dataset, Embedder& embedder,
                             const ScoreDistributionConfig& config) {
  std::map<int, Eigen::VectorXf> cache;
  const auto embed_of = [&](int idx) -> const Eigen::VectorXf& {
    auto it = cache.find(idx);
    if (it == cache.end())
      it = cache.emplace(idx, embedder.embed(dataset.load_image(dataset.records[idx])))
               .first;
    return it->second;
  };

  // (left, right) pools per finger under the pairing rule.
  const bool ls = config.pairing == Pairing::live_spoof;
  const auto lives = by_finger(dataset.records, true, false, "");
  const auto rights = ls ? by_finger(dataset.records, false, true, config.spoof_material)
                         : lives;

  std::vector<std::pair<int, int>> genuine_pairs;
  for (const auto& [finger, left] : lives) {
    const auto it = rights.find(finger);
    if (it == rights.end()) continue;
    for (const auto& a : left) {
      for (const auto& b : it->second) {
        if (ls) {
          genuine_pairs.push_back({a.index, b.index});
        } else if (a.index < b.index) {
          genuine_pairs.push_back({a.index, b.index});
        }
      }
    }
  }
  require(!genuine_pairs.empty(), "PairingError",
          "no genuine pairs under the requested pairing rule");

  std::vector<std::pair<int, int>> imposter_pairs;
  std::vector<std::string> finger_ids;
  for (const auto& [finger, _] : lives) finger_ids.push_back(finger);
  long total_imposters = 0;
  for (const auto& fa : finger_ids)
    for (const auto& fb : finger_ids) {
      if (fa >= fb) continue;
      const auto& left = lives.at(fa);
      const auto& right = ls ? rights.count(fb) ? rights.at(fb) : std::vector<IndexedRecord>{}
                             : lives.at(fb);
      total_imposters += static_cast<long>(left.size()) * static_cast<long>(right.size());
    }

  if (total_imposters <= config.imposter_cap) {
    for (const auto& fa : finger_ids)
      for (const auto& fb : finger_ids) {
        if (fa >= fb) continue;
        if (ls && rights.find(fb) == rights.end()) continue;
        for (const auto& a : lives.at(fa))
          for (const auto& b : (ls ? rights.at(fb) : lives.at(fb)))
            imposter_pairs.push_back({a.index, b.index});
      }
  } else {
    // Uniform sampling without materializing the cross product.
    Rng rng(config.sample_seed);
    std::vector<int> left_pool, right_pool;
    for (const auto& [f, v] : lives)
      for (const auto& a : v) left_pool.push_back(a.index);
    for (const auto& [f, v] : rights)
      for (const auto& b : v) right_pool.push_back(b.index);
    while (static_cast<long>(imposter_pairs.size()) < config.imposter_cap) {
      const int a = left_pool[rng.below(left_pool.size())];
      const int b = right_pool[rng.below(right_pool.size())];
      if (dataset.records[a].finger_id == dataset.records[b].finger_id) continue;
      imposter_pairs.push_back({a, b});
    }
  }

  ScoreSet scores;
  for (const auto& [a, b] : genuine_pairs)
    scores.genuine.push_back(match_score(embed_of(a), embed_of(b)));
  for (const auto& [a, b] : imposter_pairs)
    scores.imposter.push_back(match_score(embed_of(a), embed_of(b)));
  return scores;
}

std::vector<TarAtFar> tar_at_far(const ScoreSet& scores,
                                 const std::vector<double>& far_targets) {
  require(!far_targets.empty(), "MetricError", "no FAR targets");
  require(!scores.genuine.empty() && !scores.imposter.empty(), "MetricError",
          "genuine and imposter score lists must be non-empty");
  std::vector<TarAtFar> out;
  for (double far : far_targets) {
    const OperatingPoint op = sweep_threshold(scores.genuine, scores.imposter, far);
    out.push_back({far, op.threshold, op.positive_rate});
  }
  return out;
}

void write_score_csv(const ScoreSet& scores, const std::string& label_prefix,
                     const std::filesystem::path& path, bool append) {
  if (!path.parent_path().empty()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) fail("ExportError", "cannot write " + path.string());
  if (!append) out << "label,score\n";
  for (double s : scores.genuine) out << label_prefix << "_genuine," << s << "\n";
  for (double s : scores.imposter) out << label_prefix << "_imposter," << s << "\n";
}

nlohmann::json LeakageReport::to_json() const {
  nlohmann::json j;
  j["pairs"] = nlohmann::json::array();
  for (const auto& p : pairs) {
    j["pairs"].push_back({{"synthetic_finger", p.synthetic_finger},
                          {"synthetic_impression", p.synthetic_impression},
                          {"training_finger", p.training_finger},
                          {"training_impression", p.training_impression},
                          {"score", p.score}});
  }
  j["flagged_fingers"] = flagged_fingers;
  j["max_score"] = max_score;
  j["total_comparisons"] = total_comparisons;
  j["threshold"] = threshold;
  return j;
}

LeakageReport leakage_check(const Dataset& synthetic, const Dataset& training,
                            Embedder& embedder, double threshold) {
  require(!synthetic.records.empty() && !training.records.empty(), "MetricError",
          "both datasets must be non-empty");

  std::vector<Eigen::VectorXf> synth_embed, train_embed;
  synth_embed.reserve(synthetic.records.size());
  for (const auto& r : synthetic.records)
    synth_embed.push_back(embedder.embed(synthetic.load_image(r)));
  train_embed.reserve(training.records.size());
  for (const auto& r : training.records)
    train_embed.push_back(embedder.embed(training.load_image(r)));

  LeakageReport report;
  report.threshold = threshold;
  report.total_comparisons =
      static_cast<long>(synthetic.records.size()) * static_cast<long>(training.records.size());

  std::set<std::string> flagged;
  for (size_t i = 0; i < synth_embed.size(); ++i) {
    for (size_t j = 0; j < train_embed.size(); ++j) {
      const double s = match_score(synth_embed[i], train_embed[j]);
      report.max_score = std::max(report.max_score, s);
      if (s >= threshold) {
        const auto& sr = synthetic.records[i];
        const auto& tr = training.records[j];
        report.pairs.push_back(
            {sr.finger_id, sr.impression_id, tr.finger_id, tr.impression_id, s});
        flagged.insert(sr.finger_id);
      }
    }
  }
  report.flagged_fingers = static_cast<int>(flagged.size());
  std::sort(report.pairs.begin(), report.pairs.end(),
            [](const LeakagePair& a, const LeakagePair& b) { return a.score > b.score; });
  return report;
}

// ---------------------------------------------------------------------------
// Contrastive training

CnnEmbedder train_embedder(const Dataset& dataset, const EmbedderTrainConfig& config) {
  // Fingers with at least two impressions provide anchor/positive pairs.
  std::map<std::string, std::vector<int>> fingers;
  for (size_t i = 0; i < dataset.records.size(); ++i)
    fingers[dataset.records[i].finger_id].push_back(static_cast<int>(i));
  std::vector<std::string> multi, all_fingers;
  for (const auto& [f, idx] : fingers) {
    all_fingers.push_back(f);
    if (idx.size() >= 2) multi.push_back(f);
  }
  require(!multi.empty() && all_fingers.size() >= 2, "TrainConfigError",
          "contrastive training needs >= 2 fingers and one finger with >= 2 impressions");

  Rng rng(config.seed);
  CnnEmbedder net(config.base_channels, rng.next_u64());
  nn::Adam opt(net.params(), config.lr);

  // All images share the dataset resolution; pool to <= 128 once.
  std::vector<Image> images;
  images.reserve(dataset.records.size());
  for (const auto& r : dataset.records) {
    Image img = downsample_to(dataset.load_image(r), 128);
    const int h = (static_cast<int>(img.rows()) / 16) * 16;
    const int w = (static_cast<int>(img.cols()) / 16) * 16;
    images.push_back(center_crop(img, h, w));
  }
  const int h = static_cast<int>(images[0].rows());
  const int w = static_cast<int>(images[0].cols());

  for (int step = 0; step < config.steps; ++step) {
    const int k = config.triples;
    nn::Tensor x(3 * k, 1, h, w);
    for (int t = 0; t < k; ++t) {
      const auto& finger = multi[rng.below(multi.size())];
      const auto& idx = fingers.at(finger);
      const int a = static_cast<int>(rng.below(idx.size()));
      int p = static_cast<int>(rng.below(idx.size()));
      while (p == a) p = static_cast<int>(rng.below(idx.size()));
      std::string other = all_fingers[rng.below(all_fingers.size())];
      while (other == finger) other = all_fingers[rng.below(all_fingers.size())];
      const auto& oidx = fingers.at(other);
      const int n = static_cast<int>(rng.below(oidx.size()));
      nn::set_sample_image(x, 3 * t, images[idx[a]]);
      nn::set_sample_image(x, 3 * t + 1, images[idx[p]]);
      nn::set_sample_image(x, 3 * t + 2, images[oidx[n]]);
    }

    opt.zero_grad();
    const Eigen::MatrixXf e = net.forward(x, true);
    Eigen::MatrixXf g = Eigen::MatrixXf::Zero(e.rows(), e.cols());
    for (int t = 0; t < k; ++t) {
      const auto a = e.col(3 * t), p = e.col(3 * t + 1), n = e.col(3 * t + 2);
      // (1 - a.p) + max(0, a.n - margin)
      g.col(3 * t) -= p;
      g.col(3 * t + 1) -= a;
      if (a.dot(n) > config.margin) {
        g.col(3 * t) += n;
        g.col(3 * t + 2) += a;
      }
    }
    g /= static_cast<float>(k);
    net.backward(g);
    opt.step();
  }
  return net;
}

}  // namespace forge
