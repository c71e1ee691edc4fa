#include "forge/renderer.hpp"

#include <fstream>
#include <set>

#include "forge/container.hpp"
#include "forge/errors.hpp"
#include "forge/nn/checkpoint.hpp"
#include "forge/nn/optimizer.hpp"
#include "forge/nn/tensor.hpp"

#include <json.hpp>

namespace forge {

TextureLatent sample_texture_latent(std::uint64_t seed) {
  Rng rng(seed);
  TextureLatent latent;
  latent.z.resize(kTextureLatentDim);
  for (int i = 0; i < kTextureLatentDim; ++i) latent.z[i] = rng.normal_f();
  return latent;
}

// ---------------------------------------------------------------------------
// Loss arithmetic

double embedding_loss(const Eigen::VectorXf& embed_real, const Eigen::VectorXf& embed_fake) {
  require(embed_real.size() == embed_fake.size(), "LossError",
          "embedding lengths differ: " + std::to_string(embed_real.size()) + " vs " +
              std::to_string(embed_fake.size()));
  double s = 0.0;
  for (long i = 0; i < embed_real.size(); ++i) {
    const double d = static_cast<double>(embed_real[i]) - static_cast<double>(embed_fake[i]);
    s += d * d;
  }
  return 0.5 * s;
}

double pixel_loss(const Image& binary_truth, const Image& binary_rendered) {
  require(binary_truth.rows() == binary_rendered.rows() &&
              binary_truth.cols() == binary_rendered.cols(),
          "LossError", "binary image shapes differ");
  double s = 0.0;
  for (long i = 0; i < binary_truth.size(); ++i) {
    const double d = static_cast<double>(binary_truth.data()[i]) -
                     static_cast<double>(binary_rendered.data()[i]);
    s += d * d;
  }
  return 0.5 * s;
}

double combine_generator_loss(double adv, double dp, double pixel, const LossWeights& w) {
  require(w.adv >= 0 && w.dp >= 0 && w.pixel >= 0, "LossError",
          "loss weights must be non-negative");
  return w.adv * adv + w.dp * dp + w.pixel * pixel;
}

RendererLosses renderer_losses(const Eigen::VectorXf& embed_real,
                               const Eigen::VectorXf& embed_fake,
                               const Image& binary_truth, const Image& binary_rendered,
                               const Eigen::VectorXf& d_real,
                               const Eigen::VectorXf& d_fake, const LossWeights& w) {
  RendererLosses out;
  const nn::GanLossResult adv = nn::gan_loss(d_real, d_fake);
  out.adv_g = adv.loss_g;
  out.adv_d = adv.loss_d;
  out.dp = embedding_loss(embed_real, embed_fake);
  out.pixel = pixel_loss(binary_truth, binary_rendered);
  out.total_g = combine_generator_loss(out.adv_g, out.dp, out.pixel, w);
  out.total_d = out.adv_d;
  return out;
}

// ---------------------------------------------------------------------------
// Network

namespace {

struct StyleSite {
  nn::InstanceNorm* norm;
  int channels;
};

}  // namespace

struct TextureRenderer::Nets {
  // encoder
  nn::Conv2d e0c;
  nn::LeakyReLU e0a;
  nn::AvgPool2 p1;
  nn::Conv2d e1c;
  nn::LeakyReLU e1a;
  nn::AvgPool2 p2;
  nn::Conv2d e2c;
  nn::LeakyReLU e2a;
  nn::AvgPool2 p3;
  nn::Conv2d e3c;
  nn::LeakyReLU e3a;
  // decoder with style-modulated instance norms
  nn::Upsample2 u2;
  nn::Conv2d d2c;
  nn::InstanceNorm d2n;
  nn::LeakyReLU d2a;
  nn::Upsample2 u1;
  nn::Conv2d d1c;
  nn::InstanceNorm d1n;
  nn::LeakyReLU d1a;
  nn::Upsample2 u0;
  nn::Conv2d d0c;
  nn::InstanceNorm d0n;
  nn::LeakyReLU d0a;
  nn::Conv2d head;
  nn::Sigmoid out_act;
  // style path: latent -> hidden -> per-site (gamma, beta)
  nn::Dense s0;
  nn::LeakyReLU s0a;
  nn::Dense s1;

  int c;

  Nets(int base, Rng& rng)
      : e0c(1, base, 3, rng),
        e1c(base, 2 * base, 3, rng),
        e2c(2 * base, 4 * base, 3, rng),
        e3c(4 * base, 4 * base, 3, rng),
        d2c(4 * base, 4 * base, 3, rng),
        d2n(4 * base, false),
        d1c(4 * base, 2 * base, 3, rng),
        d1n(2 * base, false),
        d0c(2 * base, base, 3, rng),
        d0n(base, false),
        head(base, 1, 3, rng),
        s0(kTextureLatentDim, 64, rng),
        s1(64, 2 * (4 * base + 2 * base + base), rng, /*zero_init=*/true),
        c(base) {}

  std::vector<StyleSite> sites() {
    return {{&d2n, 4 * c}, {&d1n, 2 * c}, {&d0n, c}};
  }

  // Style MLP -> per-site modulation. Raw outputs are residuals around the
  // identity modulation (gamma = 1 + s, beta = s).
  Eigen::MatrixXf style_forward(const Eigen::MatrixXf& z, bool train) {
    nn::Tensor t(static_cast<int>(z.cols()), kTextureLatentDim, 1, 1);
    t.d = z;
    const nn::Tensor s = s1.forward(s0a.forward(s0.forward(t, train), train), train);
    int offset = 0;
    for (const auto& site : sites()) {
      Eigen::MatrixXf gamma = s.d.middleRows(offset, site.channels);
      gamma.array() += 1.0f;
      const Eigen::MatrixXf beta = s.d.middleRows(offset + site.channels, site.channels);
      site.norm->set_style(gamma, beta);
      offset += 2 * site.channels;
    }
    return s.d;
  }

  void style_backward(int n) {
    nn::Tensor gs(n, static_cast<int>(s1.w.rows()), 1, 1);
    int offset = 0;
    for (const auto& site : sites()) {
      gs.d.middleRows(offset, site.channels) = site.norm->style_grad_gamma();
      gs.d.middleRows(offset + site.channels, site.channels) = site.norm->style_grad_beta();
      offset += 2 * site.channels;
    }
    s0.backward(s0a.backward(s1.backward(gs)));
  }

  nn::Tensor forward(const nn::Tensor& x, const Eigen::MatrixXf& z, bool train) {
    style_forward(z, train);
    nn::Tensor t = e0a.forward(e0c.forward(x, train), train);
    t = e1a.forward(e1c.forward(p1.forward(t, train), train), train);
    t = e2a.forward(e2c.forward(p2.forward(t, train), train), train);
    t = e3a.forward(e3c.forward(p3.forward(t, train), train), train);
    t = d2a.forward(d2n.forward(d2c.forward(u2.forward(t, train), train), train), train);
    t = d1a.forward(d1n.forward(d1c.forward(u1.forward(t, train), train), train), train);
    t = d0a.forward(d0n.forward(d0c.forward(u0.forward(t, train), train), train), train);
    return out_act.forward(head.forward(t, train), train);
  }

  nn::Tensor backward(const nn::Tensor& gy) {
    nn::Tensor g = head.backward(out_act.backward(gy));
    g = u0.backward(d0c.backward(d0n.backward(d0a.backward(g))));
    g = u1.backward(d1c.backward(d1n.backward(d1a.backward(g))));
    g = u2.backward(d2c.backward(d2n.backward(d2a.backward(g))));
    g = p3.backward(e3c.backward(e3a.backward(g)));
    g = p2.backward(e2c.backward(e2a.backward(g)));
    g = p1.backward(e1c.backward(e1a.backward(g)));
    g = e0c.backward(e0a.backward(g));
    style_backward(gy.n);
    return g;
  }

  void collect(std::vector<nn::ParamRef>& out) {
    e0c.collect(out, "e0");
    e1c.collect(out, "e1");
    e2c.collect(out, "e2");
    e3c.collect(out, "e3");
    d2c.collect(out, "d2");
    d1c.collect(out, "d1");
    d0c.collect(out, "d0");
    head.collect(out, "head");
    s0.collect(out, "style0");
    s1.collect(out, "style1");
  }
};

TextureRenderer::TextureRenderer(int base_channels, std::uint64_t seed)
    : base_channels_(base_channels) {
  Rng rng(seed);
  nets_ = std::make_shared<Nets>(base_channels, rng);
}

TextureRenderer TextureRenderer::clone() const {
  TextureRenderer copy = *this;
  copy.nets_ = std::make_shared<Nets>(*nets_);
  return copy;
}

Image TextureRenderer::render(const Image& warped_binary, const TextureLatent& latent) {
  require(latent.z.size() == kTextureLatentDim, "RenderError",
          "texture latent must have length " + std::to_string(kTextureLatentDim));
  if (warped_binary.rows() % 8 != 0 || warped_binary.cols() % 8 != 0)
    fail("RenderError", "input dims must be divisible by 8, got " +
                            std::to_string(warped_binary.rows()) + "x" +
                            std::to_string(warped_binary.cols()));
  Eigen::MatrixXf z(kTextureLatentDim, 1);
  z.col(0) = latent.z;
  const nn::Tensor out = nets_->forward(nn::from_image(warped_binary), z, false);
  return nn::to_image(out);
}

void TextureRenderer::save(const std::filesystem::path& path, int step) const {
  Container c("texture_renderer");
  c.meta()["base_channels"] = base_channels_;
  c.meta()["material"] = material_;
  c.meta()["parent"] = parent_;
  c.meta()["step"] = step;
  std::vector<nn::ParamRef> refs;
  nets_->collect(refs);
  nn::save_params(c, refs);
  c.save(path);
}

TextureRenderer TextureRenderer::load(const std::filesystem::path& path) {
  const Container c = Container::load(path);
  require(c.kind() == "texture_renderer", "ParamsError",
          path.string() + " is not a texture-renderer checkpoint");
  TextureRenderer net(c.meta().at("base_channels").get<int>(), 0);
  net.material_ = c.meta().value("material", "untrained");
  net.parent_ = c.meta().value("parent", "");
  std::vector<nn::ParamRef> refs;
  net.nets_->collect(refs);
  nn::load_params(c, refs);
  return net;
}

// ---------------------------------------------------------------------------
// Discriminator for renderer training: same residual down-sampling topology
// as the master-print discriminator, built here at the training resolution.

namespace {

class RenderDiscriminator {
 public:
  RenderDiscriminator(int levels, int top_channels, Rng& rng) {
    int ch = 8;
    body_.add<nn::Conv2d>(1, ch, 3, rng);
    body_.add<nn::LeakyReLU>();
    for (int i = 0; i < levels; ++i) {
      const int next = std::min(top_channels, ch * 2);
      auto main = std::make_unique<nn::Sequential>();
      main->add<nn::Conv2d>(ch, next, 3, rng);
      main->add<nn::LeakyReLU>();
      main->add<nn::Conv2d>(next, next, 3, rng);
      main->add<nn::AvgPool2>();
      auto skip = std::make_unique<nn::Sequential>();
      skip->add<nn::Conv2d>(ch, next, 1, rng);
      skip->add<nn::AvgPool2>();
      body_.push(std::make_unique<nn::Residual>(std::move(main), std::move(skip)));
      ch = next;
    }
    body_.add<nn::GlobalAvgPool>();
    body_.add<nn::Flatten>();
    body_.add<nn::Dense>(ch, 1, rng);
  }

  nn::Tensor forward(const nn::Tensor& x, bool train) { return body_.forward(x, train); }
  nn::Tensor backward(const nn::Tensor& gy) { return body_.backward(gy); }
  std::vector<nn::ParamRef> params() {
    std::vector<nn::ParamRef> out;
    body_.collect(out, "d");
    return out;
  }

 private:
  nn::Sequential body_;
};

std::vector<ImpressionRecord> records_for_scope(const Dataset& dataset,
                                                const std::string& material) {
  std::vector<ImpressionRecord> out;
  for (const auto& r : dataset.records) {
    if (material == "live") {
      if (r.is_live) out.push_back(r);
    } else if (material == "all_spoof") {
      if (!r.is_live) out.push_back(r);
    } else if (r.material == material) {
      out.push_back(r);
    }
  }
  return out;
}

}  // namespace

RendererTrainResult train_renderer(const Dataset& dataset,
                                   const std::optional<TextureRenderer>& init,
                                   const std::string& material, CnnEmbedder& embedder,
                                   Binarizer& binarizer,
                                   const RendererTrainConfig& config) {
  const bool is_finetune = material != "live" && material != "all_spoof";
  if (is_finetune)
    require(init.has_value(), "LineageError",
            "per-material fine-tuning for '" + material +
                "' requires a parent checkpoint");

  const auto records = records_for_scope(dataset, material);
  require(!records.empty(), "EmptyMaterialError",
          "no records for material scope '" + material + "'");

  Rng rng(config.seed);
  RendererTrainResult result{
      init.has_value() ? init->clone()
                       : TextureRenderer(config.base_channels, rng.next_u64()),
      {}, {}, {}};
  TextureRenderer& net = result.renderer;
  net.set_material(material);

  const int res = config.train_resolution;
  require(res % 16 == 0, "TrainConfigError",
          "train_resolution must be divisible by 16");

  // Pre-binarize the training targets once (the classical path is the
  // ground-truth teacher; the autoencoder handles the differentiable side).
  std::vector<Image> grays, binaries;
  grays.reserve(records.size());
  for (const auto& r : records) {
    Image g = resize_short_crop(dataset.load_image(r), res);
    binaries.push_back(classical_binarize(g));
    grays.push_back(std::move(g));
  }

  const int steps = is_finetune
                        ? config.finetune_epochs *
                              std::max<int>(1, (static_cast<int>(records.size()) +
                                                config.batch - 1) /
                                                   config.batch)
                        : config.steps;

  RenderDiscriminator disc(4, config.disc_channels, rng);
  std::vector<nn::ParamRef> g_params;
  net.nets().collect(g_params);
  nn::Adam opt_g(g_params, config.lr_g);
  nn::Adam opt_d(disc.params(), config.lr_d);

  std::ofstream log;
  if (!config.loss_log.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(config.loss_log.parent_path(), ec);
    log.open(config.loss_log, std::ios::trunc);
    log << "step,L_adv,L_dp,L_i\n";
  }

  const int b = config.batch;
  const float inv_pixels = 1.0f / static_cast<float>(res * res);
  for (int step = 0; step < steps; ++step) {
    nn::Tensor x(b, 1, res, res);       // warped binary input
    nn::Tensor real(b, 1, res, res);    // textured target distribution
    Eigen::MatrixXf z(kTextureLatentDim, b);
    std::vector<int> picks(b);
    for (int s = 0; s < b; ++s) {
      picks[s] = static_cast<int>(rng.below(records.size()));
      nn::set_sample_image(x, s, binaries[picks[s]]);
      nn::set_sample_image(real, s, grays[picks[s]]);
      for (int i = 0; i < kTextureLatentDim; ++i) z(i, s) = rng.normal_f();
    }

    const nn::Tensor fake = net.nets().forward(x, z, true);

    // Discriminator scores for real and rendered batches in one pass.
    nn::Tensor both(2 * b, 1, res, res);
    for (int s = 0; s < b; ++s) both.sample(s) = real.sample(s);
    for (int s = 0; s < b; ++s) both.sample(b + s) = fake.sample(s);
    const nn::Tensor logits = disc.forward(both, true);
    const Eigen::VectorXf d_real = logits.d.row(0).leftCols(b).transpose();
    const Eigen::VectorXf d_fake = logits.d.row(0).rightCols(b).transpose();
    const nn::GanLossResult adv = nn::gan_loss(d_real, d_fake);

    // Embedding distance between real and rendered (frozen embedder).
    nn::Tensor embed_in(2 * b, 1, res, res);
    embed_in.d = both.d;
    const Eigen::MatrixXf embeds = embedder.forward(embed_in, true);
    double dp_value = 0.0;
    Eigen::MatrixXf g_embed = Eigen::MatrixXf::Zero(kEmbeddingDim, 2 * b);
    for (int s = 0; s < b; ++s) {
      const Eigen::VectorXf diff = embeds.col(b + s) - embeds.col(s);
      dp_value += 0.5 * diff.squaredNorm();
      g_embed.col(b + s) = diff;  // d(dp)/d(fake embedding)
    }
    dp_value /= b;

    // Differentiable binary of the rendered batch (frozen autoencoder).
    const nn::Tensor soft_binary = binarizer.forward_soft(fake, true);
    double pixel_value = 0.0;
    nn::Tensor g_soft = soft_binary;
    for (int s = 0; s < b; ++s) {
      auto diff = (soft_binary.sample(s) - x.sample(s)).eval();
      pixel_value += 0.5 * static_cast<double>(diff.squaredNorm()) * inv_pixels;
      // Optimization uses the per-pixel mean so the weighted sum of the three
      // terms stays O(1) regardless of resolution.
      g_soft.sample(s) = diff * inv_pixels;
    }
    pixel_value /= b;

    // Generator update: adversarial + embedding + pixel gradients on the
    // rendered images.
    opt_g.zero_grad();
    nn::Tensor adv_logit_grad(2 * b, 1, 1, 1);
    adv_logit_grad.d.setZero();
    adv_logit_grad.d.row(0).rightCols(b) = adv.grad_g_fake.transpose();
    const nn::Tensor g_disc_in = disc.backward(adv_logit_grad);

    Eigen::MatrixXf g_embed_scaled = g_embed * static_cast<float>(config.weights.dp / b);
    const nn::Tensor g_embed_in = embedder.backward(g_embed_scaled);

    nn::Tensor g_pix = binarizer.backward_soft([&] {
      nn::Tensor t = g_soft;
      t.d *= static_cast<float>(config.weights.pixel / b);
      return t;
    }());

    nn::Tensor g_fake = g_pix;
    const float w_adv = static_cast<float>(config.weights.adv);
    for (int s = 0; s < b; ++s) {
      g_fake.sample(s) += w_adv * g_disc_in.sample(b + s);
      g_fake.sample(s) += g_embed_in.sample(b + s);
    }
    net.nets().backward(g_fake);
    opt_g.step();

    // Discriminator update from the same forward caches.
    opt_d.zero_grad();
    nn::Tensor d_logit_grad(2 * b, 1, 1, 1);
    d_logit_grad.d.row(0).leftCols(b) = adv.grad_d_real.transpose();
    d_logit_grad.d.row(0).rightCols(b) = adv.grad_d_fake.transpose();
    disc.backward(d_logit_grad);
    opt_d.step();

    result.adv_log.push_back(adv.loss_g);
    result.dp_log.push_back(dp_value);
    result.pixel_log.push_back(pixel_value);
    if (log.is_open())
      log << step << ',' << adv.loss_g << ',' << dp_value << ',' << pixel_value << "\n";
  }
  return result;
}

std::filesystem::path run_renderer_schedule(const Dataset& dataset,
                                            CnnEmbedder& embedder, Binarizer& binarizer,
                                            const RendererTrainConfig& config,
                                            const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);

  nlohmann::json lineage;
  const auto save_entry = [&](TextureRenderer& net, const std::string& name,
                              const std::string& parent, int steps) {
    const auto path = out_dir / (name + ".ckpt");
    net.set_parent(parent);
    net.save(path, steps);
    lineage[name] = {{"path", path.string()}, {"parent", parent}};
  };

  // (a) pretrain on the live corpus
  RendererTrainConfig cfg = config;
  cfg.seed = derive_seed(config.seed, "pretrain");
  auto pretrain = train_renderer(dataset, std::nullopt, "live", embedder, binarizer, cfg);
  save_entry(pretrain.renderer, "pretrain", "", cfg.steps);

  // (b) branch: live and all-spoof models from the pretrain weights
  cfg.seed = derive_seed(config.seed, "live");
  auto live = train_renderer(dataset, pretrain.renderer, "live", embedder, binarizer, cfg);
  save_entry(live.renderer, "live", "pretrain", cfg.steps);

  cfg.seed = derive_seed(config.seed, "all_spoof");
  auto all_spoof =
      train_renderer(dataset, pretrain.renderer, "all_spoof", embedder, binarizer, cfg);
  save_entry(all_spoof.renderer, "all_spoof", "pretrain", cfg.steps);

  // (c) one fine-tuned model per spoof material, initialized from all-spoof
  std::set<std::string> materials;
  for (const auto& r : dataset.records)
    if (!r.is_live) materials.insert(r.material);
  for (const auto& m : materials) {
    cfg.seed = derive_seed(config.seed, {"material", m});
    auto tuned =
        train_renderer(dataset, all_spoof.renderer, m, embedder, binarizer, cfg);
    save_entry(tuned.renderer, m, "all_spoof", 0);
  }

  const auto lineage_path = out_dir / "lineage.json";
  std::ofstream out(lineage_path, std::ios::trunc);
  out << lineage.dump(2) << "\n";
  return lineage_path;
}

}  // namespace forge
