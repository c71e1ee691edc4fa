#include "forge/masterprint.hpp"

#include <fstream>

#include "forge/container.hpp"
#include "forge/errors.hpp"
#include "forge/nn/checkpoint.hpp"
#include "forge/nn/optimizer.hpp"
#include "forge/nn/tensor.hpp"

namespace forge {

IdentityLatent sample_identity_latent(std::uint64_t seed) {
  Rng rng(seed);
  IdentityLatent latent;
  latent.z.resize(kIdentityLatentDim);
  for (int i = 0; i < kIdentityLatentDim; ++i) latent.z[i] = rng.normal_f();
  return latent;
}

namespace {

constexpr int kUpBlocks = 6;  // 4 -> 256

std::vector<int> channel_plan(int base, int min_ch) {
  // base channels at 4x4, halved per block with a floor.
  std::vector<int> plan(kUpBlocks + 1);
  for (int i = 0; i <= kUpBlocks; ++i) plan[i] = std::max(min_ch, base >> i);
  return plan;
}

std::unique_ptr<nn::Layer> make_up_block(int in_ch, int out_ch, Rng& rng) {
  auto main = std::make_unique<nn::Sequential>();
  main->add<nn::Upsample2>();
  main->add<nn::Conv2d>(in_ch, out_ch, 3, rng);
  main->add<nn::LeakyReLU>();
  main->add<nn::Conv2d>(out_ch, out_ch, 3, rng);
  auto skip = std::make_unique<nn::Sequential>();
  skip->add<nn::Upsample2>();
  skip->add<nn::Conv2d>(in_ch, out_ch, 1, rng);
  return std::make_unique<nn::Residual>(std::move(main), std::move(skip));
}

std::unique_ptr<nn::Layer> make_down_block(int in_ch, int out_ch, Rng& rng) {
  auto main = std::make_unique<nn::Sequential>();
  main->add<nn::Conv2d>(in_ch, out_ch, 3, rng);
  main->add<nn::LeakyReLU>();
  main->add<nn::Conv2d>(out_ch, out_ch, 3, rng);
  main->add<nn::AvgPool2>();
  auto skip = std::make_unique<nn::Sequential>();
  skip->add<nn::Conv2d>(in_ch, out_ch, 1, rng);
  skip->add<nn::AvgPool2>();
  return std::make_unique<nn::Residual>(std::move(main), std::move(skip));
}

}  // namespace

struct MasterPrintGan::Nets {
  nn::Dense stem;  // latent -> base_channels * 4 * 4
  nn::Sequential gen;
  nn::Sequential disc;
  int base_ch;

  Nets(int base, int min_ch, Rng& rng) : stem(kIdentityLatentDim, base * 16, rng), base_ch(base) {
    const auto plan = channel_plan(base, min_ch);
    for (int i = 0; i < kUpBlocks; ++i) gen.push(make_up_block(plan[i], plan[i + 1], rng));
    gen.add<nn::LeakyReLU>();
    gen.add<nn::Conv2d>(plan[kUpBlocks], 1, 3, rng);
    gen.add<nn::Sigmoid>();

    disc.add<nn::Conv2d>(1, plan[kUpBlocks], 3, rng);
    disc.add<nn::LeakyReLU>();
    for (int i = kUpBlocks; i > 0; --i)
      disc.push(make_down_block(plan[i], plan[i - 1], rng));
    disc.add<nn::GlobalAvgPool>();
    disc.add<nn::Flatten>();
    disc.add<nn::Dense>(plan[0], 1, rng);
  }

  nn::Tensor gen_forward(const nn::Tensor& z, bool train) {
    nn::Tensor t = stem.forward(z, train);
    // (n, base*16, 1, 1) -> (n, base, 4, 4)
    nn::Tensor shaped(t.n, base_ch, 4, 4);
    for (int s = 0; s < t.n; ++s)
      shaped.sample(s) =
          Eigen::Map<const Eigen::MatrixXf>(t.d.col(s).data(), base_ch, 16);
    return gen.forward(shaped, train);
  }

  nn::Tensor gen_backward(const nn::Tensor& gy) {
    nn::Tensor g = gen.backward(gy);
    nn::Tensor flat(g.n, base_ch * 16, 1, 1);
    for (int s = 0; s < g.n; ++s) {
      const auto blk = g.sample(s);
      flat.d.col(s) = Eigen::Map<const Eigen::VectorXf>(blk.data(), blk.size());
    }
    return stem.backward(flat);
  }

  std::vector<nn::ParamRef> gen_params() {
    std::vector<nn::ParamRef> out;
    stem.collect(out, "g.stem");
    gen.collect(out, "g.body");
    return out;
  }
  std::vector<nn::ParamRef> disc_params() {
    std::vector<nn::ParamRef> out;
    disc.collect(out, "d.body");
    return out;
  }
};

MasterPrintGan::MasterPrintGan(int base_channels, int min_channels, std::uint64_t seed)
    : base_channels_(base_channels), min_channels_(min_channels) {
  Rng rng(seed);
  nets_ = std::make_shared<Nets>(base_channels, min_channels, rng);
}

MasterPrint MasterPrintGan::generate(const IdentityLatent& latent) {
  require(latent.z.size() == kIdentityLatentDim, "ParamsError",
          "identity latent must have length " + std::to_string(kIdentityLatentDim));
  require(latent.z.allFinite(), "ParamsError", "identity latent has non-finite entries");
  nn::Tensor z(1, kIdentityLatentDim, 1, 1);
  z.d.col(0) = latent.z;
  const nn::Tensor img = nets_->gen_forward(z, false);
  MasterPrint print;
  print.image = nn::to_image(img);
  return print;
}

void MasterPrintGan::save(const std::filesystem::path& path, int step) const {
  Container c("masterprint_gan");
  c.meta()["base_channels"] = base_channels_;
  c.meta()["min_channels"] = min_channels_;
  c.meta()["latent_dim"] = kIdentityLatentDim;
  c.meta()["step"] = step;
  auto g = nets_->gen_params();
  auto d = nets_->disc_params();
  nn::save_params(c, g);
  nn::save_params(c, d);
  c.save(path);
}

MasterPrintGan MasterPrintGan::load(const std::filesystem::path& path) {
  const Container c = Container::load(path);
  require(c.kind() == "masterprint_gan", "ParamsError",
          path.string() + " is not a master-print checkpoint");
  MasterPrintGan gan(c.meta().at("base_channels").get<int>(),
                     c.meta().at("min_channels").get<int>(), 0);
  gan.step_ = c.meta().value("step", 0);
  auto g = gan.nets_->gen_params();
  auto d = gan.nets_->disc_params();
  nn::load_params(c, g);
  nn::load_params(c, d);
  return gan;
}

nn::GanLossResult adversarial_loss(const Eigen::VectorXf& d_real,
                                   const Eigen::VectorXf& d_fake) {
  return nn::gan_loss(d_real, d_fake);
}

MasterGanTrainResult train_masterprint_gan(const Dataset& dataset,
                                           const MasterGanConfig& config) {
  require(!dataset.records.empty(), "TrainConfigError", "empty training dataset");
  for (const auto& r : dataset.records)
    require(r.is_live, "TrainConfigError",
            "stage-1 trains on live impressions only; found material '" + r.material +
                "' for finger " + r.finger_id);

  // Pre-load and validate the corpus once; these images are small.
  std::vector<Image> images;
  images.reserve(dataset.records.size());
  for (const auto& r : dataset.records) {
    Image img = dataset.load_image(r);
    require(img.rows() == kMasterPrintSize && img.cols() == kMasterPrintSize,
            "TrainConfigError", "training images must be 256x256 (got " +
                                    std::to_string(img.rows()) + "x" +
                                    std::to_string(img.cols()) + ")");
    for (long i = 0; i < img.size(); ++i)
      require(img.data()[i] == 0.0f || img.data()[i] == 1.0f, "TrainConfigError",
              "training images must be binarized to {0,1}");
    images.push_back(std::move(img));
  }

  Rng rng(config.seed);
  MasterGanTrainResult result{
      MasterPrintGan(config.base_channels, config.min_channels, rng.next_u64()), {}, {}};
  auto& nets = result.gan.nets();

  nn::Adam opt_g(nets.gen_params(), config.lr_g);
  nn::Adam opt_d(nets.disc_params(), config.lr_d);

  std::ofstream log;
  if (!config.loss_log.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(config.loss_log.parent_path(), ec);
    log.open(config.loss_log, std::ios::trunc);
    log << "step,loss_G,loss_D\n";
  }

  const int b = config.batch;
  for (int step = 0; step < config.steps; ++step) {
    nn::Tensor z(b, kIdentityLatentDim, 1, 1);
    for (long i = 0; i < z.d.size(); ++i) z.d.data()[i] = rng.normal_f();
    const nn::Tensor fake = nets.gen_forward(z, true);

    nn::Tensor both(2 * b, 1, kMasterPrintSize, kMasterPrintSize);
    for (int s = 0; s < b; ++s)
      nn::set_sample_image(both, s, images[rng.below(images.size())]);
    for (int s = 0; s < b; ++s) both.sample(b + s) = fake.sample(s);

    const nn::Tensor logits = nets.disc.forward(both, true);
    const Eigen::VectorXf d_real = logits.d.leftCols(b).row(0).transpose();
    const Eigen::VectorXf d_fake = logits.d.rightCols(b).row(0).transpose();
    const nn::GanLossResult loss = nn::gan_loss(d_real, d_fake);

    // Generator update against the current discriminator.
    opt_g.zero_grad();
    nn::Tensor g_logit_grad(2 * b, 1, 1, 1);
    g_logit_grad.d.setZero();
    g_logit_grad.d.row(0).rightCols(b) = loss.grad_g_fake.transpose();
    const nn::Tensor d_input_grad = nets.disc.backward(g_logit_grad);
    nn::Tensor fake_grad(b, 1, kMasterPrintSize, kMasterPrintSize);
    for (int s = 0; s < b; ++s) fake_grad.sample(s) = d_input_grad.sample(b + s);
    nets.gen_backward(fake_grad);
    opt_g.step();

    // Discriminator update from the same forward pass.
    opt_d.zero_grad();
    nn::Tensor d_logit_grad(2 * b, 1, 1, 1);
    d_logit_grad.d.row(0).leftCols(b) = loss.grad_d_real.transpose();
    d_logit_grad.d.row(0).rightCols(b) = loss.grad_d_fake.transpose();
    nets.disc.backward(d_logit_grad);
    opt_d.step();

    result.loss_g.push_back(loss.loss_g);
    result.loss_d.push_back(loss.loss_d);
    if (log.is_open()) log << step << ',' << loss.loss_g << ',' << loss.loss_d << "\n";
  }
  return result;
}

}  // namespace forge
