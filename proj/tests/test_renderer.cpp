#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "forge/errors.hpp"
#include "forge/random.hpp"
#include "forge/renderer.hpp"
#include "toy.hpp"

using namespace forge;

TEST_CASE("texture latent: deterministic length-128 standard normals") {
  const auto a = sample_texture_latent(5);
  const auto b = sample_texture_latent(5);
  REQUIRE(a.z.size() == 128);
  CHECK(a.z == b.z);
  CHECK(a.z != sample_texture_latent(6).z);
}

TEST_CASE("embedding loss: identity and analytic cases") {
  Eigen::VectorXf r(2), rhat(2);
  r << 1, 0;
  rhat << 1, 0;
  CHECK(embedding_loss(r, rhat) == 0.0);
  rhat << 0, 0;
  CHECK(embedding_loss(r, rhat) == doctest::Approx(0.5));
}

TEST_CASE("embedding loss: length mismatch is LossError") {
  try {
    embedding_loss(Eigen::VectorXf::Zero(3), Eigen::VectorXf::Zero(4));
    FAIL("expected LossError");
  } catch (const Error& e) {
    CHECK(e.code() == "LossError");
  }
}

TEST_CASE("pixel loss: shape mismatch is LossError") {
  try {
    pixel_loss(Image::Ones(4, 4), Image::Ones(4, 5));
    FAIL("expected LossError");
  } catch (const Error& e) {
    CHECK(e.code() == "LossError");
  }
}

TEST_CASE("generator loss combination: (0.1, 0.2, 0.3) with defaults is 3.5") {
  CHECK(combine_generator_loss(0.1, 0.2, 0.3) == doctest::Approx(3.5));
}

TEST_CASE("loss arithmetic matches independent recomputation on random tensors") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const int len = 4 + static_cast<int>(rng.below(20));
    Eigen::VectorXf r(len), rhat(len);
    for (int i = 0; i < len; ++i) {
      r[i] = static_cast<float>(rng.normal());
      rhat[i] = static_cast<float>(rng.normal());
    }
    const int side = 4 + static_cast<int>(rng.below(8));
    Image truth(side, side), rendered(side, side);
    for (long i = 0; i < truth.size(); ++i) {
      truth.data()[i] = static_cast<float>(rng.uniform());
      rendered.data()[i] = static_cast<float>(rng.uniform());
    }

    double dp = 0.0;
    for (int i = 0; i < len; ++i)
      dp += 0.5 * (double(r[i]) - rhat[i]) * (double(r[i]) - rhat[i]);
    double pix = 0.0;
    for (long i = 0; i < truth.size(); ++i)
      pix += 0.5 * (double(truth.data()[i]) - rendered.data()[i]) *
             (double(truth.data()[i]) - rendered.data()[i]);

    CHECK(embedding_loss(r, rhat) == doctest::Approx(dp).epsilon(1e-6));
    CHECK(pixel_loss(truth, rendered) == doctest::Approx(pix).epsilon(1e-6));

    const double adv = rng.uniform();
    const double expect = 1.0 * adv + 2.0 * dp + 10.0 * pix;
    CHECK(combine_generator_loss(adv, dp, pix) == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("total generator loss is monotone in each component") {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const double adv = rng.uniform(), dp = rng.uniform(), pix = rng.uniform();
    const double base = combine_generator_loss(adv, dp, pix);
    CHECK(combine_generator_loss(adv + 0.1, dp, pix) >= base);
    CHECK(combine_generator_loss(adv, dp + 0.1, pix) >= base);
    CHECK(combine_generator_loss(adv, dp, pix + 0.1) >= base);
  }
}

TEST_CASE("renderer_losses: full breakdown") {
  Eigen::VectorXf r(2), rhat(2);
  r << 1, 0;
  rhat << 0, 0;
  const Eigen::VectorXf zeros = Eigen::VectorXf::Zero(2);
  const auto losses =
      renderer_losses(r, rhat, Image::Ones(2, 2), Image::Zero(2, 2), zeros, zeros, {});
  CHECK(losses.dp == doctest::Approx(0.5));
  CHECK(losses.pixel == doctest::Approx(2.0));
  CHECK(losses.adv_d == doctest::Approx(2 * std::log(2.0)));
  CHECK(losses.adv_g == doctest::Approx(std::log(2.0)));
  CHECK(losses.total_g ==
        doctest::Approx(1.0 * losses.adv_g + 2.0 * 0.5 + 10.0 * 2.0));
  CHECK(losses.total_d == losses.adv_d);
}

TEST_CASE("render: deterministic, [0,1], style dependence, 512 support") {
  TextureRenderer net(6, 31);
  const Image warped = testsupport::toy_ridge_gray(3, 0, 128);
  const auto z1 = sample_texture_latent(1);
  const auto z2 = sample_texture_latent(2);

  const Image a = net.render(warped, z1);
  const Image b = net.render(warped, z1);
  REQUIRE(a.rows() == 128);
  for (long i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
  CHECK(a.minCoeff() >= 0.0f);
  CHECK(a.maxCoeff() <= 1.0f);

  const Image c = net.render(warped, z2);
  double mean_abs_diff = 0.0;
  for (long i = 0; i < a.size(); ++i)
    mean_abs_diff += std::abs(double(a.data()[i]) - c.data()[i]);
  mean_abs_diff /= static_cast<double>(a.size());
  CHECK(mean_abs_diff > 0.0);

  const Image big = testsupport::toy_ridge_gray(3, 0, 512);
  const Image out512 = net.render(big, z1);
  CHECK(out512.rows() == 512);
}

TEST_CASE("render: non multiple-of-8 input is RenderError") {
  TextureRenderer net(4, 2);
  try {
    net.render(Image::Ones(100, 100), sample_texture_latent(1));
    FAIL("expected RenderError");
  } catch (const Error& e) {
    CHECK(e.code() == "RenderError");
  }
}

TEST_CASE("checkpoint: material and parent metadata round-trip") {
  const auto dir = testsupport::make_temp_dir("rend_ckpt");
  TextureRenderer net(4, 5);
  net.set_material("ecoflex");
  net.set_parent("all_spoof");
  net.save(dir / "r.ckpt", 100);

  TextureRenderer back = TextureRenderer::load(dir / "r.ckpt");
  CHECK(back.material() == "ecoflex");
  CHECK(back.parent() == "all_spoof");

  const Image warped = testsupport::toy_ridge_gray(1, 0, 64);
  const auto z = sample_texture_latent(3);
  const Image a = net.render(warped, z);
  const Image b = back.render(warped, z);
  for (long i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

namespace {

RendererTrainConfig tiny_config(std::uint64_t seed) {
  RendererTrainConfig cfg;
  cfg.base_channels = 4;
  cfg.disc_channels = 8;
  cfg.train_resolution = 64;
  cfg.steps = 4;
  cfg.batch = 2;
  cfg.seed = seed;
  cfg.finetune_epochs = 1;
  return cfg;
}

}  // namespace

TEST_CASE("train_renderer: material scoping and error contracts") {
  const auto dir = testsupport::make_temp_dir("rend_train");
  const Dataset ds =
      testsupport::write_toy_dataset(dir, 2, 2, {"live", "ecoflex"}, 8, 64);
  CnnEmbedder embedder(4, 1);
  Binarizer binarizer(4, 2);

  SUBCASE("fine-tune without a parent is LineageError") {
    try {
      train_renderer(ds, std::nullopt, "ecoflex", embedder, binarizer, tiny_config(1));
      FAIL("expected LineageError");
    } catch (const Error& e) {
      CHECK(e.code() == "LineageError");
    }
  }
  SUBCASE("unknown material is EmptyMaterialError") {
    auto base = train_renderer(ds, std::nullopt, "live", embedder, binarizer, tiny_config(2));
    try {
      train_renderer(ds, base.renderer, "playdoh", embedder, binarizer, tiny_config(3));
      FAIL("expected EmptyMaterialError");
    } catch (const Error& e) {
      CHECK(e.code() == "EmptyMaterialError");
    }
  }
  SUBCASE("loss log has the component columns") {
    auto cfg = tiny_config(4);
    cfg.loss_log = dir / "loss.csv";
    train_renderer(ds, std::nullopt, "live", embedder, binarizer, cfg);
    std::ifstream log(cfg.loss_log);
    std::string header;
    std::getline(log, header);
    CHECK(header == "step,L_adv,L_dp,L_i");
  }
}

TEST_CASE("renderer schedule: lineage bookkeeping") {
  const auto dir = testsupport::make_temp_dir("rend_sched");
  const Dataset ds = testsupport::write_toy_dataset(dir / "toy", 2, 2,
                                                    {"live", "ecoflex", "gelatine"}, 13, 64);
  CnnEmbedder embedder(4, 1);
  Binarizer binarizer(4, 2);

  const auto lineage_path =
      run_renderer_schedule(ds, embedder, binarizer, tiny_config(5), dir / "ckpts");
  std::ifstream in(lineage_path);
  const auto lineage = nlohmann::json::parse(in);

  REQUIRE(lineage.contains("pretrain"));
  REQUIRE(lineage.contains("live"));
  REQUIRE(lineage.contains("all_spoof"));
  REQUIRE(lineage.contains("ecoflex"));
  REQUIRE(lineage.contains("gelatine"));
  CHECK(lineage["live"]["parent"] == "pretrain");
  CHECK(lineage["all_spoof"]["parent"] == "pretrain");
  CHECK(lineage["ecoflex"]["parent"] == "all_spoof");

  // checkpoints record their lineage too
  TextureRenderer eco = TextureRenderer::load(lineage["ecoflex"]["path"].get<std::string>());
  CHECK(eco.material() == "ecoflex");
  CHECK(eco.parent() == "all_spoof");
}
