#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "forge/container.hpp"
#include "forge/errors.hpp"
#include "forge/masterprint.hpp"
#include "toy.hpp"

using namespace forge;

TEST_CASE("identity latent: deterministic, correct length, normal moments") {
  const auto a = sample_identity_latent(42);
  const auto b = sample_identity_latent(42);
  REQUIRE(a.z.size() == 256);
  CHECK(a.z == b.z);

  const auto c = sample_identity_latent(43);
  CHECK(a.z != c.z);

  // Monte-Carlo moments over many draws
  double sum = 0.0, sum2 = 0.0;
  long n = 0;
  for (int seed = 0; seed < 40; ++seed) {
    const auto z = sample_identity_latent(seed);
    for (int i = 0; i < z.z.size(); ++i) {
      sum += z.z[i];
      sum2 += double(z.z[i]) * z.z[i];
      ++n;
    }
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.05);
  CHECK(std::abs(var - 1.0) < 0.1);
}

TEST_CASE("generation: deterministic, in range, 256x256") {
  MasterPrintGan gan(16, 4, 7);
  const auto z = sample_identity_latent(1);
  const MasterPrint a = gan.generate(z);
  const MasterPrint b = gan.generate(z);
  REQUIRE(a.image.rows() == 256);
  REQUIRE(a.image.cols() == 256);
  CHECK(a.image.minCoeff() >= 0.0f);
  CHECK(a.image.maxCoeff() <= 1.0f);
  for (long i = 0; i < a.image.size(); ++i) CHECK(a.image.data()[i] == b.image.data()[i]);

  const Image hard = a.hard();
  for (long i = 0; i < hard.size(); ++i)
    CHECK((hard.data()[i] == 0.0f || hard.data()[i] == 1.0f));
}

TEST_CASE("generation: malformed latent is ParamsError") {
  MasterPrintGan gan(8, 4, 7);
  IdentityLatent bad;
  bad.z = Eigen::VectorXf::Zero(100);
  try {
    gan.generate(bad);
    FAIL("expected ParamsError");
  } catch (const Error& e) {
    CHECK(e.code() == "ParamsError");
  }
}

TEST_CASE("adversarial_loss wraps the shared two-sided loss") {
  const Eigen::VectorXf zeros = Eigen::VectorXf::Zero(3);
  const auto r = adversarial_loss(zeros, zeros);
  CHECK(r.loss_d == doctest::Approx(2.0 * std::log(2.0)));
  CHECK(r.loss_g == doctest::Approx(std::log(2.0)));
}

TEST_CASE("training rejects spoof records") {
  const auto dir = testsupport::make_temp_dir("gan_spoof");
  const Dataset ds =
      testsupport::write_toy_dataset(dir, 1, 1, {"live", "ecoflex"}, 5, 256);
  MasterGanConfig cfg;
  cfg.steps = 1;
  try {
    train_masterprint_gan(ds, cfg);
    FAIL("expected TrainConfigError");
  } catch (const Error& e) {
    CHECK(e.code() == "TrainConfigError");
  }
}

TEST_CASE("training rejects non-binary images") {
  const auto dir = testsupport::make_temp_dir("gan_gray");
  const Dataset ds = testsupport::write_toy_dataset(dir, 1, 1, {"live"}, 6, 256);
  MasterGanConfig cfg;
  cfg.steps = 1;
  try {
    train_masterprint_gan(ds, cfg);
    FAIL("expected TrainConfigError");
  } catch (const Error& e) {
    CHECK(e.code() == "TrainConfigError");
  }
}

TEST_CASE("short training run: losses finite, log written, checkpoint round-trips") {
  const auto dir = testsupport::make_temp_dir("gan_short");
  const Dataset ds = testsupport::write_toy_binary_dataset(dir / "data", 8, 21);

  MasterGanConfig cfg;
  cfg.base_channels = 16;
  cfg.min_channels = 4;
  cfg.steps = 6;
  cfg.batch = 2;
  cfg.seed = 3;
  cfg.loss_log = dir / "loss.csv";
  auto result = train_masterprint_gan(ds, cfg);
  REQUIRE(result.loss_d.size() == 6);
  for (double v : result.loss_d) CHECK(std::isfinite(v));
  for (double v : result.loss_g) CHECK(std::isfinite(v));

  std::ifstream log(cfg.loss_log);
  std::string header;
  std::getline(log, header);
  CHECK(header == "step,loss_G,loss_D");

  result.gan.save(dir / "gan.ckpt", cfg.steps);
  MasterPrintGan back = MasterPrintGan::load(dir / "gan.ckpt");
  const auto z = sample_identity_latent(9);
  const Image a = result.gan.generate(z).image;
  const Image b = back.generate(z).image;
  for (long i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("checkpoint with different architecture fails to load") {
  const auto dir = testsupport::make_temp_dir("gan_mismatch");
  MasterPrintGan gan(8, 4, 1);
  gan.save(dir / "g.ckpt");

  // tamper with the recorded architecture
  Container c = Container::load(dir / "g.ckpt");
  c.meta()["base_channels"] = 16;
  c.save(dir / "g2.ckpt");
  try {
    MasterPrintGan::load(dir / "g2.ckpt");
    FAIL("expected ParamsError");
  } catch (const Error& e) {
    CHECK(e.code() == "ParamsError");
  }
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto dir = testsupport::make_temp_dir("gan_det");
  const Dataset ds = testsupport::write_toy_binary_dataset(dir / "data", 6, 22);
  MasterGanConfig cfg;
  cfg.base_channels = 8;
  cfg.steps = 4;
  cfg.batch = 2;
  cfg.seed = 11;
  auto a = train_masterprint_gan(ds, cfg);
  auto b = train_masterprint_gan(ds, cfg);
  CHECK(a.loss_d == b.loss_d);
  CHECK(a.loss_g == b.loss_g);
  const auto z = sample_identity_latent(2);
  const Image ia = a.gan.generate(z).image;
  const Image ib = b.gan.generate(z).image;
  for (long i = 0; i < ia.size(); ++i) CHECK(ia.data()[i] == ib.data()[i]);
}
