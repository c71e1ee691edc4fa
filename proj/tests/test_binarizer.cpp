#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "forge/binarizer.hpp"
#include "forge/errors.hpp"
#include "forge/nn/tensor.hpp"
#include "forge/random.hpp"
#include "toy.hpp"

using namespace forge;

TEST_CASE("classical: constant image is all background") {
  const Image out = classical_binarize(Image::Constant(96, 96, 0.42f));
  CHECK(out.maxCoeff() == 0.0f);
}

TEST_CASE("classical: vertical sinusoid of period 9 gives ridge bands") {
  const int n = 128;
  Image img(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      img(y, x) = 0.5f + 0.45f * std::sin(2.0 * M_PI * x / 9.0);
  const Image out = classical_binarize(img);

  const double fraction = out.sum() / static_cast<double>(out.size());
  CHECK(fraction >= 0.4);
  CHECK(fraction <= 0.6);

  // band widths along a middle row, away from the borders
  int width = 0;
  std::vector<int> widths;
  for (int x = 20; x < n - 20; ++x) {
    if (out(64, x) > 0.5f) {
      ++width;
    } else if (width > 0) {
      widths.push_back(width);
      width = 0;
    }
  }
  REQUIRE(!widths.empty());
  for (int w : widths) {
    CHECK(w >= 4);
    CHECK(w <= 5);
  }
}

TEST_CASE("classical: inverting the input inverts the assignment") {
  const int n = 128;
  Image img(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      img(y, x) = 0.5f + 0.45f * std::sin(2.0 * M_PI * x / 9.0);
  const Image a = classical_binarize(img);
  const Image b = classical_binarize((1.0f - img).eval());
  // ridge sets must be disjoint and cover a similar area
  int overlap = 0;
  for (long i = 0; i < a.size(); ++i)
    overlap += (a.data()[i] > 0.5f && b.data()[i] > 0.5f) ? 1 : 0;
  CHECK(overlap == 0);
  CHECK(std::abs(a.sum() - b.sum()) / a.size() < 0.1);
}

TEST_CASE("prepare_binary_256 yields strict {0,1} at 256x256") {
  const Image gray = testsupport::toy_print(3, 0, "live", 320);
  const Image bin = prepare_binary_256(gray);
  CHECK(bin.rows() == 256);
  CHECK(bin.cols() == 256);
  for (long i = 0; i < bin.size(); ++i)
    CHECK((bin.data()[i] == 0.0f || bin.data()[i] == 1.0f));
}

TEST_CASE("autoencoder: output range and shape") {
  Binarizer net(4, 123);
  Rng rng(5);
  Image img(64, 64);
  for (long i = 0; i < img.size(); ++i) img.data()[i] = static_cast<float>(rng.uniform());
  const Image out = net.binarize(img);
  CHECK(out.rows() == 64);
  CHECK(out.cols() == 64);
  CHECK(out.minCoeff() >= 0.0f);
  CHECK(out.maxCoeff() <= 1.0f);
}

TEST_CASE("autoencoder: gradient w.r.t. input matches finite differences") {
  Binarizer net(4, 7);
  Rng rng(8);
  nn::Tensor x(1, 1, 32, 32);
  for (long i = 0; i < x.d.size(); ++i) x.d.data()[i] = static_cast<float>(rng.uniform());

  // objective: mean of the soft output
  nn::Tensor y = net.forward_soft(x, true);
  nn::Tensor gy = y;
  gy.d.setConstant(1.0f / static_cast<float>(y.d.size()));
  const nn::Tensor gx = net.backward_soft(gy);

  const float h = 1e-2f;
  int checked = 0;
  for (int trial = 0; trial < 16; ++trial) {
    const long i = static_cast<long>(rng.below(x.d.size()));
    nn::Tensor xp = x, xm = x;
    xp.d.data()[i] += h;
    xm.d.data()[i] -= h;
    const double jp = net.forward_soft(xp, false).d.mean();
    const double jm = net.forward_soft(xm, false).d.mean();
    const double numeric = (jp - jm) / (2.0 * h);
    const double analytic = gx.d.data()[i];
    if (std::abs(analytic) < 1e-7 && std::abs(numeric) < 1e-4) continue;  // flat spot
    CHECK(std::abs(numeric - analytic) <= 1e-3 + 1e-3 * std::abs(analytic));
    ++checked;
  }
  CHECK(checked >= 8);
}

TEST_CASE("training: single pair memorization reaches 0.99 accuracy") {
  const Image gray = testsupport::toy_print(11, 0, "live", 64);
  const Image binary = classical_binarize(gray);

  BinarizerTrainConfig cfg;
  cfg.base_channels = 6;
  cfg.steps = 260;
  cfg.batch = 2;
  cfg.crop = 0;  // whole image
  cfg.lr = 3e-3f;
  cfg.seed = 42;
  auto result = train_binarizer({{gray, binary}}, cfg);
  const double acc = binarizer_accuracy(result.net, {{gray, binary}});
  CHECK(acc >= 0.99);
}

TEST_CASE("training: deterministic under a fixed seed") {
  const Image gray = testsupport::toy_print(12, 0, "live", 64);
  const Image binary = classical_binarize(gray);
  BinarizerTrainConfig cfg;
  cfg.base_channels = 4;
  cfg.steps = 30;
  cfg.batch = 2;
  cfg.crop = 32;
  cfg.seed = 9;
  const auto a = train_binarizer({{gray, binary}}, cfg);
  const auto b = train_binarizer({{gray, binary}}, cfg);
  REQUIRE(a.losses.size() == b.losses.size());
  CHECK(std::abs(a.final_loss - b.final_loss) < 1e-6);
}

TEST_CASE("training: mismatched pair shapes are TrainConfigError") {
  try {
    train_binarizer({{Image::Ones(32, 32), Image::Ones(16, 16)}}, {});
    FAIL("expected TrainConfigError");
  } catch (const Error& e) {
    CHECK(e.code() == "TrainConfigError");
  }
}

TEST_CASE("training: non-binary targets are TrainConfigError") {
  try {
    train_binarizer({{Image::Ones(32, 32), Image::Constant(32, 32, 0.5f)}}, {});
    FAIL("expected TrainConfigError");
  } catch (const Error& e) {
    CHECK(e.code() == "TrainConfigError");
  }
}

TEST_CASE("checkpoint: save/load reproduces outputs bit for bit") {
  const auto dir = testsupport::make_temp_dir("bin_ckpt");
  Binarizer net(4, 77);
  net.save(dir / "b.ckpt");
  Binarizer back = Binarizer::load(dir / "b.ckpt");

  const Image img = testsupport::toy_print(1, 0, "live", 64);
  const Image a = net.binarize(img);
  const Image b = back.binarize(img);
  for (long i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("512 inputs are processed as four 256 tiles") {
  Binarizer net(4, 3);
  const Image big = testsupport::toy_print(2, 0, "live", 512);
  const Image out = net.binarize(big);
  CHECK(out.rows() == 512);
  CHECK(out.cols() == 512);

  // each quadrant equals the network applied to that tile alone
  Image tile(256, 256);
  for (int y = 0; y < 256; ++y)
    for (int x = 0; x < 256; ++x) tile(y, x) = big(y, x);
  const Image q = net.binarize(tile);
  for (int y = 0; y < 256; ++y)
    for (int x = 0; x < 256; ++x) CHECK(out(y, x) == q(y, x));
}
