#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "forge/nn/checkpoint.hpp"
#include "forge/nn/layers.hpp"
#include "forge/nn/losses.hpp"
#include "forge/nn/optimizer.hpp"
#include "forge/nn/tensor.hpp"
#include "forge/random.hpp"
#include "toy.hpp"

using namespace forge;
using namespace forge::nn;

namespace {

Tensor random_tensor(int n, int c, int h, int w, Rng& rng, float scale = 1.0f) {
  Tensor t(n, c, h, w);
  for (long i = 0; i < t.d.size(); ++i) t.d.data()[i] = scale * rng.normal_f();
  return t;
}

double objective(Layer& layer, const Tensor& x, const Tensor& probe) {
  Tensor y = layer.forward(x, false);
  return (y.d.array().cast<double>() * probe.d.array().cast<double>()).sum();
}

// Central finite differences against the analytic input gradient, plus a few
// parameter entries when the layer has any.
void check_gradients(Layer& layer, Tensor x, Rng& rng, double tol = 2e-2) {
  Tensor y = layer.forward(x, true);
  Tensor probe = random_tensor(y.n, y.c, y.h, y.w, rng);

  std::vector<ParamRef> params;
  layer.collect(params, "p");
  for (auto& p : params) p.grad->setZero();

  const Tensor gx = layer.backward(probe);

  const float h = 1e-2f;
  for (int check = 0; check < 12; ++check) {
    const long i = static_cast<long>(rng.below(x.d.size()));
    Tensor xp = x, xm = x;
    xp.d.data()[i] += h;
    xm.d.data()[i] -= h;
    const double numeric = (objective(layer, xp, probe) - objective(layer, xm, probe)) /
                           (2.0 * h);
    const double analytic = gx.d.data()[i];
    CHECK(std::abs(numeric - analytic) <= tol * std::max(1.0, std::abs(analytic)));
  }

  for (auto& p : params) {
    for (int check = 0; check < 4; ++check) {
      const long i = static_cast<long>(rng.below(p.value->size()));
      const float keep = p.value->data()[i];
      p.value->data()[i] = keep + h;
      const double jp = objective(layer, x, probe);
      p.value->data()[i] = keep - h;
      const double jm = objective(layer, x, probe);
      p.value->data()[i] = keep;
      const double numeric = (jp - jm) / (2.0 * h);
      const double analytic = p.grad->data()[i];
      CHECK(std::abs(numeric - analytic) <= tol * std::max(1.0, std::abs(analytic)));
    }
  }
}

}  // namespace

TEST_CASE("conv2d gradients (k=1,3,5)") {
  Rng rng(1);
  for (int k : {1, 3, 5}) {
    Conv2d conv(3, 4, k, rng);
    check_gradients(conv, random_tensor(2, 3, 8, 8, rng), rng);
  }
}

TEST_CASE("dense gradients") {
  Rng rng(2);
  Dense dense(10, 7, rng);
  check_gradients(dense, random_tensor(3, 10, 1, 1, rng), rng);
}

TEST_CASE("activation gradients") {
  Rng rng(3);
  LeakyReLU lrelu(0.2f);
  check_gradients(lrelu, random_tensor(2, 3, 4, 4, rng), rng);
  Sigmoid sig;
  check_gradients(sig, random_tensor(2, 3, 4, 4, rng), rng);
  Tanh tanh;
  check_gradients(tanh, random_tensor(2, 3, 4, 4, rng), rng);
}

TEST_CASE("pooling and resampling gradients") {
  Rng rng(4);
  AvgPool2 pool;
  check_gradients(pool, random_tensor(2, 3, 8, 8, rng), rng);
  AvgPool3s1 pool3;
  check_gradients(pool3, random_tensor(2, 3, 6, 6, rng), rng);
  Upsample2 up;
  check_gradients(up, random_tensor(2, 3, 4, 4, rng), rng);
  GlobalAvgPool gap;
  check_gradients(gap, random_tensor(2, 3, 6, 6, rng), rng);
  Flatten flat;
  check_gradients(flat, random_tensor(2, 3, 4, 4, rng), rng);
}

TEST_CASE("instance norm gradients (affine)") {
  Rng rng(5);
  InstanceNorm norm(3, true);
  check_gradients(norm, random_tensor(2, 3, 6, 6, rng), rng, 5e-2);
}

TEST_CASE("instance norm style injection gradients") {
  Rng rng(6);
  InstanceNorm norm(3, false);
  Tensor x = random_tensor(2, 3, 6, 6, rng);
  Eigen::MatrixXf gamma(3, 2), beta(3, 2);
  for (long i = 0; i < gamma.size(); ++i) gamma.data()[i] = 1.0f + 0.2f * rng.normal_f();
  for (long i = 0; i < beta.size(); ++i) beta.data()[i] = 0.1f * rng.normal_f();

  norm.set_style(gamma, beta);
  Tensor y = norm.forward(x, true);
  Tensor probe = random_tensor(y.n, y.c, y.h, y.w, rng);
  norm.backward(probe);
  const Eigen::MatrixXf g_gamma = norm.style_grad_gamma();
  const Eigen::MatrixXf g_beta = norm.style_grad_beta();

  const float h = 1e-2f;
  const auto objective_style = [&](const Eigen::MatrixXf& g, const Eigen::MatrixXf& b) {
    norm.set_style(g, b);
    Tensor out = norm.forward(x, false);
    return (out.d.array().cast<double>() * probe.d.array().cast<double>()).sum();
  };
  for (int check = 0; check < 6; ++check) {
    const long i = static_cast<long>(rng.below(gamma.size()));
    Eigen::MatrixXf gp = gamma, gm = gamma;
    gp.data()[i] += h;
    gm.data()[i] -= h;
    const double numeric = (objective_style(gp, beta) - objective_style(gm, beta)) / (2.0 * h);
    CHECK(std::abs(numeric - g_gamma.data()[i]) <=
          2e-2 * std::max(1.0, std::abs(double(g_gamma.data()[i]))));

    Eigen::MatrixXf bp = beta, bm = beta;
    bp.data()[i] += h;
    bm.data()[i] -= h;
    const double nb = (objective_style(gamma, bp) - objective_style(gamma, bm)) / (2.0 * h);
    CHECK(std::abs(nb - g_beta.data()[i]) <=
          2e-2 * std::max(1.0, std::abs(double(g_beta.data()[i]))));
  }
}

TEST_CASE("residual and inception block gradients") {
  Rng rng(7);
  {
    auto main = std::make_unique<Sequential>();
    main->add<Conv2d>(3, 3, 3, rng);
    main->add<LeakyReLU>();
    auto skip = std::make_unique<Sequential>();
    skip->add<Conv2d>(3, 3, 1, rng);
    Residual res(std::move(main), std::move(skip));
    check_gradients(res, random_tensor(2, 3, 6, 6, rng), rng);
  }
  {
    InceptionBlock block(4, 3, 2, 4, 2, rng);
    check_gradients(block, random_tensor(2, 4, 6, 6, rng), rng);
  }
}

TEST_CASE("gan loss: analytic values at zero logits") {
  const Eigen::VectorXf zeros = Eigen::VectorXf::Zero(4);
  const GanLossResult r = gan_loss(zeros, zeros);
  CHECK(r.loss_d == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-6));
  CHECK(r.loss_g == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("gan loss: perfect discriminator limit under clamping") {
  Eigen::VectorXf real(2), fake(2);
  real << 1000.0f, 1000.0f;   // clamps to +30
  fake << -1000.0f, -1000.0f; // clamps to -30
  const GanLossResult r = gan_loss(real, fake);
  CHECK(r.loss_d < 1e-12);
  CHECK(r.loss_g > 29.0);  // -log sigmoid(-30) ~ 30
}

TEST_CASE("gan loss: matches independent scalar recomputation on random batches") {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const int nr = 1 + static_cast<int>(rng.below(6));
    const int nf = 1 + static_cast<int>(rng.below(6));
    Eigen::VectorXf real(nr), fake(nf);
    for (int i = 0; i < nr; ++i) real[i] = static_cast<float>(rng.uniform(-5, 5));
    for (int i = 0; i < nf; ++i) fake[i] = static_cast<float>(rng.uniform(-5, 5));
    const GanLossResult r = gan_loss(real, fake);

    // hand recomputation with doubles
    double ld = 0.0, lg = 0.0;
    for (int i = 0; i < nr; ++i)
      ld += -std::log(1.0 / (1.0 + std::exp(-double(real[i])))) / nr;
    for (int i = 0; i < nf; ++i) {
      ld += -std::log(1.0 - 1.0 / (1.0 + std::exp(-double(fake[i])))) / nf;
      lg += -std::log(1.0 / (1.0 + std::exp(-double(fake[i])))) / nf;
    }
    CHECK(r.loss_d == doctest::Approx(ld).epsilon(1e-6));
    CHECK(r.loss_g == doctest::Approx(lg).epsilon(1e-6));
  }
}

TEST_CASE("gan loss: gradients match finite differences") {
  Rng rng(9);
  Eigen::VectorXf real(3), fake(3);
  for (int i = 0; i < 3; ++i) {
    real[i] = static_cast<float>(rng.uniform(-2, 2));
    fake[i] = static_cast<float>(rng.uniform(-2, 2));
  }
  const GanLossResult r = gan_loss(real, fake);
  const float h = 1e-3f;
  for (int i = 0; i < 3; ++i) {
    Eigen::VectorXf rp = real, rm = real;
    rp[i] += h;
    rm[i] -= h;
    const double num = (gan_loss(rp, fake).loss_d - gan_loss(rm, fake).loss_d) / (2.0 * h);
    CHECK(num == doctest::Approx(r.grad_d_real[i]).epsilon(1e-2));

    Eigen::VectorXf fp = fake, fm = fake;
    fp[i] += h;
    fm[i] -= h;
    const double numd = (gan_loss(real, fp).loss_d - gan_loss(real, fm).loss_d) / (2.0 * h);
    CHECK(numd == doctest::Approx(r.grad_d_fake[i]).epsilon(1e-2));
    const double numg = (gan_loss(real, fp).loss_g - gan_loss(real, fm).loss_g) / (2.0 * h);
    CHECK(numg == doctest::Approx(r.grad_g_fake[i]).epsilon(1e-2));
  }
}

TEST_CASE("gan loss: empty batch raises EmptyBatch") {
  try {
    gan_loss(Eigen::VectorXf(), Eigen::VectorXf::Zero(2));
    FAIL("expected EmptyBatch");
  } catch (const Error& e) {
    CHECK(e.code() == "EmptyBatch");
  }
}

TEST_CASE("bce with logits: value and gradient") {
  Rng rng(10);
  Eigen::MatrixXf logits(1, 5), targets(1, 5);
  for (int i = 0; i < 5; ++i) {
    logits(0, i) = static_cast<float>(rng.uniform(-3, 3));
    targets(0, i) = rng.uniform() < 0.5 ? 0.0f : 1.0f;
  }
  Eigen::MatrixXf grad;
  const double loss = bce_with_logits(logits, targets, grad);

  double expect = 0.0;
  for (int i = 0; i < 5; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-double(logits(0, i))));
    expect += -(targets(0, i) * std::log(p) + (1 - targets(0, i)) * std::log(1 - p)) / 5.0;
  }
  CHECK(loss == doctest::Approx(expect).epsilon(1e-5));

  const float h = 1e-3f;
  for (int i = 0; i < 5; ++i) {
    Eigen::MatrixXf lp = logits, lm = logits;
    lp(0, i) += h;
    lm(0, i) -= h;
    Eigen::MatrixXf tmp;
    const double num =
        (bce_with_logits(lp, targets, tmp) - bce_with_logits(lm, targets, tmp)) / (2.0 * h);
    CHECK(num == doctest::Approx(grad(0, i)).epsilon(2e-2));
  }
}

TEST_CASE("adam converges on a quadratic and applies step decay") {
  Eigen::MatrixXf w = Eigen::MatrixXf::Zero(1, 1);
  Eigen::MatrixXf g = Eigen::MatrixXf::Zero(1, 1);
  Adam opt({{"w", &w, &g}}, 0.1f);
  for (int i = 0; i < 500; ++i) {
    g(0, 0) = w(0, 0) - 3.0f;
    opt.step();
  }
  CHECK(w(0, 0) == doctest::Approx(3.0f).epsilon(1e-2));

  Adam decayed({{"w", &w, &g}}, 0.1f);
  decayed.set_step_decay(10, 0.5f);
  for (int i = 0; i < 20; ++i) {
    g(0, 0) = 0.0f;
    decayed.step();
  }
  CHECK(decayed.lr() == doctest::Approx(0.025f));
}

TEST_CASE("checkpoint params round-trip and reject shape changes") {
  const auto dir = testsupport::make_temp_dir("nn_ckpt");
  Rng rng(11);
  Conv2d conv(2, 3, 3, rng);
  std::vector<ParamRef> refs;
  conv.collect(refs, "conv");

  Container c("test");
  save_params(c, refs);
  c.save(dir / "w.bin");

  Conv2d other(2, 3, 3, rng);
  std::vector<ParamRef> other_refs;
  other.collect(other_refs, "conv");
  load_params(Container::load(dir / "w.bin"), other_refs);
  CHECK(other.w == conv.w);

  Conv2d mismatched(2, 4, 3, rng);
  std::vector<ParamRef> bad_refs;
  mismatched.collect(bad_refs, "conv");
  try {
    load_params(Container::load(dir / "w.bin"), bad_refs);
    FAIL("expected ParamsError");
  } catch (const Error& e) {
    CHECK(e.code() == "ParamsError");
  }
}
