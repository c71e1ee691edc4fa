#pragma once

#include <Eigen/Dense>

#include "forge/errors.hpp"

namespace forge::nn {

inline float softplus(float x) {
  // log(1 + e^x), stable for large |x|
  return std::max(x, 0.0f) + std::log1p(std::exp(-std::abs(x)));
}

inline float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

inline constexpr float kLogitClamp = 30.0f;

// Two-sided GAN loss on raw discriminator logits:
//   loss_D = -mean log sigmoid(d_real) - mean log(1 - sigmoid(d_fake))
//   loss_G = -mean log sigmoid(d_fake)          (non-saturating form)
// Logits are clamped to +-30 before the log-sigmoid; the grads below are the
// derivatives w.r.t. the (clamped) logits.
struct GanLossResult {
  double loss_g = 0.0;
  double loss_d = 0.0;
  Eigen::VectorXf grad_d_real;  // d loss_D / d d_real
  Eigen::VectorXf grad_d_fake;  // d loss_D / d d_fake
  Eigen::VectorXf grad_g_fake;  // d loss_G / d d_fake
};

inline GanLossResult gan_loss(const Eigen::VectorXf& d_real,
                              const Eigen::VectorXf& d_fake) {
  require(d_real.size() > 0 && d_fake.size() > 0, "EmptyBatch",
          "discriminator score batches must be non-empty");
  require(d_real.allFinite() && d_fake.allFinite(), "EmptyBatch",
          "discriminator scores must be finite");
  GanLossResult r;
  const auto real = d_real.array().min(kLogitClamp).max(-kLogitClamp);
  const auto fake = d_fake.array().min(kLogitClamp).max(-kLogitClamp);
  const float inv_r = 1.0f / static_cast<float>(d_real.size());
  const float inv_f = 1.0f / static_cast<float>(d_fake.size());

  r.grad_d_real.resize(d_real.size());
  r.grad_d_fake.resize(d_fake.size());
  r.grad_g_fake.resize(d_fake.size());
  for (long i = 0; i < d_real.size(); ++i) {
    r.loss_d += softplus(-real(i)) * inv_r;  // -log sigmoid(d_real)
    r.grad_d_real(i) = -(1.0f - sigmoid(real(i))) * inv_r;
  }
  for (long i = 0; i < d_fake.size(); ++i) {
    r.loss_d += softplus(fake(i)) * inv_f;  // -log(1 - sigmoid(d_fake))
    r.loss_g += softplus(-fake(i)) * inv_f;
    r.grad_d_fake(i) = sigmoid(fake(i)) * inv_f;
    r.grad_g_fake(i) = -(1.0f - sigmoid(fake(i))) * inv_f;
  }
  return r;
}

// Binary cross-entropy on logits; targets in [0,1]. Returns the mean loss and
// fills `grad` with d loss / d logits.
inline double bce_with_logits(const Eigen::MatrixXf& logits, const Eigen::MatrixXf& targets,
                              Eigen::MatrixXf& grad) {
  require(logits.rows() == targets.rows() && logits.cols() == targets.cols(),
          "LossError", "logit/target shape mismatch");
  const float inv_n = 1.0f / static_cast<float>(logits.size());
  double loss = 0.0;
  grad.resize(logits.rows(), logits.cols());
  for (long i = 0; i < logits.size(); ++i) {
    const float z = std::min(kLogitClamp, std::max(-kLogitClamp, logits.data()[i]));
    const float t = targets.data()[i];
    loss += (softplus(z) - t * z) * inv_n;
    grad.data()[i] = (sigmoid(z) - t) * inv_n;
  }
  return loss;
}

}  // namespace forge::nn
