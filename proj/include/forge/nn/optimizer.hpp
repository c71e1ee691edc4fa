#pragma once

#include <cmath>
#include <vector>

#include "forge/nn/layers.hpp"

namespace forge::nn {

// Adam with optional step-decay schedule (lr *= gamma every `decay_every`
// steps; 0 disables decay).
class Adam {
 public:
  explicit Adam(std::vector<ParamRef> params, float lr = 1e-3f, float beta1 = 0.9f,
                float beta2 = 0.999f, float eps = 1e-8f)
      : params_(std::move(params)), lr_(lr), base_lr_(lr), beta1_(beta1),
        beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
      m_.push_back(Eigen::MatrixXf::Zero(p.value->rows(), p.value->cols()));
      v_.push_back(Eigen::MatrixXf::Zero(p.value->rows(), p.value->cols()));
    }
  }

  void set_step_decay(int every, float gamma) {
    decay_every_ = every;
    decay_gamma_ = gamma;
  }

  void zero_grad() {
    for (const auto& p : params_) p.grad->setZero();
  }

  void step() {
    ++t_;
    if (decay_every_ > 0 && t_ % decay_every_ == 0) lr_ *= decay_gamma_;
    const float bc1 = 1.0f - std::pow(beta1_, static_cast<float>(t_));
    const float bc2 = 1.0f - std::pow(beta2_, static_cast<float>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      const Eigen::MatrixXf& g = *params_[i].grad;
      m_[i] = beta1_ * m_[i] + (1.0f - beta1_) * g;
      v_[i] = beta2_ * v_[i] + (1.0f - beta2_) * g.cwiseProduct(g);
      const Eigen::ArrayXXf mhat = m_[i].array() / bc1;
      const Eigen::ArrayXXf vhat = v_[i].array() / bc2;
      params_[i].value->array() -= lr_ * mhat / (vhat.sqrt() + eps_);
    }
  }

  float lr() const { return lr_; }
  int steps() const { return t_; }

 private:
  std::vector<ParamRef> params_;
  std::vector<Eigen::MatrixXf> m_, v_;
  float lr_, base_lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  int decay_every_ = 0;
  float decay_gamma_ = 1.0f;
};

}  // namespace forge::nn
