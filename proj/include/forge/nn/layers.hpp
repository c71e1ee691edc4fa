#pragma once

#include <memory>
#include <string>
#include <vector>

#include "forge/nn/tensor.hpp"
#include "forge/random.hpp"

namespace forge::nn {

struct ParamRef {
  std::string name;
  Eigen::MatrixXf* value = nullptr;
  Eigen::MatrixXf* grad = nullptr;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, bool train) = 0;
  // Gradient w.r.t. the input of the last forward; accumulates param grads.
  virtual Tensor backward(const Tensor& gy) = 0;
  virtual void collect(std::vector<ParamRef>& out, const std::string& prefix) {
    (void)out;
    (void)prefix;
  }
};

// k x k convolution, stride 1, same padding (k odd). im2col + GEMM.
class Conv2d : public Layer {
 public:
  Conv2d(int in_ch, int out_ch, int k, Rng& rng, bool zero_init = false);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& gy) override;
  void collect(std::vector<ParamRef>& out, const std::string& prefix) override;

  Eigen::MatrixXf w;  // (out_ch, in_ch*k*k)
  Eigen::MatrixXf b;  // (out_ch, 1)
  Eigen::MatrixXf gw, gb;

 private:
  void im2col(const Tensor& x, int s, Eigen::MatrixXf& cols) const;
  int in_ch_, out_ch_, k_;
  Tensor x_;  // cached input
};

class Dense : public Layer {
 public:
  Dense(int in, int out, Rng& rng, bool zero_init = false);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& gy) override;
  void collect(std::vector<ParamRef>& out, const std::string& prefix) override;

  Eigen::MatrixXf w, b, gw, gb;

 private:
  Tensor x_;
};

class LeakyReLU : public Layer {
 public:
  explicit LeakyReLU(float alpha = 0.2f) : alpha_(alpha) {}
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& gy) override;

 private:
  float alpha_;
  Tensor x_;
};

class Sigmoid : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& gy) override;

 private:
  Tensor y_;
};

class Tanh : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& gy) override;

 private:
  Tensor y_;
};

// 2x2 mean pooling, stride 2 (dims must be even).
class AvgPool2 : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& gy) override;

 private:
  int in_h_ = 0, in_w_ = 0;
};

// 3x3 mean pooling, stride 1, same padding (zero-padded borders).
class AvgPool3s1 : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& gy) override;

 private:
  int in_h_ = 0, in_w_ = 0;
};

// Nearest-neighbor 2x upsampling.
class Upsample2 : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& gy) override;

 private:
  int in_h_ = 0, in_w_ = 0;
};

class GlobalAvgPool : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& gy) override;

 private:
  int in_h_ = 0, in_w_ = 0;
};

// (n, c, h, w) -> (n, c*h*w, 1, 1).
class Flatten : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& gy) override;

 private:
  int c_ = 0, h_ = 0, w_ = 0;
};

// Per-sample, per-channel normalization. With `affine` the scale/shift are
// learned; otherwise external style parameters may be injected per batch
// (set_style), which is how the texture decoder receives gamma/beta.
class InstanceNorm : public Layer {
 public:
  InstanceNorm(int ch, bool affine);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& gy) override;
  void collect(std::vector<ParamRef>& out, const std::string& prefix) override;

  // Injected modulation: gamma/beta are (c, n). Cleared after each forward
  // grad cycle; style_grad_* expose dL/dgamma, dL/dbeta for the style path.
  void set_style(const Eigen::MatrixXf& gamma, const Eigen::MatrixXf& beta);
  const Eigen::MatrixXf& style_grad_gamma() const { return g_gamma_; }
  const Eigen::MatrixXf& style_grad_beta() const { return g_beta_; }

  Eigen::MatrixXf w, b, gw, gb;  // affine parameters (c, 1) when affine

 private:
  int ch_;
  bool affine_;
  bool styled_ = false;
  Eigen::MatrixXf gamma_, beta_;      // (c, n) when styled
  Eigen::MatrixXf g_gamma_, g_beta_;  // grads for the style inputs
  Tensor xhat_;
  Eigen::MatrixXf inv_std_;  // (c, n)
};

// y = x + inner(x). Used for residual up/down blocks.
class Residual : public Layer {
 public:
  Residual(std::unique_ptr<Layer> main, std::unique_ptr<Layer> skip)
      : main_(std::move(main)), skip_(std::move(skip)) {}
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& gy) override;
  void collect(std::vector<ParamRef>& out, const std::string& prefix) override;

 private:
  std::unique_ptr<Layer> main_, skip_;
};

class Sequential : public Layer {
 public:
  Sequential() = default;

  template <class L, class... Args>
  L* add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L* raw = layer.get();
    layers_.push_back(std::move(layer));
    return raw;
  }
  void push(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& gy) override;
  void collect(std::vector<ParamRef>& out, const std::string& prefix) override;

  size_t size() const { return layers_.size(); }
  Layer* at(size_t i) { return layers_[i].get(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Inception-style block: parallel 1x1, 1x1->3x3 and pool->1x1 branches,
// concatenated along channels.
class InceptionBlock : public Layer {
 public:
  InceptionBlock(int in_ch, int b1, int b3_reduce, int b3, int bp, Rng& rng);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& gy) override;
  void collect(std::vector<ParamRef>& out, const std::string& prefix) override;

  int out_channels() const { return b1_ + b3_ + bp_; }

 private:
  int b1_, b3_, bp_;
  Sequential branch1_, branch3_, branchp_;
};

}  // namespace forge::nn
