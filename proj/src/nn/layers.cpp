#include "forge/nn/layers.hpp"

#include <cmath>

namespace forge::nn {

namespace {

Eigen::MatrixXf he_init(int rows, int cols, int fan_in, Rng& rng) {
  Eigen::MatrixXf m(rows, cols);
  const float std = std::sqrt(2.0f / static_cast<float>(fan_in));
  for (long i = 0; i < m.size(); ++i) m.data()[i] = std * rng.normal_f();
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(int in_ch, int out_ch, int k, Rng& rng, bool zero_init)
    : in_ch_(in_ch), out_ch_(out_ch), k_(k) {
  require(k % 2 == 1, "ParamsError", "kernel size must be odd");
  w = zero_init ? Eigen::MatrixXf::Zero(out_ch, in_ch * k * k)
                : he_init(out_ch, in_ch * k * k, in_ch * k * k, rng);
  b = Eigen::MatrixXf::Zero(out_ch, 1);
  gw = Eigen::MatrixXf::Zero(out_ch, in_ch * k * k);
  gb = Eigen::MatrixXf::Zero(out_ch, 1);
}

void Conv2d::im2col(const Tensor& x, int s, Eigen::MatrixXf& cols) const {
  const int h = x.h, w_ = x.w, pad = k_ / 2;
  cols.setZero();
  const auto blk = x.sample(s);
  for (int ic = 0; ic < in_ch_; ++ic) {
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        const int row = (ic * k_ + ky) * k_ + kx;
        const int dy = ky - pad, dx = kx - pad;
        const int x_lo = std::max(0, -dx), x_hi = std::min(w_, w_ - dx);
        if (x_lo >= x_hi) continue;
        for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
          cols.block(row, y * w_ + x_lo, 1, x_hi - x_lo) =
              blk.block(ic, (y + dy) * w_ + x_lo + dx, 1, x_hi - x_lo);
        }
      }
    }
  }
}

Tensor Conv2d::forward(const Tensor& x, bool train) {
  require(x.c == in_ch_, "ParamsError",
          "conv expects " + std::to_string(in_ch_) + " channels, got " +
              std::to_string(x.c));
  if (train) x_ = x;
  Tensor y(x.n, out_ch_, x.h, x.w);
  Eigen::MatrixXf cols(in_ch_ * k_ * k_, x.pixels());
  for (int s = 0; s < x.n; ++s) {
    im2col(x, s, cols);
    y.sample(s).noalias() = w * cols;
    y.sample(s).colwise() += b.col(0);
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& gy) {
  Tensor gx(x_.n, in_ch_, x_.h, x_.w);
  Eigen::MatrixXf cols(in_ch_ * k_ * k_, x_.pixels());
  Eigen::MatrixXf gcols(in_ch_ * k_ * k_, x_.pixels());
  const int h = x_.h, w_ = x_.w, pad = k_ / 2;
  for (int s = 0; s < x_.n; ++s) {
    const auto gys = gy.sample(s);
    im2col(x_, s, cols);
    gw.noalias() += gys * cols.transpose();
    gb.col(0) += gys.rowwise().sum();
    gcols.noalias() = w.transpose() * gys;
    // col2im scatter-add
    auto gxs = gx.sample(s);
    for (int ic = 0; ic < in_ch_; ++ic) {
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          const int row = (ic * k_ + ky) * k_ + kx;
          const int dy = ky - pad, dx = kx - pad;
          const int x_lo = std::max(0, -dx), x_hi = std::min(w_, w_ - dx);
          if (x_lo >= x_hi) continue;
          for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
            gxs.block(ic, (y + dy) * w_ + x_lo + dx, 1, x_hi - x_lo) +=
                gcols.block(row, y * w_ + x_lo, 1, x_hi - x_lo);
          }
        }
      }
    }
  }
  return gx;
}

void Conv2d::collect(std::vector<ParamRef>& out, const std::string& prefix) {
  out.push_back({prefix + ".w", &w, &gw});
  out.push_back({prefix + ".b", &b, &gb});
}

// ---------------------------------------------------------------------------
// Dense

Dense::Dense(int in, int out, Rng& rng, bool zero_init) {
  w = zero_init ? Eigen::MatrixXf::Zero(out, in) : he_init(out, in, in, rng);
  b = Eigen::MatrixXf::Zero(out, 1);
  gw = Eigen::MatrixXf::Zero(out, in);
  gb = Eigen::MatrixXf::Zero(out, 1);
}

Tensor Dense::forward(const Tensor& x, bool train) {
  require(x.h == 1 && x.w == 1 && x.c == w.cols(), "ParamsError",
          "dense expects flattened input of size " + std::to_string(w.cols()));
  if (train) x_ = x;
  Tensor y(x.n, static_cast<int>(w.rows()), 1, 1);
  y.d.noalias() = w * x.d;
  y.d.colwise() += b.col(0);
  return y;
}

Tensor Dense::backward(const Tensor& gy) {
  gw.noalias() += gy.d * x_.d.transpose();
  gb.col(0) += gy.d.rowwise().sum();
  Tensor gx(x_.n, x_.c, 1, 1);
  gx.d.noalias() = w.transpose() * gy.d;
  return gx;
}

void Dense::collect(std::vector<ParamRef>& out, const std::string& prefix) {
  out.push_back({prefix + ".w", &w, &gw});
  out.push_back({prefix + ".b", &b, &gb});
}

// ---------------------------------------------------------------------------
// Activations

Tensor LeakyReLU::forward(const Tensor& x, bool train) {
  if (train) x_ = x;
  Tensor y = x;
  y.d = x.d.cwiseMax(0.0f) + alpha_ * x.d.cwiseMin(0.0f);
  return y;
}

Tensor LeakyReLU::backward(const Tensor& gy) {
  Tensor gx = gy;
  gx.d = (x_.d.array() > 0.0f).select(gy.d.array(), alpha_ * gy.d.array());
  return gx;
}

Tensor Sigmoid::forward(const Tensor& x, bool train) {
  Tensor y = x;
  y.d = ((-x.d.array()).exp() + 1.0f).inverse();
  if (train) y_ = y;
  return y;
}

Tensor Sigmoid::backward(const Tensor& gy) {
  Tensor gx = gy;
  gx.d = gy.d.array() * y_.d.array() * (1.0f - y_.d.array());
  return gx;
}

Tensor Tanh::forward(const Tensor& x, bool train) {
  Tensor y = x;
  y.d = x.d.array().tanh();
  if (train) y_ = y;
  return y;
}

Tensor Tanh::backward(const Tensor& gy) {
  Tensor gx = gy;
  gx.d = gy.d.array() * (1.0f - y_.d.array().square());
  return gx;
}

// ---------------------------------------------------------------------------
// Pooling / resampling

Tensor AvgPool2::forward(const Tensor& x, bool) {
  require(x.h % 2 == 0 && x.w % 2 == 0, "ParamsError", "AvgPool2 needs even dims");
  in_h_ = x.h;
  in_w_ = x.w;
  Tensor y(x.n, x.c, x.h / 2, x.w / 2);
  for (int s = 0; s < x.n; ++s) {
    const auto xs = x.sample(s);
    auto ys = y.sample(s);
    for (int yy = 0; yy < y.h; ++yy)
      for (int xx = 0; xx < y.w; ++xx)
        ys.col(yy * y.w + xx) =
            0.25f * (xs.col((2 * yy) * x.w + 2 * xx) + xs.col((2 * yy) * x.w + 2 * xx + 1) +
                     xs.col((2 * yy + 1) * x.w + 2 * xx) +
                     xs.col((2 * yy + 1) * x.w + 2 * xx + 1));
  }
  return y;
}

Tensor AvgPool2::backward(const Tensor& gy) {
  Tensor gx(gy.n, gy.c, in_h_, in_w_);
  for (int s = 0; s < gy.n; ++s) {
    const auto gys = gy.sample(s);
    auto gxs = gx.sample(s);
    for (int yy = 0; yy < gy.h; ++yy)
      for (int xx = 0; xx < gy.w; ++xx) {
        const Eigen::VectorXf g = 0.25f * gys.col(yy * gy.w + xx);
        gxs.col((2 * yy) * in_w_ + 2 * xx) = g;
        gxs.col((2 * yy) * in_w_ + 2 * xx + 1) = g;
        gxs.col((2 * yy + 1) * in_w_ + 2 * xx) = g;
        gxs.col((2 * yy + 1) * in_w_ + 2 * xx + 1) = g;
      }
  }
  return gx;
}

Tensor AvgPool3s1::forward(const Tensor& x, bool) {
  in_h_ = x.h;
  in_w_ = x.w;
  Tensor y(x.n, x.c, x.h, x.w);
  for (int s = 0; s < x.n; ++s) {
    const auto xs = x.sample(s);
    auto ys = y.sample(s);
    for (int yy = 0; yy < x.h; ++yy)
      for (int xx = 0; xx < x.w; ++xx) {
        Eigen::VectorXf acc = Eigen::VectorXf::Zero(x.c);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int sy = yy + dy, sx = xx + dx;
            if (sy >= 0 && sy < x.h && sx >= 0 && sx < x.w) acc += xs.col(sy * x.w + sx);
          }
        ys.col(yy * x.w + xx) = acc / 9.0f;
      }
  }
  return y;
}

Tensor AvgPool3s1::backward(const Tensor& gy) {
  Tensor gx(gy.n, gy.c, in_h_, in_w_);
  for (int s = 0; s < gy.n; ++s) {
    const auto gys = gy.sample(s);
    auto gxs = gx.sample(s);
    for (int yy = 0; yy < gy.h; ++yy)
      for (int xx = 0; xx < gy.w; ++xx) {
        const Eigen::VectorXf g = gys.col(yy * gy.w + xx) / 9.0f;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int sy = yy + dy, sx = xx + dx;
            if (sy >= 0 && sy < in_h_ && sx >= 0 && sx < in_w_)
              gxs.col(sy * in_w_ + sx) += g;
          }
      }
  }
  return gx;
}

Tensor Upsample2::forward(const Tensor& x, bool) {
  in_h_ = x.h;
  in_w_ = x.w;
  Tensor y(x.n, x.c, x.h * 2, x.w * 2);
  for (int s = 0; s < x.n; ++s) {
    const auto xs = x.sample(s);
    auto ys = y.sample(s);
    for (int yy = 0; yy < y.h; ++yy)
      for (int xx = 0; xx < y.w; ++xx)
        ys.col(yy * y.w + xx) = xs.col((yy / 2) * x.w + xx / 2);
  }
  return y;
}

Tensor Upsample2::backward(const Tensor& gy) {
  Tensor gx(gy.n, gy.c, in_h_, in_w_);
  for (int s = 0; s < gy.n; ++s) {
    const auto gys = gy.sample(s);
    auto gxs = gx.sample(s);
    for (int yy = 0; yy < gy.h; ++yy)
      for (int xx = 0; xx < gy.w; ++xx)
        gxs.col((yy / 2) * in_w_ + xx / 2) += gys.col(yy * gy.w + xx);
  }
  return gx;
}

Tensor GlobalAvgPool::forward(const Tensor& x, bool) {
  in_h_ = x.h;
  in_w_ = x.w;
  Tensor y(x.n, x.c, 1, 1);
  for (int s = 0; s < x.n; ++s)
    y.d.col(s) = x.sample(s).rowwise().mean();
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& gy) {
  Tensor gx(gy.n, gy.c, in_h_, in_w_);
  const float inv = 1.0f / static_cast<float>(in_h_ * in_w_);
  for (int s = 0; s < gy.n; ++s) {
    const Eigen::VectorXf g = gy.d.col(s) * inv;
    gx.sample(s) = g.replicate(1, in_h_ * in_w_);
  }
  return gx;
}

Tensor Flatten::forward(const Tensor& x, bool) {
  c_ = x.c;
  h_ = x.h;
  w_ = x.w;
  Tensor y(x.n, x.c * x.h * x.w, 1, 1);
  for (int s = 0; s < x.n; ++s) {
    const auto xs = x.sample(s);
    y.d.col(s) = Eigen::Map<const Eigen::VectorXf>(xs.data(), xs.size());
  }
  return y;
}

Tensor Flatten::backward(const Tensor& gy) {
  Tensor gx(gy.n, c_, h_, w_);
  for (int s = 0; s < gy.n; ++s) {
    auto gxs = gx.sample(s);
    gxs = Eigen::Map<const Eigen::MatrixXf>(gy.d.col(s).data(), c_, h_ * w_);
  }
  return gx;
}

// ---------------------------------------------------------------------------
// InstanceNorm

InstanceNorm::InstanceNorm(int ch, bool affine) : ch_(ch), affine_(affine) {
  if (affine_) {
    w = Eigen::MatrixXf::Ones(ch, 1);
    b = Eigen::MatrixXf::Zero(ch, 1);
    gw = Eigen::MatrixXf::Zero(ch, 1);
    gb = Eigen::MatrixXf::Zero(ch, 1);
  }
}

void InstanceNorm::set_style(const Eigen::MatrixXf& gamma, const Eigen::MatrixXf& beta) {
  require(!affine_, "ParamsError", "style injection on an affine InstanceNorm");
  gamma_ = gamma;
  beta_ = beta;
  styled_ = true;
}

Tensor InstanceNorm::forward(const Tensor& x, bool train) {
  require(x.c == ch_, "ParamsError", "instance norm channel mismatch");
  constexpr float kEps = 1e-5f;
  Tensor y(x.n, x.c, x.h, x.w);
  if (train) {
    xhat_ = Tensor(x.n, x.c, x.h, x.w);
    inv_std_.resize(x.c, x.n);
  }
  const float inv_n = 1.0f / static_cast<float>(x.pixels());
  for (int s = 0; s < x.n; ++s) {
    const auto xs = x.sample(s);
    auto ys = y.sample(s);
    for (int c = 0; c < x.c; ++c) {
      const float mu = xs.row(c).mean();
      const float var = (xs.row(c).array() - mu).square().sum() * inv_n;
      const float inv_std = 1.0f / std::sqrt(var + kEps);
      Eigen::RowVectorXf xhat = (xs.row(c).array() - mu).matrix() * inv_std;
      float g = 1.0f, bb = 0.0f;
      if (affine_) {
        g = w(c, 0);
        bb = b(c, 0);
      } else if (styled_) {
        g = gamma_(c, s);
        bb = beta_(c, s);
      }
      ys.row(c) = (xhat.array() * g + bb).matrix();
      if (train) {
        xhat_.sample(s).row(c) = xhat;
        inv_std_(c, s) = inv_std;
      }
    }
  }
  return y;
}

Tensor InstanceNorm::backward(const Tensor& gy) {
  Tensor gx(gy.n, gy.c, gy.h, gy.w);
  if (styled_) {
    g_gamma_ = Eigen::MatrixXf::Zero(gy.c, gy.n);
    g_beta_ = Eigen::MatrixXf::Zero(gy.c, gy.n);
  }
  const float inv_n = 1.0f / static_cast<float>(gy.pixels());
  for (int s = 0; s < gy.n; ++s) {
    const auto gys = gy.sample(s);
    const auto xh = xhat_.sample(s);
    auto gxs = gx.sample(s);
    for (int c = 0; c < gy.c; ++c) {
      float g = 1.0f;
      if (affine_) g = w(c, 0);
      else if (styled_) g = gamma_(c, s);

      const float sum_gy = gys.row(c).sum();
      const float sum_gy_xhat = gys.row(c).dot(xh.row(c));
      if (affine_) {
        gw(c, 0) += sum_gy_xhat;
        gb(c, 0) += sum_gy;
      } else if (styled_) {
        g_gamma_(c, s) = sum_gy_xhat;
        g_beta_(c, s) = sum_gy;
      }
      // d/dx of (x - mu) / std with mu, std functions of x.
      gxs.row(c) = (g * inv_std_(c, s)) *
                   (gys.row(c).array() - inv_n * sum_gy -
                    xh.row(c).array() * (inv_n * sum_gy_xhat))
                       .matrix();
    }
  }
  return gx;
}

void InstanceNorm::collect(std::vector<ParamRef>& out, const std::string& prefix) {
  if (affine_) {
    out.push_back({prefix + ".w", &w, &gw});
    out.push_back({prefix + ".b", &b, &gb});
  }
}

// ---------------------------------------------------------------------------
// Residual / Sequential / Inception

Tensor Residual::forward(const Tensor& x, bool train) {
  Tensor main = main_->forward(x, train);
  Tensor skip = skip_ ? skip_->forward(x, train) : x;
  require(main.same_shape(skip), "ParamsError", "residual branch shape mismatch");
  main.d += skip.d;
  return main;
}

Tensor Residual::backward(const Tensor& gy) {
  Tensor gx = main_->backward(gy);
  if (skip_) {
    gx.d += skip_->backward(gy).d;
  } else {
    gx.d += gy.d;
  }
  return gx;
}

void Residual::collect(std::vector<ParamRef>& out, const std::string& prefix) {
  main_->collect(out, prefix + ".main");
  if (skip_) skip_->collect(out, prefix + ".skip");
}

Tensor Sequential::forward(const Tensor& x, bool train) {
  Tensor cur = x;
  for (auto& layer : layers_) cur = layer->forward(cur, train);
  return cur;
}

Tensor Sequential::backward(const Tensor& gy) {
  Tensor cur = gy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
    cur = (*it)->backward(cur);
  return cur;
}

void Sequential::collect(std::vector<ParamRef>& out, const std::string& prefix) {
  for (size_t i = 0; i < layers_.size(); ++i)
    layers_[i]->collect(out, prefix + "." + std::to_string(i));
}

InceptionBlock::InceptionBlock(int in_ch, int b1, int b3_reduce, int b3, int bp, Rng& rng)
    : b1_(b1), b3_(b3), bp_(bp) {
  branch1_.add<Conv2d>(in_ch, b1, 1, rng);
  branch1_.add<LeakyReLU>();
  branch3_.add<Conv2d>(in_ch, b3_reduce, 1, rng);
  branch3_.add<LeakyReLU>();
  branch3_.add<Conv2d>(b3_reduce, b3, 3, rng);
  branch3_.add<LeakyReLU>();
  branchp_.add<AvgPool3s1>();
  branchp_.add<Conv2d>(in_ch, bp, 1, rng);
  branchp_.add<LeakyReLU>();
}

Tensor InceptionBlock::forward(const Tensor& x, bool train) {
  const Tensor y1 = branch1_.forward(x, train);
  const Tensor y3 = branch3_.forward(x, train);
  const Tensor yp = branchp_.forward(x, train);
  Tensor y(x.n, b1_ + b3_ + bp_, x.h, x.w);
  y.d.topRows(b1_) = y1.d;
  y.d.middleRows(b1_, b3_) = y3.d;
  y.d.bottomRows(bp_) = yp.d;
  return y;
}

Tensor InceptionBlock::backward(const Tensor& gy) {
  Tensor g1(gy.n, b1_, gy.h, gy.w), g3(gy.n, b3_, gy.h, gy.w), gp(gy.n, bp_, gy.h, gy.w);
  g1.d = gy.d.topRows(b1_);
  g3.d = gy.d.middleRows(b1_, b3_);
  gp.d = gy.d.bottomRows(bp_);
  Tensor gx = branch1_.backward(g1);
  gx.d += branch3_.backward(g3).d;
  gx.d += branchp_.backward(gp).d;
  return gx;
}

void InceptionBlock::collect(std::vector<ParamRef>& out, const std::string& prefix) {
  branch1_.collect(out, prefix + ".b1");
  branch3_.collect(out, prefix + ".b3");
  branchp_.collect(out, prefix + ".bp");
}

}  // namespace forge::nn
