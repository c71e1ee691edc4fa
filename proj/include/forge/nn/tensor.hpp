#pragma once

#include <Eigen/Dense>

#include "forge/errors.hpp"
#include "forge/image.hpp"

namespace forge::nn {

// Mini-batch of feature maps. Storage is a (c, n*h*w) matrix: row = channel,
// column = pixel, sample s occupying the contiguous column block
// [s*h*w, (s+1)*h*w). Pixel p = y*w + x.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  Eigen::MatrixXf d;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), d(Eigen::MatrixXf::Zero(c_, static_cast<long>(n_) * h_ * w_)) {}

  int pixels() const { return h * w; }
  long size() const { return static_cast<long>(n) * c * h * w; }

  auto sample(int s) { return d.middleCols(static_cast<long>(s) * pixels(), pixels()); }
  auto sample(int s) const {
    return d.middleCols(static_cast<long>(s) * pixels(), pixels());
  }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
};

// Single image (h, w) in [0,1] -> one-sample, one-channel tensor.
inline Tensor from_image(const Image& img) {
  Tensor t(1, 1, static_cast<int>(img.rows()), static_cast<int>(img.cols()));
  for (int y = 0; y < t.h; ++y)
    for (int x = 0; x < t.w; ++x) t.d(0, y * t.w + x) = img(y, x);
  return t;
}

inline void set_sample_image(Tensor& t, int s, const Image& img, int channel = 0) {
  require(img.rows() == t.h && img.cols() == t.w, "ParamsError",
          "image does not match tensor shape");
  auto blk = t.sample(s);
  for (int y = 0; y < t.h; ++y)
    for (int x = 0; x < t.w; ++x) blk(channel, y * t.w + x) = img(y, x);
}

inline Image to_image(const Tensor& t, int s = 0, int channel = 0) {
  Image img(t.h, t.w);
  const auto blk = t.sample(s);
  for (int y = 0; y < t.h; ++y)
    for (int x = 0; x < t.w; ++x) img(y, x) = blk(channel, y * t.w + x);
  return img;
}

}  // namespace forge::nn
