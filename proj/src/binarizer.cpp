#include "forge/binarizer.hpp"

#include <fstream>

#include "forge/container.hpp"
#include "forge/errors.hpp"
#include "forge/nn/checkpoint.hpp"
#include "forge/nn/losses.hpp"
#include "forge/nn/optimizer.hpp"
#include "forge/nn/tensor.hpp"
#include "forge/random.hpp"

namespace forge {

namespace {

constexpr int kWindow = 25;
constexpr float kOffset = 0.02f;
constexpr double kVarThreshold = 1e-4;

// Running box sums, O(N) in the image size.
Eigen::ArrayXXd box_sum(const Eigen::ArrayXXd& src, int radius) {
  const int h = static_cast<int>(src.rows());
  const int w = static_cast<int>(src.cols());
  Eigen::ArrayXXd rows(h, w), out(h, w);
  for (int y = 0; y < h; ++y) {
    double acc = 0.0;
    for (int x = 0; x < std::min(radius + 1, w); ++x) acc += src(y, x);
    rows(y, 0) = acc;
    for (int x = 1; x < w; ++x) {
      if (x + radius < w) acc += src(y, x + radius);
      if (x - radius - 1 >= 0) acc -= src(y, x - radius - 1);
      rows(y, x) = acc;
    }
  }
  for (int x = 0; x < w; ++x) {
    double acc = 0.0;
    for (int y = 0; y < std::min(radius + 1, h); ++y) acc += rows(y, x);
    out(0, x) = acc;
    for (int y = 1; y < h; ++y) {
      if (y + radius < h) acc += rows(y + radius, x);
      if (y - radius - 1 >= 0) acc -= rows(y - radius - 1, x);
      out(y, x) = acc;
    }
  }
  return out;
}

struct LocalMoments {
  Eigen::ArrayXXd mean;
  Eigen::ArrayXXd var;
};

LocalMoments local_moments(const Image& gray) {
  const int h = static_cast<int>(gray.rows());
  const int w = static_cast<int>(gray.cols());
  const int r = kWindow / 2;
  const Eigen::ArrayXXd g = gray.cast<double>();
  const Eigen::ArrayXXd count = box_sum(Eigen::ArrayXXd::Ones(h, w), r);
  LocalMoments m;
  m.mean = box_sum(g, r) / count;
  m.var = (box_sum(g * g, r) / count - m.mean * m.mean).max(0.0);
  return m;
}

}  // namespace

Image segment_foreground(const Image& gray) {
  const LocalMoments m = local_moments(gray);
  Image mask(gray.rows(), gray.cols());
  for (int y = 0; y < gray.rows(); ++y)
    for (int x = 0; x < gray.cols(); ++x)
      mask(y, x) = m.var(y, x) >= kVarThreshold ? 1.0f : 0.0f;
  return mask;
}

Image classical_binarize(const Image& gray) {
  require(gray.size() > 0, "ExtractionError", "empty image");
  const LocalMoments m = local_moments(gray);
  const int h = static_cast<int>(gray.rows());
  const int w = static_cast<int>(gray.cols());

  Image bin(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const bool fg = m.var(y, x) >= kVarThreshold;
      const bool ridge = gray(y, x) < m.mean(y, x) - kOffset;
      bin(y, x) = (fg && ridge) ? 1.0f : 0.0f;
    }

  // 3x3 binary median = majority vote over the 9-neighborhood.
  Image out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int ones = 0, total = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          ++total;
          ones += bin(yy, xx) > 0.5f ? 1 : 0;
        }
      out(y, x) = 2 * ones > total ? 1.0f : 0.0f;
    }
  return out;
}

Image prepare_binary_256(const Image& gray) {
  return classical_binarize(resize_short_crop(gray, 256));
}

// ---------------------------------------------------------------------------
// Autoencoder

struct Binarizer::Impl {
  nn::Conv2d e0c;
  nn::LeakyReLU e0a;
  nn::AvgPool2 p1;
  nn::Conv2d e1c;
  nn::LeakyReLU e1a;
  nn::AvgPool2 p2;
  nn::Conv2d e2c;
  nn::LeakyReLU e2a;
  nn::AvgPool2 p3;
  nn::Conv2d e3c;
  nn::LeakyReLU e3a;
  nn::AvgPool2 p4;
  nn::Conv2d bc;
  nn::LeakyReLU ba;
  nn::Upsample2 u3;
  nn::Conv2d d3c;
  nn::LeakyReLU d3a;
  nn::Upsample2 u2;
  nn::Conv2d d2c;
  nn::LeakyReLU d2a;
  nn::Upsample2 u1;
  nn::Conv2d d1c;
  nn::LeakyReLU d1a;
  nn::Upsample2 u0;
  nn::Conv2d d0c;
  nn::LeakyReLU d0a;
  nn::Conv2d head;
  nn::Sigmoid out_act;

  nn::Tensor a0, a1, a2, a3;  // encoder activations for the skips

  Impl(int c, Rng& rng)
      : e0c(1, c, 3, rng),
        e1c(c, 2 * c, 3, rng),
        e2c(2 * c, 4 * c, 3, rng),
        e3c(4 * c, 4 * c, 3, rng),
        bc(4 * c, 4 * c, 3, rng),
        d3c(4 * c, 4 * c, 3, rng),
        d2c(4 * c, 4 * c, 3, rng),
        d1c(4 * c, 2 * c, 3, rng),
        d0c(2 * c, c, 3, rng),
        head(c, 1, 3, rng) {}

  nn::Tensor forward_logits(const nn::Tensor& x, bool train) {
    require(x.h % 16 == 0 && x.w % 16 == 0, "ParamsError",
            "binarizer input dims must be divisible by 16");
    a0 = e0a.forward(e0c.forward(x, train), train);
    a1 = e1a.forward(e1c.forward(p1.forward(a0, train), train), train);
    a2 = e2a.forward(e2c.forward(p2.forward(a1, train), train), train);
    a3 = e3a.forward(e3c.forward(p3.forward(a2, train), train), train);
    nn::Tensor t = ba.forward(bc.forward(p4.forward(a3, train), train), train);
    t = d3a.forward(d3c.forward(u3.forward(t, train), train), train);
    t.d += a3.d;
    t = d2a.forward(d2c.forward(u2.forward(t, train), train), train);
    t.d += a2.d;
    t = d1a.forward(d1c.forward(u1.forward(t, train), train), train);
    t.d += a1.d;
    t = d0a.forward(d0c.forward(u0.forward(t, train), train), train);
    t.d += a0.d;
    return head.forward(t, train);
  }

  nn::Tensor backward_logits(const nn::Tensor& gl) {
    nn::Tensor g = head.backward(gl);
    nn::Tensor ga0 = g;
    g = u0.backward(d0c.backward(d0a.backward(g)));
    nn::Tensor ga1 = g;
    g = u1.backward(d1c.backward(d1a.backward(g)));
    nn::Tensor ga2 = g;
    g = u2.backward(d2c.backward(d2a.backward(g)));
    nn::Tensor ga3 = g;
    g = u3.backward(d3c.backward(d3a.backward(g)));
    ga3.d += p4.backward(bc.backward(ba.backward(g))).d;
    ga2.d += p3.backward(e3c.backward(e3a.backward(ga3))).d;
    ga1.d += p2.backward(e2c.backward(e2a.backward(ga2))).d;
    ga0.d += p1.backward(e1c.backward(e1a.backward(ga1))).d;
    return e0c.backward(e0a.backward(ga0));
  }

  void collect(std::vector<nn::ParamRef>& out) {
    e0c.collect(out, "e0");
    e1c.collect(out, "e1");
    e2c.collect(out, "e2");
    e3c.collect(out, "e3");
    bc.collect(out, "bn");
    d3c.collect(out, "d3");
    d2c.collect(out, "d2");
    d1c.collect(out, "d1");
    d0c.collect(out, "d0");
    head.collect(out, "head");
  }
};

Binarizer::Binarizer(int base_channels, std::uint64_t seed)
    : base_channels_(base_channels) {
  Rng rng(seed);
  impl_ = std::make_shared<Impl>(base_channels, rng);
}

nn::Tensor Binarizer::forward_logits(const nn::Tensor& x, bool train) {
  return impl_->forward_logits(x, train);
}

nn::Tensor Binarizer::forward_soft(const nn::Tensor& x, bool train) {
  return impl_->out_act.forward(impl_->forward_logits(x, train), train);
}

nn::Tensor Binarizer::backward_soft(const nn::Tensor& gy) {
  return impl_->backward_logits(impl_->out_act.backward(gy));
}

nn::Tensor Binarizer::backward_logits(const nn::Tensor& gy) {
  return impl_->backward_logits(gy);
}

std::vector<nn::ParamRef> Binarizer::params() {
  std::vector<nn::ParamRef> out;
  impl_->collect(out);
  return out;
}

Image Binarizer::binarize(const Image& gray) {
  const int h = static_cast<int>(gray.rows());
  const int w = static_cast<int>(gray.cols());
  if (h == 512 && w == 512) {
    Image out(512, 512);
    for (int ty = 0; ty < 2; ++ty)
      for (int tx = 0; tx < 2; ++tx) {
        Image tile(256, 256);
        for (int y = 0; y < 256; ++y)
          for (int x = 0; x < 256; ++x) tile(y, x) = gray(ty * 256 + y, tx * 256 + x);
        const nn::Tensor soft = forward_soft(nn::from_image(tile), false);
        const Image res = nn::to_image(soft);
        for (int y = 0; y < 256; ++y)
          for (int x = 0; x < 256; ++x) out(ty * 256 + y, tx * 256 + x) = res(y, x);
      }
    return out;
  }
  return nn::to_image(forward_soft(nn::from_image(gray), false));
}

void Binarizer::save(const std::filesystem::path& path, int step) const {
  Container c("binarizer");
  c.meta()["base_channels"] = base_channels_;
  c.meta()["step"] = step;
  std::vector<nn::ParamRef> refs;
  impl_->collect(refs);
  nn::save_params(c, refs);
  c.save(path);
}

Binarizer Binarizer::load(const std::filesystem::path& path) {
  const Container c = Container::load(path);
  require(c.kind() == "binarizer", "ParamsError",
          path.string() + " is not a binarizer checkpoint");
  Binarizer net(c.meta().at("base_channels").get<int>(), 0);
  auto refs = net.params();
  nn::load_params(c, refs);
  return net;
}

// ---------------------------------------------------------------------------
// Training

BinarizerTrainResult train_binarizer(const std::vector<std::pair<Image, Image>>& pairs,
                                     const BinarizerTrainConfig& config) {
  require(!pairs.empty(), "TrainConfigError", "need at least one training pair");
  for (const auto& [gray, binary] : pairs) {
    require(gray.rows() == binary.rows() && gray.cols() == binary.cols(),
            "TrainConfigError", "grayscale/binary pair shapes differ");
    for (long i = 0; i < binary.size(); ++i)
      require(binary.data()[i] == 0.0f || binary.data()[i] == 1.0f,
              "TrainConfigError", "targets must be strictly {0,1}");
  }

  Rng rng(config.seed);
  BinarizerTrainResult result{Binarizer(config.base_channels, rng.next_u64()), {}, 0.0};
  Binarizer& net = result.net;
  nn::Adam opt(net.params(), config.lr);

  std::ofstream log;
  if (!config.loss_log.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(config.loss_log.parent_path(), ec);
    log.open(config.loss_log, std::ios::trunc);
    log << "step,loss\n";
  }

  const int crop = config.crop;
  for (int step = 0; step < config.steps; ++step) {
    // Assemble a batch of random crops.
    int ch = crop, cw = crop;
    if (crop <= 0) {
      ch = static_cast<int>(pairs[0].first.rows());
      cw = static_cast<int>(pairs[0].first.cols());
    }
    nn::Tensor x(config.batch, 1, ch, cw);
    Eigen::MatrixXf target(1, static_cast<long>(config.batch) * ch * cw);
    for (int s = 0; s < config.batch; ++s) {
      const auto& [gray, binary] = pairs[rng.below(pairs.size())];
      const int max_y = static_cast<int>(gray.rows()) - ch;
      const int max_x = static_cast<int>(gray.cols()) - cw;
      const int oy = max_y > 0 ? static_cast<int>(rng.below(max_y + 1)) : 0;
      const int ox = max_x > 0 ? static_cast<int>(rng.below(max_x + 1)) : 0;
      auto blk = x.sample(s);
      for (int y = 0; y < ch; ++y)
        for (int xx = 0; xx < cw; ++xx) {
          blk(0, y * cw + xx) = gray(oy + y, ox + xx);
          target(0, static_cast<long>(s) * ch * cw + y * cw + xx) = binary(oy + y, ox + xx);
        }
    }

    opt.zero_grad();
    nn::Tensor logits = net.forward_logits(x, true);
    Eigen::MatrixXf grad;
    const double loss = nn::bce_with_logits(logits.d, target, grad);
    nn::Tensor gl = logits;
    gl.d = grad;
    net.backward_logits(gl);
    opt.step();

    result.losses.push_back(loss);
    if (log.is_open() && (step % config.log_every == 0 || step + 1 == config.steps))
      log << step << ',' << loss << "\n";
  }
  result.final_loss = result.losses.empty() ? 0.0 : result.losses.back();
  return result;
}

double binarizer_accuracy(Binarizer& net, const std::vector<std::pair<Image, Image>>& pairs) {
  require(!pairs.empty(), "TrainConfigError", "no evaluation pairs");
  long correct = 0, total = 0;
  for (const auto& [gray, binary] : pairs) {
    const Image soft = net.binarize(gray);
    for (long i = 0; i < binary.size(); ++i) {
      const bool pred = soft.data()[i] >= 0.5f;
      const bool truth = binary.data()[i] >= 0.5f;
      correct += pred == truth ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace forge
