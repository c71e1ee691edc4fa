#include "forge/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

#include "forge/errors.hpp"

namespace forge {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
  (void)png;
  fail("MissingImage", std::string("png error: ") + msg);
}

void png_warn_fn(png_structp, png_const_charp) {}

}  // namespace

Image read_png_gray(const std::filesystem::path& path, PngInfo* info) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) fail("MissingImage", "cannot open " + path.string());

  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    fail("MissingImage", "not a PNG file: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           png_error_fn, png_warn_fn);
  png_infop pi = png_create_info_struct(png);
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, pi);

  const int color = png_get_color_type(png, pi);
  const int depth = png_get_bit_depth(png, pi);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
      color == PNG_COLOR_TYPE_PALETTE)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, pi);

  const int w = static_cast<int>(png_get_image_width(png, pi));
  const int h = static_cast<int>(png_get_image_height(png, pi));

  std::vector<png_byte> row(static_cast<size_t>(w));
  Image img(h, w);
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x) img(y, x) = static_cast<float>(row[x]) / 255.0f;
  }
  png_read_end(png, nullptr);

  if (info) {
    info->width = w;
    info->height = h;
    png_uint_32 rx = 0, ry = 0;
    int unit = 0;
    info->dpi = 0;
    if (png_get_pHYs(png, pi, &rx, &ry, &unit) && unit == PNG_RESOLUTION_METER)
      info->dpi = static_cast<int>(std::lround(static_cast<double>(rx) * 0.0254));
  }
  png_destroy_read_struct(&png, &pi, nullptr);
  return img;
}

void write_png_gray(const std::filesystem::path& path, const Image& img, int dpi) {
  if (img.rows() == 0 || img.cols() == 0) fail("ExportError", "empty image");
  if (!path.parent_path().empty()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) fail("ExportError", "cannot write " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            png_error_fn, png_warn_fn);
  png_infop pi = png_create_info_struct(png);
  png_init_io(png, fp.get());

  const int w = static_cast<int>(img.cols());
  const int h = static_cast<int>(img.rows());
  png_set_IHDR(png, pi, w, h, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  if (dpi > 0) {
    const auto ppm = static_cast<png_uint_32>(std::lround(dpi / 0.0254));
    png_set_pHYs(png, pi, ppm, ppm, PNG_RESOLUTION_METER);
  }
  // Fixed compression settings keep output byte-deterministic.
  png_set_compression_level(png, 6);
  png_write_info(png, pi);

  std::vector<png_byte> row(static_cast<size_t>(w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float v = std::min(1.0f, std::max(0.0f, img(y, x)));
      row[x] = static_cast<png_byte>(std::lround(v * 255.0f));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &pi);
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  if (h == out_h && w == out_w) return img;
  Image out(out_h, out_w);
  const double sy = out_h > 1 ? static_cast<double>(h - 1) / (out_h - 1) : 0.0;
  const double sx = out_w > 1 ? static_cast<double>(w - 1) / (out_w - 1) : 0.0;
  for (int y = 0; y < out_h; ++y) {
    const double fy = y * sy;
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = x * sx;
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - x0;
      const double v = (1 - wy) * ((1 - wx) * img(y0, x0) + wx * img(y0, x1)) +
                       wy * ((1 - wx) * img(y1, x0) + wx * img(y1, x1));
      out(y, x) = static_cast<float>(v);
    }
  }
  return out;
}

Image center_crop(const Image& img, int out_h, int out_w, float fill) {
  Image out = Image::Constant(out_h, out_w, fill);
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  const int oy = (h - out_h) / 2;
  const int ox = (w - out_w) / 2;
  for (int y = 0; y < out_h; ++y) {
    const int sy = y + oy;
    if (sy < 0 || sy >= h) continue;
    for (int x = 0; x < out_w; ++x) {
      const int sx = x + ox;
      if (sx >= 0 && sx < w) out(y, x) = img(sy, sx);
    }
  }
  return out;
}

Image resize_short_crop(const Image& img, int side) {
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  if (h == side && w == side) return img;
  const double scale = static_cast<double>(side) / std::min(h, w);
  const int nh = std::max(side, static_cast<int>(std::lround(h * scale)));
  const int nw = std::max(side, static_cast<int>(std::lround(w * scale)));
  return center_crop(resize_bilinear(img, nh, nw), side, side);
}

Image downsample_to(const Image& img, int max_side) {
  Image cur = img;
  while (cur.rows() > max_side || cur.cols() > max_side) {
    const int h = static_cast<int>(cur.rows()) / 2;
    const int w = static_cast<int>(cur.cols()) / 2;
    if (h < 1 || w < 1) break;
    Image next(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        next(y, x) = 0.25f * (cur(2 * y, 2 * x) + cur(2 * y, 2 * x + 1) +
                              cur(2 * y + 1, 2 * x) + cur(2 * y + 1, 2 * x + 1));
    cur = std::move(next);
  }
  return cur;
}

}  // namespace forge
