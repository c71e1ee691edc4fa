#pragma once

#include <Eigen/Dense>
#include <filesystem>

namespace forge {

// Grayscale image, values in [0, 1]. Rows index y, columns index x.
using Image = Eigen::ArrayXXf;

struct PngInfo {
  int width = 0;
  int height = 0;
  int dpi = 0;  // 0 when the file carries no physical-resolution chunk
};

// 8-bit grayscale PNG I/O. Reading converts palette/rgb/16-bit inputs down to
// 8-bit gray; writing quantizes with round(v * 255) and stores dpi metadata.
Image read_png_gray(const std::filesystem::path& path, PngInfo* info = nullptr);
void write_png_gray(const std::filesystem::path& path, const Image& img, int dpi = 500);

// Bilinear resize (align-corners sampling).
Image resize_bilinear(const Image& img, int out_h, int out_w);

// Center crop; pads with `fill` when the source is smaller than the target.
Image center_crop(const Image& img, int out_h, int out_w, float fill = 1.0f);

// Resize the short side to `side`, then center-crop to side x side.
Image resize_short_crop(const Image& img, int side);

// 2x2 mean downsample, repeated until both dims are <= max_side.
Image downsample_to(const Image& img, int max_side);

}  // namespace forge
