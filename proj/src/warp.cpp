#include "forge/warp.hpp"

#include <cmath>

#include "forge/container.hpp"
#include "forge/errors.hpp"

namespace forge {

void validate_basis(const DeformationBasis& basis) {
  require(basis.modes() >= 2, "BasisError", "basis needs at least 2 modes");
  require(basis.grid_w >= 4 && basis.grid_h >= 4, "BasisError",
          "control grid must be at least 4x4");
  require(basis.mean_field.size() == basis.dims(), "BasisError",
          "mean field size mismatch");
  require(basis.eigen_fields.rows() == basis.dims() &&
              basis.eigen_fields.cols() == basis.modes(),
          "BasisError", "eigen field matrix shape mismatch");
  for (int i = 0; i < basis.modes(); ++i) {
    require(basis.eigenvalues[i] >= 0.0, "BasisError", "negative eigenvalue");
    if (i > 0)
      require(basis.eigenvalues[i] <= basis.eigenvalues[i - 1], "BasisError",
              "eigenvalues must be non-increasing");
  }
  const Eigen::MatrixXd gram =
      basis.eigen_fields.transpose() * basis.eigen_fields;
  const double err =
      (gram - Eigen::MatrixXd::Identity(basis.modes(), basis.modes()))
          .cwiseAbs()
          .maxCoeff();
  require(err < 1e-6, "BasisError", "eigen fields are not orthonormal");
}

namespace {

// Smooth random field on the grid: truncated 2-D cosine series with at most
// `max_freq` cycles per side.
Eigen::VectorXd random_smooth_field(Rng& rng, int grid_w, int grid_h, int max_freq) {
  Eigen::VectorXd field = Eigen::VectorXd::Zero(2 * grid_w * grid_h);
  for (int ch = 0; ch < 2; ++ch) {
    for (int ky = 0; ky <= max_freq; ++ky) {
      for (int kx = 0; kx <= max_freq; ++kx) {
        const double a = rng.normal();
        for (int y = 0; y < grid_h; ++y) {
          const double cy = std::cos(M_PI * ky * (y + 0.5) / grid_h);
          for (int x = 0; x < grid_w; ++x) {
            const double cx = std::cos(M_PI * kx * (x + 0.5) / grid_w);
            field[2 * (y * grid_w + x) + ch] += a * cy * cx;
          }
        }
      }
    }
  }
  return field;
}

}  // namespace

DeformationBasis synthesize_basis(int grid_w, int grid_h, int t, std::uint64_t seed,
                                  double lambda1, double decay, double mean_max_px) {
  require(t >= 2, "BasisError", "t must be >= 2, got " + std::to_string(t));
  require(grid_w >= 4 && grid_h >= 4, "BasisError", "grid must be at least 4x4");
  require(t <= 2 * grid_w * grid_h, "BasisError", "more modes than grid freedoms");

  Rng rng(seed);
  DeformationBasis basis;
  basis.grid_w = grid_w;
  basis.grid_h = grid_h;

  constexpr int kMaxFreq = 3;
  basis.eigen_fields.resize(2 * grid_w * grid_h, t);
  for (int i = 0; i < t; ++i) {
    Eigen::VectorXd v = random_smooth_field(rng, grid_w, grid_h, kMaxFreq);
    // Gram-Schmidt against the accepted columns; redraw on near-degeneracy.
    for (;;) {
      Eigen::VectorXd u = v;
      for (int j = 0; j < i; ++j)
        u -= basis.eigen_fields.col(j).dot(u) * basis.eigen_fields.col(j);
      const double norm = u.norm();
      if (norm > 1e-8) {
        basis.eigen_fields.col(i) = u / norm;
        break;
      }
      v = random_smooth_field(rng, grid_w, grid_h, kMaxFreq);
    }
  }

  basis.eigenvalues.resize(t);
  for (int i = 0; i < t; ++i) basis.eigenvalues[i] = lambda1 * std::pow(decay, i);

  Eigen::VectorXd mean = random_smooth_field(rng, grid_w, grid_h, 2);
  double max_mag = 0.0;
  for (int p = 0; p < grid_w * grid_h; ++p)
    max_mag = std::max(max_mag, std::hypot(mean[2 * p], mean[2 * p + 1]));
  if (max_mag > 0.0) mean *= mean_max_px / max_mag;
  basis.mean_field = mean;

  validate_basis(basis);
  return basis;
}

void save_basis(const DeformationBasis& basis, const std::filesystem::path& path) {
  validate_basis(basis);
  Container c("deformation_basis");
  c.meta()["grid_w"] = basis.grid_w;
  c.meta()["grid_h"] = basis.grid_h;
  c.meta()["t"] = basis.modes();
  c.put("mean_field", basis.mean_field.cast<float>());
  c.put("eigen_fields", basis.eigen_fields.cast<float>().eval());
  c.put("eigenvalues", basis.eigenvalues.cast<float>());
  c.save(path);
}

DeformationBasis load_basis(const std::filesystem::path& path) {
  const Container c = Container::load(path);
  require(c.kind() == "deformation_basis", "BasisError",
          path.string() + " is not a deformation basis file");
  DeformationBasis basis;
  basis.grid_w = c.meta().at("grid_w");
  basis.grid_h = c.meta().at("grid_h");
  const int t = c.meta().at("t");
  basis.mean_field = c.get("mean_field", {basis.dims()}).cast<double>();
  basis.eigen_fields = c.get_matrix("eigen_fields", basis.dims(), t).cast<double>();
  basis.eigenvalues = c.get("eigenvalues", {t}).cast<double>();
  // Float storage rounds the Gram-Schmidt result; re-orthonormalize so the
  // loaded basis meets the 1e-6 contract exactly.
  for (int i = 0; i < t; ++i) {
    Eigen::VectorXd u = basis.eigen_fields.col(i);
    for (int j = 0; j < i; ++j)
      u -= basis.eigen_fields.col(j).dot(u) * basis.eigen_fields.col(j);
    basis.eigen_fields.col(i) = u / u.norm();
  }
  validate_basis(basis);
  return basis;
}

namespace {

// Align-corners bilinear upsampling of one channel from the control grid.
void upsample_channel(const Eigen::VectorXd& grid_field, int grid_w, int grid_h,
                      int channel, Eigen::ArrayXXd& out) {
  const int out_h = static_cast<int>(out.rows());
  const int out_w = static_cast<int>(out.cols());
  const double sy = out_h > 1 ? static_cast<double>(grid_h - 1) / (out_h - 1) : 0.0;
  const double sx = out_w > 1 ? static_cast<double>(grid_w - 1) / (out_w - 1) : 0.0;
  for (int y = 0; y < out_h; ++y) {
    const double fy = y * sy;
    int y0 = static_cast<int>(fy);
    if (y0 >= grid_h - 1) y0 = grid_h - 2;
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = x * sx;
      int x0 = static_cast<int>(fx);
      if (x0 >= grid_w - 1) x0 = grid_w - 2;
      const double wx = fx - x0;
      const auto at = [&](int gy, int gx) {
        return grid_field[2 * (gy * grid_w + gx) + channel];
      };
      out(y, x) = (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x0 + 1)) +
                  wy * ((1 - wx) * at(y0 + 1, x0) + wx * at(y0 + 1, x0 + 1));
    }
  }
}

}  // namespace

DistortionSample compose_distortion_field(const DeformationBasis& basis,
                                          const Eigen::VectorXd& coefficients,
                                          int out_w, int out_h) {
  require(coefficients.size() == basis.modes(), "BasisError",
          "expected " + std::to_string(basis.modes()) + " coefficients, got " +
              std::to_string(coefficients.size()));

  Eigen::VectorXd scaled(coefficients.size());
  for (int i = 0; i < coefficients.size(); ++i)
    scaled[i] = coefficients[i] * std::sqrt(basis.eigenvalues[i]);
  const Eigen::VectorXd grid_field =
      basis.mean_field + basis.eigen_fields * scaled;

  DistortionSample sample;
  sample.coefficients = coefficients;
  sample.dx.resize(out_h, out_w);
  sample.dy.resize(out_h, out_w);
  upsample_channel(grid_field, basis.grid_w, basis.grid_h, 0, sample.dx);
  upsample_channel(grid_field, basis.grid_w, basis.grid_h, 1, sample.dy);
  return sample;
}

DistortionSample zero_distortion(int out_w, int out_h) {
  DistortionSample sample;
  sample.coefficients = Eigen::VectorXd();
  sample.dx = Eigen::ArrayXXd::Zero(out_h, out_w);
  sample.dy = Eigen::ArrayXXd::Zero(out_h, out_w);
  return sample;
}

Image apply_warp(const Image& image, const Pose& pose,
                 const DistortionSample& distortion) {
  const int h = static_cast<int>(image.rows());
  const int w = static_cast<int>(image.cols());
  require(distortion.dx.rows() == h && distortion.dx.cols() == w &&
              distortion.dy.rows() == h && distortion.dy.cols() == w,
          "WarpError", "distortion field shape does not match image");

  const double theta = pose.rotation_deg * M_PI / 180.0;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double cx = (w - 1) / 2.0;
  const double cy = (h - 1) / 2.0;

  constexpr float kBackground = 1.0f;
  Image out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Inverse mapping for the forward chain rotate -> translate -> deform:
      // undo the displacement and translation, then rotate back.
      const double ux = x - distortion.dx(y, x) - pose.tx - cx;
      const double uy = y - distortion.dy(y, x) - pose.ty - cy;
      const double sx = cos_t * ux + sin_t * uy + cx;
      const double sy = -sin_t * ux + cos_t * uy + cy;

      const double fx = std::floor(sx);
      const double fy = std::floor(sy);
      const int x0 = static_cast<int>(fx);
      const int y0 = static_cast<int>(fy);
      const double wx = sx - fx;
      const double wy = sy - fy;

      const auto at = [&](int yy, int xx) -> double {
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) return kBackground;
        return image(yy, xx);
      };
      const double v = (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x0 + 1)) +
                       wy * ((1 - wx) * at(y0 + 1, x0) + wx * at(y0 + 1, x0 + 1));
      out(y, x) = static_cast<float>(v);
    }
  }
  return out;
}

}  // namespace forge
