#pragma once

#include <Eigen/Dense>
#include <filesystem>

#include "forge/image.hpp"
#include "forge/random.hpp"

namespace forge {

// Rigid part of one impression. Rotation in degrees, translation in pixels.
// Sampling keeps rotation in [-30, 30] and translation in [-25, 25]; the
// struct itself is unconstrained so tests can drive arbitrary transforms.
struct Pose {
  double rotation_deg = 0.0;
  double tx = 0.0;
  double ty = 0.0;
};

inline constexpr double kMaxRotationDeg = 30.0;
inline constexpr double kMaxTranslationPx = 25.0;
inline constexpr double kDefaultCoeffSigma = 0.66;

// Statistical deformation model on a coarse control grid: a mean displacement
// field plus orthonormal eigen-fields with non-increasing eigenvalues. Each
// field stores (dx, dy) per grid node, flattened as
// [dx(0,0), dy(0,0), dx(0,1), dy(0,1), ...] row by row.
struct DeformationBasis {
  int grid_w = 0;
  int grid_h = 0;
  Eigen::VectorXd mean_field;     // length 2*grid_w*grid_h
  Eigen::MatrixXd eigen_fields;   // (2*grid_w*grid_h, t), orthonormal columns
  Eigen::VectorXd eigenvalues;    // length t, descending, non-negative

  int dims() const { return 2 * grid_w * grid_h; }
  int modes() const { return static_cast<int>(eigenvalues.size()); }
};

// Dense displacement sample: coefficients plus the per-pixel field they
// induce after bilinear grid interpolation.
struct DistortionSample {
  Eigen::VectorXd coefficients;
  Eigen::ArrayXXd dx;  // (h, w) displacement along x, in pixels
  Eigen::ArrayXXd dy;
};

// Validates orthonormality (1e-6), eigenvalue ordering and t >= 2.
void validate_basis(const DeformationBasis& basis);

// Random smooth basis: truncated 2-D cosine fields (max 3 cycles per side)
// orthonormalized by Gram-Schmidt, geometric eigenvalue decay, and a small
// smooth mean field capped at `mean_max_px`. Stand-in for a basis learned
// from distortion video data, which is loadable through the same type.
DeformationBasis synthesize_basis(int grid_w, int grid_h, int t, std::uint64_t seed,
                                  double lambda1 = 4000.0, double decay = 0.5,
                                  double mean_max_px = 2.0);

void save_basis(const DeformationBasis& basis, const std::filesystem::path& path);
DeformationBasis load_basis(const std::filesystem::path& path);

// Pose uniform in the configured ranges; the first two coefficients drawn
// from N(0, sigma_c^2), the rest zero. Rng must provide uniform(lo, hi) and
// normal().
template <class R>
std::pair<Pose, Eigen::VectorXd> sample_pose_and_coeffs(
    R& rng, const DeformationBasis& basis, double sigma_c = kDefaultCoeffSigma) {
  Pose pose;
  pose.rotation_deg = rng.uniform(-kMaxRotationDeg, kMaxRotationDeg);
  pose.tx = rng.uniform(-kMaxTranslationPx, kMaxTranslationPx);
  pose.ty = rng.uniform(-kMaxTranslationPx, kMaxTranslationPx);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(basis.modes());
  for (int i = 0; i < std::min(2, basis.modes()); ++i)
    c[i] = sigma_c * rng.normal();
  return {pose, c};
}

// Grid field mean + sum_i c_i * sqrt(lambda_i) * e_i, upsampled bilinearly to
// out_w x out_h (align-corners).
DistortionSample compose_distortion_field(const DeformationBasis& basis,
                                          const Eigen::VectorXd& coefficients,
                                          int out_w, int out_h);

DistortionSample zero_distortion(int out_w, int out_h);

// Rotate about the image center, translate, then displace by the distortion
// field, sampled with bilinear interpolation; out-of-range reads return the
// white background (1.0). Output has the input's shape and range.
Image apply_warp(const Image& image, const Pose& pose, const DistortionSample& distortion);

}  // namespace forge
