#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "forge/dataset.hpp"
#include "forge/image.hpp"

namespace forge {

struct Minutia {
  int x = 0;
  int y = 0;
  double theta = 0.0;  // local ridge direction, radians in [0, pi)
  enum class Kind { ending, bifurcation } kind = Kind::ending;
  double quality = 0.0;  // orientation coherence scaled to [0, 100]
};

// Zhang-Suen thinning of a {0,1} ridge image (ridges = 1).
Image thin_skeleton(const Image& binary);

// Crossing-number minutiae on the thinned skeleton: CN 1 -> ending,
// CN 3 -> bifurcation. Spur branches shorter than 5 px are pruned first and
// a 10 px border margin is excluded. Throws ExtractionError when the input
// is not strictly {0,1}.
std::vector<Minutia> extract_minutiae(const Image& binary);

// Crossing number of a skeleton pixel: half the sum of absolute differences
// around its 8-neighborhood ring.
int crossing_number(const Image& skeleton, int y, int x);

void write_minutiae_csv(const std::vector<Minutia>& minutiae,
                        const std::filesystem::path& path);

struct FingerprintStats {
  double total_mean = 0.0, total_std = 0.0;
  double ending_mean = 0.0, ending_std = 0.0;
  double bifurcation_mean = 0.0, bifurcation_std = 0.0;
  double quality_mean = 0.0, quality_std = 0.0;
  double area_mp_mean = 0.0, area_mp_std = 0.0;  // foreground megapixels
  double minutiae_per_megapixel = 0.0;
  std::optional<double> nfiq2_mean;  // present only when an external scorer ran
  std::optional<double> nfiq2_std;
  bool degenerate_area = false;  // mean foreground area was zero
  int image_count = 0;
};

// Maps a grayscale image to its {0,1} ridge map.
using BinarizeFn = std::function<Image(const Image&)>;

// Per-image binarize -> segment -> extract, aggregated over the dataset.
// minutiae_per_megapixel = mean count / mean area. `nfiq2_binary`, when
// non-empty and executable, is invoked per image for the optional quality row.
FingerprintStats fingerprint_stats(const Dataset& dataset, const BinarizeFn& binarize,
                                   const std::string& nfiq2_binary = "");

// Foreground fraction of a grayscale image (local variance segmentation,
// the same rule the classical binarizer uses).
double foreground_megapixels(const Image& gray);

// Table rows: measure,mean,std_dev with the fixed row names. Rows whose
// value is unavailable (NFIQ2 without a scorer) carry "n/a".
void write_stats_csv(const FingerprintStats& stats, const std::filesystem::path& path);

std::vector<std::string> stats_row_names();

}  // namespace forge
