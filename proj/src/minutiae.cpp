#include "forge/minutiae.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "forge/errors.hpp"
#include "forge/metrics.hpp"

namespace forge {

namespace {

constexpr int kBorderMargin = 10;
constexpr int kSpurLength = 5;
constexpr int kOrientWindow = 11;

inline bool on(const Image& img, int y, int x) {
  if (y < 0 || y >= img.rows() || x < 0 || x >= img.cols()) return false;
  return img(y, x) > 0.5f;
}

// 8-neighborhood in the usual Zhang-Suen ring order: N, NE, E, SE, S, SW, W, NW.
constexpr int kRing[8][2] = {{-1, 0}, {-1, 1}, {0, 1},  {1, 1},
                             {1, 0},  {1, -1}, {0, -1}, {-1, -1}};

int neighbor_count(const Image& img, int y, int x) {
  int n = 0;
  for (const auto& d : kRing) n += on(img, y + d[0], x + d[1]) ? 1 : 0;
  return n;
}

int transitions(const Image& img, int y, int x) {
  int a = 0;
  for (int i = 0; i < 8; ++i) {
    const bool cur = on(img, y + kRing[i][0], x + kRing[i][1]);
    const bool next = on(img, y + kRing[(i + 1) % 8][0], x + kRing[(i + 1) % 8][1]);
    if (!cur && next) ++a;
  }
  return a;
}

void check_binary(const Image& img) {
  require(img.size() > 0, "ExtractionError", "empty image");
  for (int y = 0; y < img.rows(); ++y)
    for (int x = 0; x < img.cols(); ++x) {
      const float v = img(y, x);
      if (v != 0.0f && v != 1.0f)
        fail("ExtractionError", "input is not a {0,1} binary image");
    }
}

// Box-filter sums via running accumulation; used for the structure tensor.
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

struct OrientationField {
  Eigen::ArrayXXd theta;      // ridge direction in [0, pi)
  Eigen::ArrayXXd coherence;  // [0, 1]
};

OrientationField ridge_orientation(const Image& binary) {
  const int h = static_cast<int>(binary.rows());
  const int w = static_cast<int>(binary.cols());
  Eigen::ArrayXXd smooth = binary.cast<double>();
  smooth = box_sum(smooth, 1) / 9.0;

  Eigen::ArrayXXd gx = Eigen::ArrayXXd::Zero(h, w), gy = Eigen::ArrayXXd::Zero(h, w);
  for (int y = 1; y + 1 < h; ++y)
    for (int x = 1; x + 1 < w; ++x) {
      gx(y, x) = 0.5 * (smooth(y, x + 1) - smooth(y, x - 1));
      gy(y, x) = 0.5 * (smooth(y + 1, x) - smooth(y - 1, x));
    }

  const int r = kOrientWindow / 2;
  const Eigen::ArrayXXd jxx = box_sum(gx * gx, r);
  const Eigen::ArrayXXd jyy = box_sum(gy * gy, r);
  const Eigen::ArrayXXd jxy = box_sum(gx * gy, r);

  OrientationField field;
  field.theta.resize(h, w);
  field.coherence.resize(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double a = jxx(y, x), b = jyy(y, x), c = jxy(y, x);
      const double grad_angle = 0.5 * std::atan2(2.0 * c, a - b);
      double ridge = grad_angle + M_PI / 2.0;  // ridge flow is normal to gradient
      while (ridge >= M_PI) ridge -= M_PI;
      while (ridge < 0) ridge += M_PI;
      field.theta(y, x) = ridge;
      const double trace = a + b;
      field.coherence(y, x) =
          trace > 1e-12 ? std::sqrt((a - b) * (a - b) + 4.0 * c * c) / trace : 0.0;
    }
  return field;
}

void remove_spurs(Image& skel) {
  const int h = static_cast<int>(skel.rows());
  const int w = static_cast<int>(skel.cols());
  bool changed = true;
  while (changed) {
    changed = false;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!on(skel, y, x) || neighbor_count(skel, y, x) != 1) continue;
        // Walk from the endpoint; a junction within kSpurLength marks a spur.
        std::vector<std::pair<int, int>> path{{y, x}};
        int cy = y, cx = x, py = -1, px = -1;
        bool is_spur = false;
        while (static_cast<int>(path.size()) < kSpurLength) {
          int ny = -1, nx = -1, n = 0;
          for (const auto& d : kRing) {
            const int yy = cy + d[0], xx = cx + d[1];
            if ((yy != py || xx != px) && on(skel, yy, xx)) {
              ++n;
              ny = yy;
              nx = xx;
            }
          }
          if (n == 0) {  // isolated fragment shorter than the spur length
            is_spur = true;
            break;
          }
          if (n > 1) break;  // reached a ridge junction: path was a clean branch
          if (neighbor_count(skel, ny, nx) >= 3) {
            is_spur = true;
            break;
          }
          py = cy;
          px = cx;
          cy = ny;
          cx = nx;
          path.push_back({cy, cx});
        }
        if (is_spur) {
          for (const auto& [sy, sx] : path) skel(sy, sx) = 0.0f;
          changed = true;
        }
      }
    }
  }
}

std::optional<double> nfiq2_score(const std::string& binary,
                                  const std::filesystem::path& image) {
  const std::string cmd = binary + " \"" + image.string() + "\" 2>/dev/null";
  std::FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return std::nullopt;
  char buf[256];
  std::string out;
  while (std::fgets(buf, sizeof(buf), pipe)) out += buf;
  if (pclose(pipe) != 0) return std::nullopt;
  try {
    return std::stod(out);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

Image thin_skeleton(const Image& binary) {
  check_binary(binary);
  Image img = binary;
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());

  std::vector<std::pair<int, int>> kill;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      kill.clear();
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if (!on(img, y, x)) continue;
          const int b = neighbor_count(img, y, x);
          if (b < 2 || b > 6) continue;
          if (transitions(img, y, x) != 1) continue;
          const bool n = on(img, y - 1, x), e = on(img, y, x + 1);
          const bool s = on(img, y + 1, x), wst = on(img, y, x - 1);
          if (pass == 0) {
            if ((n && e && s) || (e && s && wst)) continue;
          } else {
            if ((n && e && wst) || (n && s && wst)) continue;
          }
          kill.push_back({y, x});
        }
      }
      for (const auto& [ky, kx] : kill) img(ky, kx) = 0.0f;
      changed = changed || !kill.empty();
    }
  }
  return img;
}

int crossing_number(const Image& skeleton, int y, int x) {
  int sum = 0;
  for (int i = 0; i < 8; ++i) {
    const int cur = on(skeleton, y + kRing[i][0], x + kRing[i][1]) ? 1 : 0;
    const int next =
        on(skeleton, y + kRing[(i + 1) % 8][0], x + kRing[(i + 1) % 8][1]) ? 1 : 0;
    sum += std::abs(cur - next);
  }
  return sum / 2;
}

std::vector<Minutia> extract_minutiae(const Image& binary) {
  check_binary(binary);
  Image skel = thin_skeleton(binary);
  remove_spurs(skel);

  const OrientationField field = ridge_orientation(binary);
  const int h = static_cast<int>(skel.rows());
  const int w = static_cast<int>(skel.cols());

  std::vector<Minutia> out;
  for (int y = kBorderMargin; y < h - kBorderMargin; ++y) {
    for (int x = kBorderMargin; x < w - kBorderMargin; ++x) {
      if (!on(skel, y, x)) continue;
      const int cn = crossing_number(skel, y, x);
      if (cn != 1 && cn != 3) continue;
      Minutia m;
      m.x = x;
      m.y = y;
      m.kind = cn == 1 ? Minutia::Kind::ending : Minutia::Kind::bifurcation;
      m.theta = field.theta(y, x);
      m.quality = 100.0 * std::clamp(field.coherence(y, x), 0.0, 1.0);
      out.push_back(m);
    }
  }
  return out;
}

void write_minutiae_csv(const std::vector<Minutia>& minutiae,
                        const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail("ExportError", "cannot write " + path.string());
  out << "x,y,theta,kind,quality\n";
  for (const auto& m : minutiae) {
    out << m.x << ',' << m.y << ',' << m.theta << ','
        << (m.kind == Minutia::Kind::ending ? "ending" : "bifurcation") << ','
        << m.quality << "\n";
  }
}

double foreground_megapixels(const Image& gray) {
  const int h = static_cast<int>(gray.rows());
  const int w = static_cast<int>(gray.cols());
  constexpr int kWindow = 25;
  constexpr double kVarThreshold = 1e-4;
  const int r = kWindow / 2;
  const Eigen::ArrayXXd g = gray.cast<double>();
  const Eigen::ArrayXXd ones = Eigen::ArrayXXd::Ones(h, w);
  const Eigen::ArrayXXd count = box_sum(ones, r);
  const Eigen::ArrayXXd mean = box_sum(g, r) / count;
  const Eigen::ArrayXXd var = box_sum(g * g, r) / count - mean * mean;
  long fg = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (var(y, x) >= kVarThreshold) ++fg;
  return static_cast<double>(fg) / 1e6;
}

FingerprintStats fingerprint_stats(const Dataset& dataset, const BinarizeFn& binarize,
                                   const std::string& nfiq2_binary) {
  require(!dataset.records.empty(), "StatsError", "empty dataset");

  std::vector<double> totals, endings, bifurcations, qualities, areas, nfiq;
  for (const auto& r : dataset.records) {
    const Image gray = dataset.load_image(r);
    const Image binary = binarize(gray);
    const auto minutiae = extract_minutiae(binary);

    int ending = 0, bifurcation = 0;
    for (const auto& m : minutiae) {
      if (m.kind == Minutia::Kind::ending) ++ending;
      else ++bifurcation;
      qualities.push_back(m.quality);
    }
    totals.push_back(static_cast<double>(minutiae.size()));
    endings.push_back(ending);
    bifurcations.push_back(bifurcation);
    areas.push_back(foreground_megapixels(gray));
    if (!nfiq2_binary.empty()) {
      if (auto score = nfiq2_score(nfiq2_binary, dataset.image_file(r)))
        nfiq.push_back(*score);
    }
  }

  FingerprintStats s;
  s.image_count = static_cast<int>(dataset.records.size());
  s.total_mean = mean(totals);
  s.total_std = stddev(totals);
  s.ending_mean = mean(endings);
  s.ending_std = stddev(endings);
  s.bifurcation_mean = mean(bifurcations);
  s.bifurcation_std = stddev(bifurcations);
  s.quality_mean = mean(qualities);
  s.quality_std = stddev(qualities);
  s.area_mp_mean = mean(areas);
  s.area_mp_std = stddev(areas);
  if (s.area_mp_mean > 0.0) {
    s.minutiae_per_megapixel = s.total_mean / s.area_mp_mean;
  } else {
    s.minutiae_per_megapixel = 0.0;
    s.degenerate_area = true;
  }
  if (!nfiq.empty()) {
    s.nfiq2_mean = mean(nfiq);
    s.nfiq2_std = stddev(nfiq);
  }
  return s;
}

std::vector<std::string> stats_row_names() {
  return {"Total Minutiae Count",
          "Ridge Ending Minutiae Count",
          "Ridge Bifurcation Minutiae Count",
          "Minutiae Quality",
          "Fingerprint Area (Megapixels)",
          "Fingerprint Image Quality (NFIQ2)",
          "Minutiae per Megapixel"};
}

void write_stats_csv(const FingerprintStats& stats, const std::filesystem::path& path) {
  if (!path.parent_path().empty()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail("ExportError", "cannot write " + path.string());
  out << "measure,mean,std_dev\n";
  const auto row = [&](const std::string& name, double m, double sd) {
    out << name << ',' << m << ',' << sd << "\n";
  };
  row("Total Minutiae Count", stats.total_mean, stats.total_std);
  row("Ridge Ending Minutiae Count", stats.ending_mean, stats.ending_std);
  row("Ridge Bifurcation Minutiae Count", stats.bifurcation_mean, stats.bifurcation_std);
  row("Minutiae Quality", stats.quality_mean, stats.quality_std);
  row("Fingerprint Area (Megapixels)", stats.area_mp_mean, stats.area_mp_std);
  if (stats.nfiq2_mean)
    row("Fingerprint Image Quality (NFIQ2)", *stats.nfiq2_mean, *stats.nfiq2_std);
  else
    out << "Fingerprint Image Quality (NFIQ2),n/a,n/a\n";
  out << "Minutiae per Megapixel," << stats.minutiae_per_megapixel
      << (stats.degenerate_area ? ",degenerate_area\n" : ",n/a\n");
}

}  // namespace forge
