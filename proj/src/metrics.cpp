#include "forge/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "forge/errors.hpp"

namespace forge {

namespace {

void check_inputs(const std::vector<double>& positives,
                  const std::vector<double>& negatives) {
  require(!positives.empty() && !negatives.empty(), "MetricError",
          "score lists must be non-empty");
  for (double s : positives)
    require(std::isfinite(s), "MetricError", "non-finite positive score");
  for (double s : negatives)
    require(std::isfinite(s), "MetricError", "non-finite negative score");
}

double fraction_at_least(const std::vector<double>& xs, double tau) {
  long n = 0;
  for (double x : xs)
    if (x >= tau) ++n;
  return static_cast<double>(n) / static_cast<double>(xs.size());
}

}  // namespace

OperatingPoint sweep_threshold(const std::vector<double>& positives,
                               const std::vector<double>& negatives,
                               double target_rate) {
  check_inputs(positives, negatives);

  std::vector<double> candidates;
  candidates.reserve(positives.size() + negatives.size());
  candidates.insert(candidates.end(), positives.begin(), positives.end());
  candidates.insert(candidates.end(), negatives.begin(), negatives.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  std::vector<double> neg_sorted = negatives;
  std::sort(neg_sorted.begin(), neg_sorted.end());
  std::vector<double> pos_sorted = positives;
  std::sort(pos_sorted.begin(), pos_sorted.end());

  const auto rate_ge = [](const std::vector<double>& sorted, double tau) {
    const auto it = std::lower_bound(sorted.begin(), sorted.end(), tau);
    return static_cast<double>(sorted.end() - it) / static_cast<double>(sorted.size());
  };

  OperatingPoint op;
  op.target_rate = target_rate;
  // The negative rate is non-increasing in tau, so the first admissible
  // candidate in ascending order is the smallest.
  for (double tau : candidates) {
    if (rate_ge(neg_sorted, tau) <= target_rate) {
      op.threshold = tau;
      op.positive_rate = rate_ge(pos_sorted, tau);
      return op;
    }
  }
  return op;  // no admissible threshold: +inf, positive rate 0
}

OperatingPoint sweep_threshold_brute(const std::vector<double>& positives,
                                     const std::vector<double>& negatives,
                                     double target_rate) {
  check_inputs(positives, negatives);

  std::vector<double> candidates = positives;
  candidates.insert(candidates.end(), negatives.begin(), negatives.end());

  OperatingPoint best;
  best.target_rate = target_rate;
  bool found = false;
  for (double tau : candidates) {
    if (fraction_at_least(negatives, tau) > target_rate) continue;
    if (!found || tau < best.threshold) {
      best.threshold = tau;
      best.positive_rate = fraction_at_least(positives, tau);
      found = true;
    }
  }
  return best;
}

double mean(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double stddev(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size()));
}

}  // namespace forge
