#pragma once

#include <limits>
#include <vector>

namespace forge {

// Operating point of a score threshold sweep. `threshold` is +infinity when
// no observed score satisfies the rate constraint (positive rate is then 0).
struct OperatingPoint {
  double target_rate = 0.0;  // cap on the fraction of negatives >= threshold
  double threshold = std::numeric_limits<double>::infinity();
  double positive_rate = 0.0;  // fraction of positives >= threshold
};

// Finds the smallest observed score tau such that
//   |{ n in negatives : n >= tau }| / |negatives| <= target_rate
// and reports the fraction of positives >= tau. Candidate thresholds are the
// union of both score lists. Sorted implementation; tests verify it against
// an exhaustive linear scan.
OperatingPoint sweep_threshold(const std::vector<double>& positives,
                               const std::vector<double>& negatives,
                               double target_rate);

// Same via brute force: tries every candidate threshold with O(n*m) recounts.
// Lives here (not in test code) so both detector and matcher suites can pit
// the fast path against it; the two share no logic.
OperatingPoint sweep_threshold_brute(const std::vector<double>& positives,
                                     const std::vector<double>& negatives,
                                     double target_rate);

double mean(const std::vector<double>& xs);
double stddev(const std::vector<double>& xs);  // population form

}  // namespace forge
