#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace forge {

// Deterministic random source. Uniform and normal draws are derived from the
// raw mt19937_64 bit stream directly (not through std::*_distribution, whose
// output is implementation-defined), so sequences are reproducible across
// standard libraries and compilers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  // Standard normal via Box-Muller; the spare value is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  float normal_f() { return static_cast<float>(normal()); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::uint64_t h, std::string_view s) {
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  // Field separator so ("ab","c") and ("a","bc") hash differently.
  h ^= 0x1f;
  h *= 0x100000001b3ull;
  return h;
}

}  // namespace detail

// Stable 64-bit seed derivation: FNV-1a over the labelled parts, finalized
// with splitmix64. Used to give every (finger, impression, material) cell of
// a generation run its own independent stream.
inline std::uint64_t derive_seed(std::uint64_t root,
                                 std::initializer_list<std::string_view> parts) {
  std::uint64_t h = 0xcbf29ce484222325ull ^ root;
  for (auto p : parts) h = detail::fnv1a(h, p);
  return detail::splitmix64(h);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view a) {
  return derive_seed(root, {a});
}

}  // namespace forge
