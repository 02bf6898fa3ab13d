#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace nnsparse {

/// Seeded generator with hand-rolled distributions so that identical seeds
/// produce bit-identical streams on every platform (the standard library's
/// distribution algorithms are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via the Box-Muller transform; draws two uniforms per call.
  double normal() {
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925 * u2);
  }

  /// Integer uniform on [lo, hi] by rejection-free scaling (adequate for the
  /// small ranges used here).
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(uniform01() * static_cast<double>(hi - lo + 1));
  }

  /// k of n indices without replacement, returned sorted (selection sampling).
  std::vector<int> sample_sorted(int n, int k) {
    std::vector<int> out;
    out.reserve(static_cast<size_t>(k));
    int needed = k;
    for (int j = 0; j < n && needed > 0; ++j) {
      const int remaining = n - j;
      if (uniform01() * remaining < static_cast<double>(needed)) {
        out.push_back(j);
        --needed;
      }
    }
    return out;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace nnsparse
