#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace nesti {

// Deterministic random source. std::mt19937_64 output is fully specified by
// the standard; the value transforms below are our own, so streams are
// reproducible across compilers and platforms (the std distributions are not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n). n must be positive.
  std::uint64_t bounded(std::uint64_t n);

  // Inclusive range [lo, hi].
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(bounded(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  // Standard normal via Box-Muller, second value cached.
  double normal();

  // Derive an independent child stream, e.g. one per query point.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t salt);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// k distinct indices drawn uniformly from [0, n), in draw order.
std::vector<int> sample_without_replacement(int n, int k, Rng& rng);

}  // namespace nesti
