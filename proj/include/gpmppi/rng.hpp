#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>

namespace gpmppi {

// SplitMix64 finalizer, used to derive independent substream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic seed splitting: independent streams for (seed, a, b).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t h = splitmix64(seed ^ 0x6a09e667f3bcc909ULL);
  h = splitmix64(h ^ (a * 0x9e3779b97f4a7c15ULL));
  h = splitmix64(h ^ (b * 0xbf58476d1ce4e5b9ULL));
  return h;
}

// Seeded random stream with a fully specified draw sequence. mt19937_64 output
// is pinned by the standard and the Gaussian transform is written out here, so
// identical seeds give bit-identical draws on any conforming platform.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(seed) {}

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [lo, hi] via scaled double (modest bias is irrelevant here).
  int uniform_int(int lo, int hi) {
    int r = lo + static_cast<int>(uniform01() * static_cast<double>(hi - lo + 1));
    return r > hi ? hi : r;
  }

  // Basic Box-Muller pair; consumes exactly two uniforms.
  std::pair<double, double> gaussian_pair() {
    double u1 = 1.0 - uniform01();  // (0, 1]
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    return {r * std::cos(a), r * std::sin(a)};
  }

  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    auto [z0, z1] = gaussian_pair();
    spare_ = z1;
    has_spare_ = true;
    return z0;
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_{false};
  double spare_{0.0};
};

}  // namespace gpmppi
