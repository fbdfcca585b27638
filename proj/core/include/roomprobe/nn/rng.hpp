#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace roomprobe::nn {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derive an independent stream seed from (base, lane, epoch).
inline uint64_t mix_seed(uint64_t base, uint64_t lane, uint64_t epoch = 0) {
  return splitmix64(splitmix64(base ^ (lane * 0x9e3779b97f4a7c15ULL)) ^ epoch);
}

/// Seeded generator with portable bounded/real/normal draws. The draw
/// algorithms are fixed here (not delegated to std distributions) so the
/// same seed produces the same stream on every standard library.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : gen_(seed) {}

  uint64_t u64() { return gen_(); }

  /// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  uint64_t below(uint64_t n) {
    if (n == 0) return 0;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  int index(size_t n) { return static_cast<int>(below(static_cast<uint64_t>(n))); }

  /// Uniform real in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (pair cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  bool operator==(const Rng& o) const { return gen_ == o.gen_ && has_spare_ == o.has_spare_ && spare_ == o.spare_; }
  bool operator!=(const Rng& o) const { return !(*this == o); }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace roomprobe::nn
