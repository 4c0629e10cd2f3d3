#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace crossuda {

/// SplitMix64 mixing step. Used both as a PRNG stream and as the stable
/// hash behind sub-seed derivation and fold assignment, so results never
/// depend on std::hash or on platform distribution implementations.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Folds a tag into a seed. combine(combine(seed, a), b) is the documented
/// sub-seed scheme: adding later tags never perturbs earlier streams.
inline uint64_t seed_combine(uint64_t seed, uint64_t tag) {
  return splitmix64(seed ^ (0x9e3779b97f4a7c15ull + tag));
}

inline uint64_t seed_combine(uint64_t seed, std::string_view tag) {
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the tag bytes
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return seed_combine(seed, h);
}

/// Deterministic PRNG with explicitly coded distributions. The raw stream
/// is SplitMix64; normal deviates use Box-Muller on that stream, so the
/// exact sequence is identical on every platform.
class Rng {
public:
  explicit Rng(uint64_t seed) : state_(splitmix64(seed ^ 0x5851f42d4c957f2dull)) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  uint64_t below(uint64_t n) { return next_u64() % n; }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(below(static_cast<uint64_t>(hi - lo + 1)));
  }

  /// Standard normal via Box-Muller (pairwise, with a cached spare).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  /// Deterministic Fisher-Yates shuffle.
  template <class Vec>
  void shuffle(Vec& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace crossuda
