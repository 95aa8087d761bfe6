#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace ppg2abp::rng {

// Deterministic random stream. mt19937_64's output sequence is fixed by the
// standard; the float conversions and the bounded-int draw are pinned here
// instead of using std::*_distribution, whose results vary across standard
// library implementations. Seeded runs must reproduce bit-for-bit everywhere.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t bits() { return eng_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform index in [0, n). n must be positive.
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(eng_() % n); }

  /// Standard normal via Box-Muller; pair cache keeps draws cheap.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // offsets keep u1 in (0,1) so log() stays finite
    double u1 = (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;
    double u2 = (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Fisher-Yates shuffle driven by this stream.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Derives a sub-stream seed from a master seed and a purpose tag (FNV-1a mix),
/// so independent streams (init, sampling, buffers) never alias.
inline std::uint64_t derive(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 1099511628211ull;
  }
  h ^= seed + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

}  // namespace ppg2abp::rng
