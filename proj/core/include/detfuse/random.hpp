#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace detfuse {

/// splitmix64 finalizer, used to derive independent substream seeds.
inline std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t a,
                                    std::uint64_t b = 0) {
  return mix_seed(seed ^ mix_seed(a ^ mix_seed(b)));
}

/// mt19937_64 engine with hand-rolled draws. The C++ standard pins the
/// engine's output sequence but not the distributions', so uniform, normal,
/// Poisson and shuffle are implemented here; results are identical across
/// standard libraries and platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n), n > 0. Modulo bias is ~n/2^64, irrelevant at
  /// the sizes used here.
  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(next_u64() % n);
  }

  int uniform_int(int lo, int hi) {  // inclusive range
    return lo + static_cast<int>(uniform_index(static_cast<std::size_t>(hi - lo + 1)));
  }

  /// Box-Muller without rejection; consumes exactly two draws per call.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform01();
    const double u2 = uniform01();
    if (u1 <= 0.0) {
      u1 = 0x1.0p-53;
    }
    const double r = std::sqrt(-2.0 * std::log(u1));
    constexpr double two_pi = 6.28318530717958647692;
    return mean + stddev * r * std::cos(two_pi * u2);
  }

  /// Knuth's product method; fine for the small rates used in synthesis.
  int poisson(double lambda) {
    if (lambda <= 0.0) {
      return 0;
    }
    const double limit = std::exp(-lambda);
    int k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform01();
    } while (p > limit);
    return k - 1;
  }

  /// Fisher-Yates; unlike std::shuffle the draw sequence is fully specified.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace detfuse
