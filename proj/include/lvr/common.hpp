#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace lvr {

using Vec = std::vector<double>;

/// Thrown when an operation receives data that violates its contract
/// (shape mismatch, non-finite entries, insufficient samples).
struct InvalidInput : std::invalid_argument {
  explicit InvalidInput(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Thrown when a tuning parameter is outside its admissible range.
struct InvalidParameter : std::invalid_argument {
  explicit InvalidParameter(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Deterministic random stream. The engine is std::mt19937_64 (whose output
/// sequence is fixed by the standard) and all value mappings are done by hand
/// so that streams are reproducible independent of the standard library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller; second value of each pair is cached.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double std) { return mean + std * normal(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection-free modulo is biased for huge n; fine for small ranges used here.
    return eng_() % n;
  }

 private:
  std::mt19937_64 eng_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

/// splitmix64 finalizer; used to derive independent seeds from a root seed.
inline std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t root, std::uint64_t stream) {
  return mix_seed(root ^ mix_seed(stream));
}

inline std::uint64_t mix_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b) {
  return mix_seed(mix_seed(root, a) ^ mix_seed(b + 0x632be59bd9b4e019ULL));
}

/// FNV-1a over a byte string; stable across platforms, used for config hashes.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string to_hex(std::uint64_t v);

/// Shortest decimal that round-trips to the same double; used by every CSV
/// writer so reruns are byte-identical.
std::string format_double(double v);

}  // namespace lvr
