#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace dsmpl {

struct DisconnectedGraph : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CalibrationFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NotDoublyStochastic : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateMixing : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InfeasibleFormation : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BadInit : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MeanGradUnavailable : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Counter-based deterministic randomness. Every stochastic quantity in the
// library is a pure function of a 64-bit key, so identical inputs reproduce
// identical streams regardless of call order or thread count.
namespace rng {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

inline std::uint64_t mix(std::uint64_t v) {
  v += kGolden;
  v = (v ^ (v >> 30)) * 0xbf58476d1ce4e5b9ULL;
  v = (v ^ (v >> 27)) * 0x94d049bb133111ebULL;
  return v ^ (v >> 31);
}

inline std::uint64_t combine(std::uint64_t a, std::uint64_t b) {
  return mix(a ^ (mix(b) + kGolden + (a << 6) + (a >> 2)));
}

// Hierarchical key derivation: derive(seed, agent, t, r) and friends.
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t a) {
  return combine(seed, a);
}
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return combine(combine(seed, a), b);
}
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                            std::uint64_t c) {
  return combine(combine(combine(seed, a), b), c);
}

// Minimal splitmix64 stream; passes through doubles and portable Gaussians
// (explicit Box-Muller, no libstdc++ distribution state).
class Stream {
 public:
  explicit Stream(std::uint64_t key) : state_(key) {}

  std::uint64_t next_u64() {
    state_ += kGolden;
    std::uint64_t v = state_;
    v = (v ^ (v >> 30)) * 0xbf58476d1ce4e5b9ULL;
    v = (v ^ (v >> 27)) * 0x94d049bb133111ebULL;
    return v ^ (v >> 31);
  }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Standard normal via Box-Muller; one value per call, cache carries the pair.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    do {
      u1 = next_double();
    } while (u1 <= 0.0);
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    constexpr double two_pi = 6.283185307179586476925286766559;
    cached_ = r * std::sin(two_pi * u2);
    has_cached_ = true;
    return r * std::cos(two_pi * u2);
  }

 private:
  std::uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace rng

// FNV-1a over raw bytes, used for manifest hashes.
inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace dsmpl
