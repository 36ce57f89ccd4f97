#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace ness {

/// Stateless counter-based noise source. Every draw is a pure function of
/// (seed, path, step, channel, index), so a path can be regenerated on any
/// worker in any order.
class NoiseStream {
 public:
  /// Channels used by the simulators. Independent channels never share draws.
  enum Channel : std::uint64_t {
    kPrimary = 0,     // driving Brownian increment
    kAuxiliary = 1,   // independent increment B'' of the kinetic coupling
    kBridge = 2,      // uniforms for Brownian-bridge crossing tests
    kInitial = 3,     // initial-law sampling
    kExtra = 4,
  };

  explicit NoiseStream(std::uint64_t seed) : seed_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}

  std::uint64_t seed() const { return seed_; }

  /// Fills `out` with independent standard normals.
  void normals(std::uint64_t path, std::uint64_t step, std::uint64_t channel,
               std::span<double> out) const {
    const std::uint64_t base = key(path, step, channel);
    const std::size_t n = out.size();
    for (std::size_t k = 0; k < n; k += 2) {
      const double u1 = to_open_unit(mix(base + 2 * k + 1));
      const double u2 = to_open_unit(mix(base + 2 * k + 2));
      const double radius = std::sqrt(-2.0 * std::log(u1));
      const double angle = 2.0 * std::numbers::pi * u2;
      out[k] = radius * std::cos(angle);
      if (k + 1 < n) out[k + 1] = radius * std::sin(angle);
    }
  }

  double normal(std::uint64_t path, std::uint64_t step, std::uint64_t channel) const {
    double z;
    normals(path, step, channel, std::span<double>(&z, 1));
    return z;
  }

  /// Uniform on the open interval (0, 1).
  double uniform(std::uint64_t path, std::uint64_t step, std::uint64_t channel,
                 std::uint64_t index = 0) const {
    return to_open_unit(mix(key(path, step, channel) + 0x9e3779b97f4a7c15ULL * (index + 1)));
  }

  /// Derives an independent stream, e.g. one per replica of an experiment.
  NoiseStream derive(std::uint64_t tag) const {
    NoiseStream s(0);
    s.seed_ = mix(seed_ + 0xbb67ae8584caa73bULL * (tag + 1));
    return s;
  }

  static std::uint64_t mix(std::uint64_t z) {
    // splitmix64 finalizer
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
  }

 private:
  std::uint64_t key(std::uint64_t path, std::uint64_t step, std::uint64_t channel) const {
    std::uint64_t h = mix(seed_ + 0x3c6ef372fe94f82bULL * (path + 1));
    h = mix(h ^ (0xa54ff53a5f1d36f1ULL * (channel + 1)));
    return mix(h + 0x510e527fade682d1ULL * step);
  }

  static double to_open_unit(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t seed_;
};

}  // namespace ness
