#pragma once

#include <cmath>
#include <cstdint>

namespace fkmc {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace detail

/// Stream tags keeping independent random-number consumers decoupled from
/// one another while everything derives from a single 64-bit config seed.
enum class RngStream : std::uint64_t {
  BridgePath = 1,
  FieldAtPathNodes = 2,
  KatoXi = 3,
  LatticeField = 4,
  ProbePoints = 5,
  SiteWeights = 6,
};

/// Counter-based random generator: the state is a pure function of
/// (seed, stream, index), so path i draws the same numbers no matter which
/// worker executes it or in which order. xoshiro256++ seeded via splitmix64.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, RngStream stream, std::uint64_t index) {
    std::uint64_t h = seed;
    detail::splitmix64(h);
    h ^= 0xD1B54A32D192ED03ULL * (static_cast<std::uint64_t>(stream) + 1);
    detail::splitmix64(h);
    h ^= 0x9E6C63D0876A9A47ULL * (index + 1);
    s_[0] = detail::splitmix64(h);
    s_[1] = detail::splitmix64(h);
    s_[2] = detail::splitmix64(h);
    s_[3] = detail::splitmix64(h);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = detail::rotl(s_[3], 45);
    return result;
  }

  /// Uniform on [0,1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0,1]; safe as a log argument.
  double uniform_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller, one spare cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace fkmc
