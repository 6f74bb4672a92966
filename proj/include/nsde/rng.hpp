#pragma once

#include <cstdint>
#include <cmath>

namespace nsde {

/// Counter-based splittable RNG. Streams are derived from (seed, key) pairs by
/// hash mixing, so per-particle / per-path substreams are independent of
/// iteration order and of each other.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed ^ kGolden)) {}

  /// Derives an independent substream, e.g. one per particle or per path.
  static Rng substream(std::uint64_t seed, std::uint64_t key_a, std::uint64_t key_b = 0) {
    std::uint64_t s = mix(seed ^ kGolden);
    s = mix(s ^ mix(key_a + 0x9e3779b97f4a7c15ull));
    s = mix(s ^ mix(key_b + 0xbf58476d1ce4e5b9ull));
    return Rng(FromState{}, s);
  }

  std::uint64_t next_u64() {
    state_ += kGolden;
    return mix(state_);
  }

  /// Uniform on (0, 1); never returns 0 or 1 exactly.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller. Draws are produced in pairs; the spare is
  /// cached, so a stream's output depends only on how many values were drawn.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  struct FromState {};
  Rng(FromState, std::uint64_t s) : state_(s) {}

  // splitmix64 finalizer
  static std::uint64_t mix(std::uint64_t z) {
    z += kGolden;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace nsde
