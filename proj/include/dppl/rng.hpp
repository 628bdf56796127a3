#pragma once

// Deterministic random number generation for the whole toolkit.
//
// Every stochastic routine takes an explicit 64-bit seed and builds its own
// generator from it, so concurrent callers never share state and results are
// bit-reproducible across runs and platforms. The generator is the standard
// mt19937_64 engine; uniforms take the top 53 bits of each output word and
// normals come from the basic Box-Muller transform. Dataset and report files
// record the generator under the name dppl::kPrngName.

#include <cmath>
#include <cstdint>
#include <random>

namespace dppl {

inline constexpr const char* kPrngName = "mt19937_64-boxmuller";

// SplitMix64 output mixer, used to derive independent per-item seeds from a
// (seed, index) pair without correlated low bits.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_stream_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 1));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller on (0,1] uniforms; the second value of
  // each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // Shift into (0,1] so the log argument is never zero.
    const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dppl
