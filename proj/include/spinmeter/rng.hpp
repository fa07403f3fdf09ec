#pragma once

// Random streams.  Every stream is a std::mt19937_64 (its output sequence is
// fixed by the C++ standard) seeded with a 64-bit value; child seeds are
// derived with the SplitMix64 finalizer so that realization k and purpose p of
// a run never share a stream.  Uniform and Gaussian deviates are produced by
// hand-written scaling and Box-Muller so results do not depend on the
// standard library's distribution implementations.

#include <cstdint>
#include <random>
#include <utility>

namespace spinmeter {

/// SplitMix64 output function (Steele, Lea & Flood).
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum class SeedPurpose : std::uint64_t {
  couplings = 1,
  ready_apparatus = 2,
  ready_environment = 3,
  ready_joint = 4,
  synthetic = 5,
};

/// Child seed for (realization, purpose) of a run seeded with `master`:
/// splitmix64(splitmix64(splitmix64(master) ^ realization) ^ purpose).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t realization,
                                    SeedPurpose purpose) noexcept {
  return splitmix64(splitmix64(splitmix64(master) ^ realization) ^
                    static_cast<std::uint64_t>(purpose));
}

class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1].
  double uniform_open_low() { return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Two independent standard normal deviates from one Box-Muller transform.
  std::pair<double, double> gaussian_pair();

 private:
  std::mt19937_64 engine_;
};

}  // namespace spinmeter
