#pragma once

#include <cmath>
#include <cstdint>

namespace vpx {

// Deterministic splitmix64 stream. All randomness in the project flows through
// this type so that runs are reproducible bit-for-bit across platforms; nothing
// here depends on libstdc++ distribution internals.
struct Rng {
  std::uint64_t state = 0;
  bool has_spare = false;
  double spare = 0.0;

  explicit Rng(std::uint64_t seed) : state(seed) {}

  std::uint64_t next_u64() {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Independent child stream; forking never perturbs the parent state.
  Rng fork(std::uint64_t stream) const {
    Rng child(state ^ (stream * 0xD1B54A32D192ED03ull + 0x8CB92BA72F3D8DD7ull));
    child.next_u64();
    return child;
  }

  // Uniform in [0,1) with 24 bits of mantissa.
  float uniform() { return static_cast<float>(next_u64() >> 40) * (1.0f / 16777216.0f); }

  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0,n); n must be positive.
  int uniform_int(int n) {
    return static_cast<int>((static_cast<unsigned __int128>(next_u64()) *
                             static_cast<unsigned __int128>(n)) >>
                            64);
  }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  float normal() {
    if (has_spare) {
      has_spare = false;
      return static_cast<float>(spare);
    }
    double u1 = 0.0;
    do {
      u1 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    } while (u1 <= 0.0);
    const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare = r * std::sin(a);
    has_spare = true;
    return static_cast<float>(r * std::cos(a));
  }
};

}  // namespace vpx
