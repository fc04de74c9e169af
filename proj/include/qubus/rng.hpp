// rng.hpp — counter-based deterministic RNG with splittable substreams.
//
// Every random decision in the simulator draws from an explicitly seeded
// stream. A draw is a pure function of (key, counter); replaying a run with
// the same seed reproduces every decision bit-for-bit, and sweep points get
// independent substreams derived from (seed, point index) without any shared
// mutable state.

#pragma once

#include <cmath>
#include <cstdint>

namespace qubus {

// SplitMix64 finalizer: bijective 64-bit avalanche mix.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Position of a stream at the moment a decision was drawn; stored in
// detection records so any sampled outcome can be replayed exactly.
struct SeedPath {
  std::uint64_t key = 0;
  std::uint64_t counter = 0;
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix64(seed ^ mix64(stream ^ 0x5851f42d4c957f2dull))) {}

  // Independent child stream; does not advance this stream.
  Rng substream(std::uint64_t index) const { return Rng(key_, index + 1); }

  std::uint64_t next_u64() { return mix64(key_ ^ mix64(counter_++)); }

  // Uniform double in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; consumes exactly two uniforms.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;  // keep log finite without extra draws
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.2831853071795864769 * u2);
  }

  SeedPath position() const { return {key_, counter_}; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace qubus
