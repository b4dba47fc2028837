#pragma once

#include <cstdint>

namespace nlbb {

// Deterministic generator with a fixed cross-platform output sequence.
// std:: distributions are implementation-defined, so anything that must be
// reproducible bit for bit (seeded marginals, golden files) goes through this.
struct SplitMix64 {
  std::uint64_t state;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform on [0, 1), 53-bit resolution
  double uniform01() { return double(next() >> 11) * 0x1.0p-53; }
};

}  // namespace nlbb
