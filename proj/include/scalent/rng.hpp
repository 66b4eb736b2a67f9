#pragma once

#include <cstdint>

namespace scalent {

// Counter-based generator: every draw is a pure function of
// (seed, stream, counter), so the value a worker sees never depends on
// scheduling order.
class CounterRng {
 public:
  constexpr CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_(mix(seed ^ mix(stream + 0x9E3779B97F4A7C15ULL))) {}

  constexpr std::uint64_t bits(std::uint64_t counter) const noexcept {
    return mix(key_ + counter * 0xD1B54A32D192ED03ULL);
  }

  // Uniform in [0, 1) with 53 random bits.
  constexpr double uniform(std::uint64_t counter) const noexcept {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, bound); bound > 0. Multiply-shift, bias < 2^-32
  // for the bounds used here.
  std::uint64_t below(std::uint64_t counter, std::uint64_t bound) const noexcept {
    const unsigned __int128 wide =
        static_cast<unsigned __int128>(bits(counter)) * bound;
    return static_cast<std::uint64_t>(wide >> 64);
  }

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t key_;
};

}  // namespace scalent
