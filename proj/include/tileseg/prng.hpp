#pragma once

#include <cstdint>

namespace tileseg {

// SplitMix64 (Steele/Lea/Burton finalizer).  Small, seedable, and easy to
// reproduce in other languages, which is the whole point: every random value
// in this project must be derivable from a single u64 seed.
class SplitMix64 {
  public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Top 53 bits -> double in [0, 1).
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform float in [lo, hi); the double->float rounding happens once, at
    // the very end, so the mapping is unambiguous.
    float next_float(double lo, double hi) {
        return static_cast<float>(lo + next_unit() * (hi - lo));
    }

  private:
    uint64_t state_;
};

}  // namespace tileseg
