#pragma once

#include <cstdint>

#include "tileseg/raster.hpp"

namespace tileseg {

// Deterministic synthetic imagery: uniform [0,1) noise with `rects` random
// constant-value rectangles superimposed (all channels share each rectangle's
// value).  One SplitMix64 stream, consumed channel-major for the noise and
// then per rectangle as (x0, y0, w, h, value).
Raster make_synthetic_tile(uint64_t seed, int w, int h, int channels, int rects);

}  // namespace tileseg
