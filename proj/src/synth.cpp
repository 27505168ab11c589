#include "tileseg/synth.hpp"

#include <algorithm>

#include "tileseg/prng.hpp"

namespace tileseg {

Raster make_synthetic_tile(uint64_t seed, int w, int h, int channels, int rects) {
    Raster r(w, h, channels, Dtype::F32);
    SplitMix64 rng(seed);
    float* p = r.f32();
    for (size_t i = 0; i < r.total_size(); ++i) p[i] = rng.next_float(0.0, 1.0);

    auto below = [&](int n) { return std::min(n - 1, int(rng.next_unit() * n)); };
    for (int i = 0; i < rects; ++i) {
        const int x0 = below(w), y0 = below(h);
        const int rw = 1 + below(w - x0), rh = 1 + below(h - y0);
        const float v = rng.next_float(0.0, 1.0);
        for (int c = 0; c < channels; ++c)
            for (int y = y0; y < y0 + rh; ++y)
                std::fill_n(r.f32_plane(c) + size_t(y) * w + x0, rw, v);
    }
    return r;
}

}  // namespace tileseg
