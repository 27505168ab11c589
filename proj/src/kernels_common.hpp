#pragma once

// Shared per-pixel reference paths.  Both the scalar TU and the AVX2 TU pull
// these in for edge/remainder pixels, so one definition keeps the operation
// order (and therefore the rounding) identical everywhere.

#include <cstddef>

#include "tileseg/kernels.hpp"

namespace tileseg::kernels::detail {

// One conv output pixel.  Taps whose source coordinate falls outside the
// input are skipped entirely (zero padding contributes nothing, and skipping
// rather than adding 0.0f keeps -0.0 accumulators untouched).
inline float conv_pixel(const float* in, const float* w, float acc,
                        int in_w, int in_h, int cin, int k, int d,
                        int iy0, int ix0) {
    const size_t plane = static_cast<size_t>(in_w) * in_h;
    for (int ic = 0; ic < cin; ++ic) {
        const float* ip = in + plane * ic;
        const float* wp = w + static_cast<size_t>(ic) * k * k;
        for (int ky = 0; ky < k; ++ky) {
            int iy = iy0 + ky * d;
            if (iy < 0 || iy >= in_h) continue;
            const float* irow = ip + static_cast<size_t>(iy) * in_w;
            const float* wrow = wp + static_cast<size_t>(ky) * k;
            for (int kx = 0; kx < k; ++kx) {
                int ix = ix0 + kx * d;
                if (ix < 0 || ix >= in_w) continue;
                acc = acc + irow[ix] * wrow[kx];
            }
        }
    }
    return acc;
}

// maxps semantics: keep the second operand on ties (incl. +-0), so the scalar
// fold and _mm256_max_ps agree bit for bit.
inline float fold_max(float m, float v) { return m > v ? m : v; }

inline float pool_pixel(const float* plane, int in_w, int k, int iy0, int ix0) {
    const float* row = plane + static_cast<size_t>(iy0) * in_w + ix0;
    float m = row[0];
    for (int ky = 0; ky < k; ++ky) {
        const float* r = row + static_cast<size_t>(ky) * in_w;
        for (int kx = 0; kx < k; ++kx) {
            if (ky == 0 && kx == 0) continue;
            m = fold_max(m, r[kx]);
        }
    }
    return m;
}

}  // namespace tileseg::kernels::detail
