// AVX2 variants.  Compiled with -mavx2 (and -ffp-contract=off, like the rest
// of the tree).  Every op keeps the exact per-element operation order of its
// scalar twin: separate mul+add (no FMA), maxps tie semantics, strict-greater
// argmax.  Shapes a variant does not cover fall through to the scalar twin.

#include <immintrin.h>

#include <algorithm>
#include <cstring>

#include "kernels_common.hpp"
#include "tileseg/kernels.hpp"

namespace tileseg::kernels::avx2 {

void conv2d(const float* in, const float* w, const float* bias, float* out,
            const ConvShape& s) {
    if (s.stride != 1) {
        scalar::conv2d(in, w, bias, out, s);
        return;
    }
    const int ow = s.out_w(), oh = s.out_h();
    const size_t in_plane = static_cast<size_t>(s.in_w) * s.in_h;
    const size_t wplane = static_cast<size_t>(s.cin) * s.k * s.k;
    // ox range where every kx tap lands inside the row
    const int x_lo = std::min(s.pad, ow);
    const int x_hi = std::max(x_lo, std::min(ow, s.in_w - (s.k - 1) * s.dil + s.pad));

    // oy outer, oc inner: the k live input rows stay cache-hot across all
    // output channels instead of re-streaming whole planes per channel
    for (int oy = 0; oy < oh; ++oy) {
        const int iy0 = oy - s.pad;
        for (int oc = 0; oc < s.cout; ++oc) {
            const float* wc = w + wplane * oc;
            const float b = bias ? bias[oc] : 0.0f;
            float* orow = out + (static_cast<size_t>(ow) * oh * oc) +
                          static_cast<size_t>(oy) * ow;
            for (int ox = 0; ox < x_lo; ++ox)
                orow[ox] = detail::conv_pixel(in, wc, b, s.in_w, s.in_h, s.cin, s.k, s.dil,
                                              iy0, ox - s.pad);
            int ox = x_lo;
            for (; ox + 8 <= x_hi; ox += 8) {
                __m256 acc = _mm256_set1_ps(b);
                for (int ic = 0; ic < s.cin; ++ic) {
                    const float* ip = in + in_plane * ic;
                    const float* wp = wc + static_cast<size_t>(ic) * s.k * s.k;
                    for (int ky = 0; ky < s.k; ++ky) {
                        const int iy = iy0 + ky * s.dil;
                        if (iy < 0 || iy >= s.in_h) continue;
                        const float* irow = ip + static_cast<size_t>(iy) * s.in_w + ox - s.pad;
                        const float* wrow = wp + static_cast<size_t>(ky) * s.k;
                        for (int kx = 0; kx < s.k; ++kx) {
                            __m256 vi = _mm256_loadu_ps(irow + kx * s.dil);
                            acc = _mm256_add_ps(acc, _mm256_mul_ps(vi, _mm256_set1_ps(wrow[kx])));
                        }
                    }
                }
                _mm256_storeu_ps(orow + ox, acc);
            }
            for (; ox < ow; ++ox)
                orow[ox] = detail::conv_pixel(in, wc, b, s.in_w, s.in_h, s.cin, s.k, s.dil,
                                              iy0, ox - s.pad);
        }
    }
}

void relu(const float* in, float* out, size_t n) {
    const __m256 z = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_max_ps(_mm256_loadu_ps(in + i), z));
    for (; i < n; ++i) out[i] = in[i] > 0.0f ? in[i] : 0.0f;
}

void maxpool2d(const float* in, float* out, int in_w, int in_h, int k, int s) {
    if (k != 2 || s != 2) {
        scalar::maxpool2d(in, out, in_w, in_h, k, s);
        return;
    }
    const int ow = pool_out_size(in_w, 2, 2), oh = pool_out_size(in_h, 2, 2);
    const __m256i reorder = _mm256_setr_epi32(0, 1, 4, 5, 2, 3, 6, 7);
    for (int oy = 0; oy < oh; ++oy) {
        const float* r0 = in + static_cast<size_t>(2 * oy) * in_w;
        const float* r1 = r0 + in_w;
        float* orow = out + static_cast<size_t>(oy) * ow;
        int ox = 0;
        for (; ox + 8 <= ow; ox += 8) {
            __m256 a0 = _mm256_loadu_ps(r0 + 2 * ox);
            __m256 b0 = _mm256_loadu_ps(r0 + 2 * ox + 8);
            __m256 a1 = _mm256_loadu_ps(r1 + 2 * ox);
            __m256 b1 = _mm256_loadu_ps(r1 + 2 * ox + 8);
            // deinterleave into even (left) and odd (right) columns; lanes are
            // shuffled but the fold is per-lane, so reorder once at the end
            __m256 m = _mm256_shuffle_ps(a0, b0, 0x88);
            m = _mm256_max_ps(m, _mm256_shuffle_ps(a0, b0, 0xDD));
            m = _mm256_max_ps(m, _mm256_shuffle_ps(a1, b1, 0x88));
            m = _mm256_max_ps(m, _mm256_shuffle_ps(a1, b1, 0xDD));
            _mm256_storeu_ps(orow + ox, _mm256_permutevar8x32_ps(m, reorder));
        }
        for (; ox < ow; ++ox)
            orow[ox] = detail::pool_pixel(in, in_w, 2, 2 * oy, 2 * ox);
    }
}

void upsample_nearest(const float* in, float* out, int in_w, int in_h, int f) {
    // pure data movement; nothing to gain over the scalar copy
    scalar::upsample_nearest(in, out, in_w, in_h, f);
}

void axpy_region(float* acc, size_t acc_stride, const float* x, size_t x_stride,
                 int w_sub, int h_sub, float w) {
    const __m256 vw = _mm256_set1_ps(w);
    for (int y = 0; y < h_sub; ++y) {
        float* a = acc + acc_stride * y;
        const float* b = x + x_stride * y;
        int i = 0;
        for (; i + 8 <= w_sub; i += 8) {
            __m256 va = _mm256_loadu_ps(a + i);
            __m256 vb = _mm256_loadu_ps(b + i);
            _mm256_storeu_ps(a + i, _mm256_add_ps(va, _mm256_mul_ps(vw, vb)));
        }
        for (; i < w_sub; ++i) a[i] = a[i] + w * b[i];
    }
}

void madd_region(float* acc, size_t acc_stride, const float* a, size_t a_stride,
                 const float* b, size_t b_stride, int w_sub, int h_sub) {
    for (int y = 0; y < h_sub; ++y) {
        float* d = acc + acc_stride * y;
        const float* pa = a + a_stride * y;
        const float* pb = b + b_stride * y;
        int i = 0;
        for (; i + 8 <= w_sub; i += 8) {
            __m256 vd = _mm256_loadu_ps(d + i);
            __m256 prod = _mm256_mul_ps(_mm256_loadu_ps(pa + i), _mm256_loadu_ps(pb + i));
            _mm256_storeu_ps(d + i, _mm256_add_ps(vd, prod));
        }
        for (; i < w_sub; ++i) d[i] = d[i] + pa[i] * pb[i];
    }
}

void add_const_region(float* acc, size_t acc_stride, int w_sub, int h_sub, float v) {
    const __m256 vv = _mm256_set1_ps(v);
    for (int y = 0; y < h_sub; ++y) {
        float* d = acc + acc_stride * y;
        int i = 0;
        for (; i + 8 <= w_sub; i += 8)
            _mm256_storeu_ps(d + i, _mm256_add_ps(_mm256_loadu_ps(d + i), vv));
        for (; i < w_sub; ++i) d[i] = d[i] + v;
    }
}

void divide(const float* num, const float* den, float* out, size_t n) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i,
                         _mm256_div_ps(_mm256_loadu_ps(num + i), _mm256_loadu_ps(den + i)));
    for (; i < n; ++i) out[i] = num[i] / den[i];
}

void argmax_u8(const float* planes, size_t plane_stride, int classes, uint8_t* out, size_t n) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 best = _mm256_loadu_ps(planes + i);
        __m256i cls = _mm256_setzero_si256();
        for (int c = 1; c < classes; ++c) {
            __m256 v = _mm256_loadu_ps(planes + plane_stride * c + i);
            __m256 gt = _mm256_cmp_ps(v, best, _CMP_GT_OQ);
            best = _mm256_blendv_ps(best, v, gt);
            cls = _mm256_blendv_epi8(cls, _mm256_set1_epi32(c), _mm256_castps_si256(gt));
        }
        alignas(32) int32_t tmp[8];
        _mm256_store_si256(reinterpret_cast<__m256i*>(tmp), cls);
        for (int j = 0; j < 8; ++j) out[i + j] = static_cast<uint8_t>(tmp[j]);
    }
    if (i < n) scalar::argmax_u8(planes + i, plane_stride, classes, out + i, n - i);
}

}  // namespace tileseg::kernels::avx2
