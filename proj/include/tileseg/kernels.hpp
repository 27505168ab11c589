#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace tileseg::kernels {

// Everything a conv kernel needs to know.  Weights are [cout][cin][k][k],
// input/output planar.  `pad` is symmetric zero padding, `dil` dilation.
struct ConvShape {
    int in_w = 0, in_h = 0, cin = 0;
    int k = 0, stride = 1, pad = 0, dil = 1;
    int cout = 0;
    int out_w() const;
    int out_h() const;
};

// (n + 2p - d*(k-1) - 1) / s + 1, floor; <= 0 means the layer cannot run.
int conv_out_size(int n, int k, int s, int p, int d);
int pool_out_size(int n, int k, int s);

enum class Isa : int { Scalar = 0, Avx2 = 1 };

const char* isa_name(Isa isa);
bool isa_available(Isa isa);
Isa best_available();

// Process-wide selection used by the dispatched entry points below.  Honors
// the TILESEG_KERNELS environment variable ("scalar"/"avx2") on first use.
Isa active_isa();
void set_active_isa(Isa isa);  // throws tileseg::Error if unavailable

// Dispatched entry points.  All variants of one op are bit-exact against each
// other: same operation order per output element, no FMA contraction.
void conv2d(const float* in, const float* w, const float* bias, float* out, const ConvShape& s);
void relu(const float* in, float* out, size_t n);
void maxpool2d(const float* in, float* out, int in_w, int in_h, int k, int s);
void upsample_nearest(const float* in, float* out, int in_w, int in_h, int f);
// acc[i] += w * x[i] over a w_sub x h_sub sub-rectangle of a wide accumulator row.
void axpy_region(float* acc, size_t acc_stride, const float* x, size_t x_stride,
                 int w_sub, int h_sub, float w);
// acc[i] += a[i] * b[i] over a sub-rectangle (per-pixel weights).
void madd_region(float* acc, size_t acc_stride, const float* a, size_t a_stride,
                 const float* b, size_t b_stride, int w_sub, int h_sub);
// acc[i] += v over a sub-rectangle.
void add_const_region(float* acc, size_t acc_stride, int w_sub, int h_sub, float v);
void divide(const float* num, const float* den, float* out, size_t n);
// argmax over `classes` planes of `plane_stride` floats; ties -> lowest index.
void argmax_u8(const float* planes, size_t plane_stride, int classes, uint8_t* out, size_t n);

// Raw variants, exposed so the equivalence tests can drive both sides
// explicitly regardless of the active selection.
namespace scalar {
void conv2d(const float* in, const float* w, const float* bias, float* out,
            const ConvShape& s);
void relu(const float* in, float* out, size_t n);
void maxpool2d(const float* in, float* out, int in_w, int in_h, int k, int s);
void upsample_nearest(const float* in, float* out, int in_w, int in_h, int f);
void axpy_region(float* acc, size_t acc_stride, const float* x, size_t x_stride,
                 int w_sub, int h_sub, float w);
void madd_region(float* acc, size_t acc_stride, const float* a, size_t a_stride,
                 const float* b, size_t b_stride, int w_sub, int h_sub);
void add_const_region(float* acc, size_t acc_stride, int w_sub, int h_sub, float v);
void divide(const float* num, const float* den, float* out, size_t n);
void argmax_u8(const float* planes, size_t plane_stride, int classes, uint8_t* out, size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
void conv2d(const float* in, const float* w, const float* bias, float* out,
            const ConvShape& s);
void relu(const float* in, float* out, size_t n);
void maxpool2d(const float* in, float* out, int in_w, int in_h, int k, int s);
void upsample_nearest(const float* in, float* out, int in_w, int in_h, int f);
void axpy_region(float* acc, size_t acc_stride, const float* x, size_t x_stride,
                 int w_sub, int h_sub, float w);
void madd_region(float* acc, size_t acc_stride, const float* a, size_t a_stride,
                 const float* b, size_t b_stride, int w_sub, int h_sub);
void add_const_region(float* acc, size_t acc_stride, int w_sub, int h_sub, float v);
void divide(const float* num, const float* den, float* out, size_t n);
void argmax_u8(const float* planes, size_t plane_stride, int classes, uint8_t* out, size_t n);
}  // namespace avx2
#endif

}  // namespace tileseg::kernels
