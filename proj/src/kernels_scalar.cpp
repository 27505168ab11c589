#include <cstring>

#include "kernels_common.hpp"
#include "tileseg/kernels.hpp"

namespace tileseg::kernels {

int conv_out_size(int n, int k, int s, int p, int d) {
    // Truncating division would turn small negative spans into a bogus 1.
    const int span = n + 2 * p - d * (k - 1) - 1;
    return span < 0 ? 0 : span / s + 1;
}

int pool_out_size(int n, int k, int s) { return n < k ? 0 : (n - k) / s + 1; }

int ConvShape::out_w() const { return conv_out_size(in_w, k, stride, pad, dil); }
int ConvShape::out_h() const { return conv_out_size(in_h, k, stride, pad, dil); }

namespace scalar {

void conv2d(const float* in, const float* w, const float* bias, float* out,
            const ConvShape& s) {
    const int ow = s.out_w(), oh = s.out_h();
    const size_t wplane = static_cast<size_t>(s.cin) * s.k * s.k;
    for (int oc = 0; oc < s.cout; ++oc) {
        const float* wc = w + wplane * oc;
        const float b = bias ? bias[oc] : 0.0f;
        float* op = out + static_cast<size_t>(ow) * oh * oc;
        for (int oy = 0; oy < oh; ++oy) {
            const int iy0 = oy * s.stride - s.pad;
            for (int ox = 0; ox < ow; ++ox) {
                const int ix0 = ox * s.stride - s.pad;
                op[static_cast<size_t>(oy) * ow + ox] =
                    detail::conv_pixel(in, wc, b, s.in_w, s.in_h, s.cin, s.k, s.dil, iy0, ix0);
            }
        }
    }
}

void relu(const float* in, float* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = in[i] > 0.0f ? in[i] : 0.0f;
}

void maxpool2d(const float* in, float* out, int in_w, int in_h, int k, int s) {
    const int ow = pool_out_size(in_w, k, s), oh = pool_out_size(in_h, k, s);
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
            out[static_cast<size_t>(oy) * ow + ox] =
                detail::pool_pixel(in, in_w, k, oy * s, ox * s);
}

void upsample_nearest(const float* in, float* out, int in_w, int in_h, int f) {
    const int ow = in_w * f;
    for (int y = 0; y < in_h; ++y) {
        float* orow = out + static_cast<size_t>(y) * f * ow;
        const float* irow = in + static_cast<size_t>(y) * in_w;
        for (int x = 0; x < in_w; ++x)
            for (int r = 0; r < f; ++r) orow[x * f + r] = irow[x];
        for (int r = 1; r < f; ++r)
            std::memcpy(orow + static_cast<size_t>(r) * ow, orow, sizeof(float) * ow);
    }
}

void axpy_region(float* acc, size_t acc_stride, const float* x, size_t x_stride,
                 int w_sub, int h_sub, float w) {
    for (int y = 0; y < h_sub; ++y) {
        float* a = acc + acc_stride * y;
        const float* b = x + x_stride * y;
        for (int i = 0; i < w_sub; ++i) a[i] = a[i] + w * b[i];
    }
}

void madd_region(float* acc, size_t acc_stride, const float* a, size_t a_stride,
                 const float* b, size_t b_stride, int w_sub, int h_sub) {
    for (int y = 0; y < h_sub; ++y) {
        float* d = acc + acc_stride * y;
        const float* pa = a + a_stride * y;
        const float* pb = b + b_stride * y;
        for (int i = 0; i < w_sub; ++i) d[i] = d[i] + pa[i] * pb[i];
    }
}

void add_const_region(float* acc, size_t acc_stride, int w_sub, int h_sub, float v) {
    for (int y = 0; y < h_sub; ++y) {
        float* d = acc + acc_stride * y;
        for (int i = 0; i < w_sub; ++i) d[i] = d[i] + v;
    }
}

void divide(const float* num, const float* den, float* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = num[i] / den[i];
}

void argmax_u8(const float* planes, size_t plane_stride, int classes, uint8_t* out, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        float best = planes[i];
        int cls = 0;
        for (int c = 1; c < classes; ++c) {
            float v = planes[plane_stride * c + i];
            if (v > best) {
                best = v;
                cls = c;
            }
        }
        out[i] = static_cast<uint8_t>(cls);
    }
}

}  // namespace scalar
}  // namespace tileseg::kernels
