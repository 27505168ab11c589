#include <atomic>
#include <cstdlib>
#include <string>

#include "tileseg/errors.hpp"
#include "tileseg/kernels.hpp"

namespace tileseg::kernels {

#if defined(__x86_64__) || defined(_M_X64)
#define TILESEG_X86 1
#else
#define TILESEG_X86 0
#endif

const char* isa_name(Isa isa) {
    return isa == Isa::Avx2 ? "avx2" : "scalar";
}

bool isa_available(Isa isa) {
    if (isa == Isa::Scalar) return true;
#if TILESEG_X86
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

Isa best_available() {
    return isa_available(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar;
}

namespace {

Isa parse_isa(const std::string& s) {
    if (s == "scalar") return Isa::Scalar;
    if (s == "avx2") return Isa::Avx2;
    throw Error("unknown kernel set '" + s + "' (expected scalar or avx2)");
}

std::atomic<int> g_active{-1};

}  // namespace

Isa active_isa() {
    int v = g_active.load(std::memory_order_relaxed);
    if (v >= 0) return static_cast<Isa>(v);
    Isa isa;
    if (const char* env = std::getenv("TILESEG_KERNELS")) {
        isa = parse_isa(env);
        if (!isa_available(isa))
            throw Error(std::string("TILESEG_KERNELS=") + env + " is not available on this host");
    } else {
        isa = best_available();
    }
    g_active.store(static_cast<int>(isa), std::memory_order_relaxed);
    return isa;
}

void set_active_isa(Isa isa) {
    if (!isa_available(isa))
        throw Error(std::string("kernel set '") + isa_name(isa) + "' is not available on this host");
    g_active.store(static_cast<int>(isa), std::memory_order_relaxed);
}

#if TILESEG_X86
#define TILESEG_DISPATCH(fn, ...)                          \
    if (active_isa() == Isa::Avx2) {                       \
        avx2::fn(__VA_ARGS__);                             \
        return;                                            \
    }                                                      \
    scalar::fn(__VA_ARGS__)
#else
#define TILESEG_DISPATCH(fn, ...) scalar::fn(__VA_ARGS__)
#endif

void conv2d(const float* in, const float* w, const float* bias, float* out, const ConvShape& s) {
    TILESEG_DISPATCH(conv2d, in, w, bias, out, s);
}

void relu(const float* in, float* out, size_t n) {
    TILESEG_DISPATCH(relu, in, out, n);
}

void maxpool2d(const float* in, float* out, int in_w, int in_h, int k, int s) {
    TILESEG_DISPATCH(maxpool2d, in, out, in_w, in_h, k, s);
}

void upsample_nearest(const float* in, float* out, int in_w, int in_h, int f) {
    TILESEG_DISPATCH(upsample_nearest, in, out, in_w, in_h, f);
}

void axpy_region(float* acc, size_t acc_stride, const float* x, size_t x_stride,
                 int w_sub, int h_sub, float w) {
    TILESEG_DISPATCH(axpy_region, acc, acc_stride, x, x_stride, w_sub, h_sub, w);
}

void madd_region(float* acc, size_t acc_stride, const float* a, size_t a_stride,
                 const float* b, size_t b_stride, int w_sub, int h_sub) {
    TILESEG_DISPATCH(madd_region, acc, acc_stride, a, a_stride, b, b_stride, w_sub, h_sub);
}

void add_const_region(float* acc, size_t acc_stride, int w_sub, int h_sub, float v) {
    TILESEG_DISPATCH(add_const_region, acc, acc_stride, w_sub, h_sub, v);
}

void divide(const float* num, const float* den, float* out, size_t n) {
    TILESEG_DISPATCH(divide, num, den, out, n);
}

void argmax_u8(const float* planes, size_t plane_stride, int classes, uint8_t* out, size_t n) {
    TILESEG_DISPATCH(argmax_u8, planes, plane_stride, classes, out, n);
}

}  // namespace tileseg::kernels
