#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cstdint>

#include "tileseg/prng.hpp"

using tileseg::SplitMix64;

// Reference outputs for seed 0 (published SplitMix64 test vector).
TEST_CASE("splitmix64 matches the reference sequence") {
    SplitMix64 g(0);
    CHECK(g.next_u64() == 0xE220A8397B1DCDAFULL);
    CHECK(g.next_u64() == 0x6E789E6AA1B965F4ULL);
    CHECK(g.next_u64() == 0x06C45D188009454FULL);
    CHECK(g.next_u64() == 0xF88BB8A8724C81ECULL);
}

TEST_CASE("splitmix64 seed separation") {
    CHECK(SplitMix64(1).next_u64() == 0x910A2DEC89025CC1ULL);
    CHECK(SplitMix64(0xDEADBEEF).next_u64() == 0x4ADFB90F68C9EB9BULL);
}

TEST_CASE("next_unit maps the top 53 bits into [0,1)") {
    SplitMix64 g(0);
    CHECK(g.next_unit() == doctest::Approx(0.88331080821364261).epsilon(1e-16));
    for (int i = 0; i < 10000; ++i) {
        double u = g.next_unit();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("next_float rounds the affine map once, to f32") {
    SplitMix64 g(0);
    float w = g.next_float(-0.1f, 0.1f);
    CHECK(std::bit_cast<uint32_t>(w) == 0x3D9D010Du);  // 0.07666216045618057 rounded

    SplitMix64 h(123);
    for (int i = 0; i < 1000; ++i) {
        float v = h.next_float(-1.0f, 3.0f);
        CHECK(v >= -1.0f);
        CHECK(v < 3.0f);
    }
}

TEST_CASE("streams with equal seeds are equal, different seeds diverge") {
    SplitMix64 a(77), b(77), c(78);
    bool diverged = false;
    for (int i = 0; i < 64; ++i) {
        uint64_t va = a.next_u64();
        CHECK(va == b.next_u64());
        diverged |= va != c.next_u64();
    }
    CHECK(diverged);
}
