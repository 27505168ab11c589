#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tileseg/analysis.hpp"
#include "tileseg/net.hpp"
#include "tileseg/synth.hpp"
#include "tileseg/tiler.hpp"

using namespace tileseg;

namespace {

NetworkGraph encoder_net(uint64_t seed) {
    NetworkGraph net = NetworkGraph::parse(
        "input in channels=1\nconv c1 from=in k=3 cout=4\nrelu r1 from=c1\n"
        "maxpool p1 from=r1 k=2 s=2\nconv c2 from=p1 k=3 cout=8\nrelu r2 from=c2\n"
        "maxpool p2 from=r2 k=2 s=2\nconv c3 from=p2 k=3 cout=3\noutput out from=c3\n");
    net.init_weights(seed);
    return net;
}

NetworkGraph padded_net(uint64_t seed) {
    NetworkGraph net = NetworkGraph::parse(
        "input in channels=1\nconv c1 from=in k=3 p=1 cout=4\nrelu r1 from=c1\n"
        "conv c2 from=r1 k=3 p=1 cout=3\noutput out from=c2\n");
    net.init_weights(seed);
    return net;
}

Raster labels4(std::initializer_list<uint8_t> v) {
    Raster r(2, 2, 1, Dtype::U8);
    int i = 0;
    for (uint8_t x : v) r.u8()[i++] = x;
    return r;
}

}  // namespace

TEST_CASE("iou basics") {
    Raster a = labels4({0, 1, 1, 0});
    Raster b = labels4({1, 1, 0, 0});
    CHECK(iou(a, a, 1) == 1.0);
    CHECK(iou(a, b, 1) == doctest::Approx(1.0 / 3.0));
    CHECK(iou(a, b, 1) == iou(b, a, 1));     // symmetric
    CHECK(iou(a, b, 0) == doctest::Approx(1.0 / 3.0));
    CHECK(iou(a, a, 7) == 1.0);              // class absent from both -> 1
    Raster c = labels4({2, 2, 2, 2});
    CHECK(iou(a, c, 2) == 0.0);              // disjoint
    Raster f(2, 2, 1, Dtype::F32);
    CHECK_THROWS_AS(iou(f, f, 0), ShapeError);
    CHECK_THROWS_AS(iou(a, Raster(2, 3, 1, Dtype::U8), 0), ShapeError);
}

TEST_CASE("correlation: exact cells are exactly the period-aligned shifts") {
    NetworkGraph net = encoder_net(40);          // P = 4
    Raster tile = make_synthetic_tile(40, 96, 96, 1, 8);
    CorrelationMatrix cm = correlation_matrix(net, tile, {20, 20, 24, 24}, 8);

    for (int di = 0; di < 8; ++di)
        for (int dj = 0; dj < 8; ++dj) {
            bool aligned = di % 4 == 0 && dj % 4 == 0;
            CHECK(cm.is_exact(di, dj) == aligned);
            if (aligned) CHECK(cm.value(di, dj) == doctest::Approx(1.0));
            CHECK(cm.value(di, dj) >= -1.0);
            CHECK(cm.value(di, dj) <= 1.0);
        }
    CHECK(cm.is_exact(0, 0));
    CHECK(cm.value(0, 0) == 1.0);
}

TEST_CASE("correlation: fully padded net is translation-exact in the interior") {
    NetworkGraph net = padded_net(8);            // P = 1
    Raster tile = make_synthetic_tile(13, 64, 64, 1, 5);
    CorrelationMatrix cm = correlation_matrix(net, tile, {16, 16, 16, 16}, 3);
    for (int di = 0; di < 3; ++di)
        for (int dj = 0; dj < 3; ++dj) CHECK(cm.is_exact(di, dj));
}

TEST_CASE("correlation guards the region against the window border") {
    NetworkGraph net = encoder_net(40);
    Raster tile = make_synthetic_tile(40, 96, 96, 1, 8);
    CHECK_THROWS_AS(correlation_matrix(net, tile, {0, 0, 8, 8}, 8), GeometryError);
    CHECK_THROWS_AS(correlation_matrix(net, tile, {80, 80, 16, 16}, 8), GeometryError);
    CHECK_THROWS_AS(correlation_matrix(net, tile, {20, 20, 8, 8}, 0), GeometryError);
}

TEST_CASE("edge profile of a valid net is identically zero") {
    NetworkGraph net = encoder_net(41);
    Raster tile = make_synthetic_tile(41, 128, 128, 1, 8);
    TilePlan tp = plan(128, 128, NetGeometry(net), 48, StitchStrategy::make_concat());
    EdgeErrorProfile prof = edge_error_profile(net, tile, tp);
    long long total = 0;
    for (size_t d = 0; d < prof.counts.size(); ++d) {
        CHECK(prof.disagreements[d] == 0);
        total += prof.counts[d];
    }
    // every patch contributes its full m x m output to the bins
    CHECK(total >= (long long)tp.entries.size() * tp.patch_output * tp.patch_output);
}

TEST_CASE("edge profile of a padded net is supported below the contamination margin") {
    NetworkGraph net = padded_net(401);
    NetGeometry g(net);
    Raster tile = make_synthetic_tile(401, 128, 128, 1, 6);
    TilePlan tp = plan(128, 128, g, 32, StitchStrategy::make_concat());
    const int C = g.contamination_margin(32);
    REQUIRE(C == 2);
    EdgeErrorProfile prof = edge_error_profile(net, tile, tp);
    long long inside = 0;
    for (size_t d = 0; d < prof.counts.size(); ++d) {
        if (int(d) >= C)
            CHECK(prof.disagreements[d] == 0);
        else
            inside += prof.disagreements[d];
    }
    CHECK(inside > 0);  // seams do disagree somewhere
}

TEST_CASE("equivariance witness: pooling breaks sub-period shifts only") {
    NetworkGraph net = NetworkGraph::parse(
        "input in channels=1\nconv c from=in k=3 cout=2\nmaxpool p from=c k=2 s=2\n"
        "conv h from=p k=1 cout=2\noutput o from=h\n");
    net.init_weights(77);
    Raster img = make_synthetic_tile(77, 80, 80, 1, 6);
    CHECK(equivariance_check(net, img, 0, 2) == 0);   // full period
    CHECK(equivariance_check(net, img, 2, 2) == 0);
    CHECK(equivariance_check(net, img, 0, 1) > 0);    // half period
    CHECK(equivariance_check(net, img, 1, 0) > 0);
    CHECK_THROWS_AS(equivariance_check(net, img, 0, 80), GeometryError);
}

TEST_CASE("context mask of a padded net is the full contaminated complement") {
    NetworkGraph net = padded_net(19);
    NetGeometry g(net);
    Raster tile = make_synthetic_tile(19, 48, 48, 1, 5);
    Raster mask = context_sensitivity(net, tile, {16, 16, 10, 10});
    REQUIRE(mask.width() == 10);
    const int C = g.contamination_margin(10);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) {
            bool contaminated = std::min({x, y, 9 - x, 9 - y}) < C;
            CHECK(mask.at_u8(0, y, x) == (contaminated ? 1 : 0));
        }
    CHECK(mask_margin(mask) == C);
}

TEST_CASE("context mask needs room in the tile") {
    NetworkGraph net = padded_net(19);
    Raster tile = make_synthetic_tile(19, 24, 24, 1, 2);
    CHECK_THROWS_AS(context_sensitivity(net, tile, {0, 0, 10, 10}), GeometryError);
    CHECK_THROWS_AS(context_sensitivity(net, tile, {20, 20, 10, 10}), GeometryError);
}

TEST_CASE("mask_margin of hand masks") {
    Raster m(5, 5, 1, Dtype::U8);
    CHECK(mask_margin(m) == 0);          // empty
    m.at_u8(0, 0, 2) = 1;                // border pixel
    CHECK(mask_margin(m) == 1);
    m.at_u8(0, 1, 1) = 1;                // one ring deeper
    CHECK(mask_margin(m) == 2);
    m.at_u8(0, 2, 2) = 1;                // center of 5x5
    CHECK(mask_margin(m) == 3);
}

TEST_CASE("averaging identical aligned views is exactly constant") {
    NetworkGraph net = encoder_net(42);
    Raster tile = make_synthetic_tile(42, 96, 96, 1, 8);
    std::vector<std::pair<int, int>> shifts = {{0, 0}, {4, 0}, {0, 4}, {4, 4}, {8, 8}};
    auto sweep = averaging_sweep(net, tile, shifts);
    REQUIRE(sweep.size() == 5);
    for (const SweepPoint& pt : sweep) {
        CHECK(pt.mean_iou == sweep[0].mean_iou);  // bitwise-equal doubles
        for (size_t c = 0; c < pt.class_iou.size(); ++c)
            CHECK(pt.class_iou[c] == sweep[0].class_iou[c]);
    }
    CHECK(sweep[0].count == 1);
    CHECK(sweep[4].count == 5);
    CHECK(sweep[4].di == 8);
}

TEST_CASE("misaligned averaging still yields sane IoU") {
    NetworkGraph net = encoder_net(43);
    Raster tile = make_synthetic_tile(43, 96, 96, 1, 8);
    std::vector<std::pair<int, int>> shifts = {{0, 0}, {1, 2}, {3, 1}, {2, 3}};
    auto sweep = averaging_sweep(net, tile, shifts);
    REQUIRE(sweep.size() == 4);
    for (const SweepPoint& pt : sweep) {
        CHECK(pt.mean_iou >= 0.0);
        CHECK(pt.mean_iou <= 1.0);
        CHECK(int(pt.class_iou.size()) == 3);
    }
    CHECK_THROWS_AS(averaging_sweep(net, tile, {{-1, 0}}), GeometryError);
}

TEST_CASE("bench covers each size with the right plan cardinality") {
    NetworkGraph net = padded_net(2);  // m = n, so entry counts are exact squares
    Raster tile = make_synthetic_tile(2, 256, 256, 1, 4);
    auto rows = bench_patch_sizes(net, tile, {64, 128, 256}, 1, 1);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].patch == 64);
    CHECK(rows[0].entries == 16);
    CHECK(rows[1].entries == 4);
    CHECK(rows[2].entries == 1);
    for (const BenchRow& r : rows) {
        CHECK(r.total_ms > 0.0);
        CHECK(r.forward_ms > 0.0);
    }
}
