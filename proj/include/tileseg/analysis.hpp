#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "tileseg/net.hpp"
#include "tileseg/raster.hpp"
#include "tileseg/tiler.hpp"

namespace tileseg {

// |pred `intersect` truth| / |pred `union` truth| for one class; 1.0 when both
// masks are empty.  Throws ShapeError on shape mismatch.
double iou(const Raster& pred, const Raster& truth, uint8_t class_id);

struct CorrelationMatrix {
    int max_shift = 0;
    // Row-major [di][dj].  When `defined` is false (zero variance on either
    // side) `pearson` falls back to 1 for bit-identical vectors, else 0.
    std::vector<double> pearson;
    std::vector<uint8_t> exact;    // score vectors bit-identical to the (0,0) run
    std::vector<uint8_t> defined;  // Pearson denominator nonzero

    double value(int di, int dj) const { return pearson[size_t(di) * max_shift + dj]; }
    bool is_exact(int di, int dj) const { return exact[size_t(di) * max_shift + dj] != 0; }
    bool is_defined(int di, int dj) const { return defined[size_t(di) * max_shift + dj] != 0; }
};

// Forward the net over a sliding window at every shift in [0, max_shift)^2
// and correlate class-0 scores over a fixed input-resolution region against
// the (0,0) run.  The region is sampled through the output grid, so shifts
// that are multiples of the equivariance period reproduce the reference
// vector bit for bit.
CorrelationMatrix correlation_matrix(const NetworkGraph& net, const Raster& tile,
                                     const Window& region, int max_shift);

struct EdgeErrorProfile {
    // Index = distance to the nearest patch-output border (min over the four
    // sides).  Bins with count 0 carry no rate.
    std::vector<long long> counts;
    std::vector<long long> disagreements;
    double rate(size_t d) const {
        return counts[d] ? double(disagreements[d]) / double(counts[d]) : 0.0;
    }
};

// Patchwise labels vs the full-tile forward oracle, binned by border distance.
EdgeErrorProfile edge_error_profile(const NetworkGraph& net, const Raster& tile,
                                    const TilePlan& plan);

// Forward two overlapping windows of `image` displaced by (ki rows, kj cols)
// and count bitwise label-score disagreements after shifting the outputs into
// alignment.  0 means exact equivariance at this shift.
size_t equivariance_check(const NetworkGraph& net, const Raster& image, int ki, int kj);

// Mask (U8, patch output size) of pixels whose value changes between
// forward(patch alone) and the matching region of forward(patch + real
// surrounding context).  Context is taken from `tile` on a period-aligned
// expansion; throws GeometryError when the tile cannot supply it.
Raster context_sensitivity(const NetworkGraph& net, const Raster& tile, const Window& patch);

// Per-side margin a changed-pixel mask witnesses: 0 for an empty mask, else
// 1 + the deepest border distance of any set pixel.
int mask_margin(const Raster& mask);

struct SweepPoint {
    int count = 0;   // number of shifts averaged (prefix length)
    int di = 0, dj = 0;  // shift added at this step
    double mean_iou = 0.0;
    std::vector<double> class_iou;
};

// For each prefix of `shifts`, average the realigned class scores of the
// shifted forwards and report label IoU against the full-tile oracle over the
// region common to every shift.
std::vector<SweepPoint> averaging_sweep(const NetworkGraph& net, const Raster& tile,
                                        const std::vector<std::pair<int, int>>& shifts);

struct BenchRow {
    int patch = 0;
    int entries = 0;
    double total_ms = 0.0, forward_ms = 0.0, handling_ms = 0.0;  // medians over reps
};

std::vector<BenchRow> bench_patch_sizes(const NetworkGraph& net, const Raster& tile,
                                        const std::vector<int>& sizes, int reps = 5,
                                        int workers = 1);

}  // namespace tileseg
