#pragma once

#include <string>

#include "tileseg/net.hpp"
#include "tileseg/raster.hpp"
#include "tileseg/tiler.hpp"

namespace tileseg {

struct StitchTiming {
    int patches = 0;
    double forward_ms = 0.0;   // summed over entries (and workers)
    double handling_ms = 0.0;  // window reads, accumulation, finalize
    double total_ms = 0.0;     // wall clock
    std::string to_kv() const;
};

// Weighted per-class sums plus a weight plane over the output grid.
class StitchAccumulator {
  public:
    StitchAccumulator(const TilePlan& plan, int classes);

    // Add one patch's pre-clip output (classes x m x m) at its plan entry.
    void accumulate(const Raster& output_patch, const PlanEntry& entry);

    struct Result {
        Raster prob;   // F32, classes x out_h x out_w
        Raster label;  // U8, 1 x out_h x out_w
    };
    // Throws CoverageError if any pixel has zero accumulated weight.
    Result finalize() const;

    int classes() const { return classes_; }

  private:
    int out_w_, out_h_, classes_, patch_out_;
    StitchStrategy strategy_;
    Raster sums_;     // F32, classes planes
    Raster weights_;  // F32, 1 plane
    Raster taper_;    // F32, patch_out x patch_out weight stencil (Average only)
};

struct StitchResult {
    Raster prob;
    Raster label;
    StitchTiming timing;
};

// read_window(Reflect) -> forward -> accumulate over all plan entries, then
// finalize.  With workers > 1, forward passes run concurrently but results
// merge in ascending entry order, so output bits never depend on scheduling.
StitchResult stitch(const Raster& tile, const NetworkGraph& net, const TilePlan& plan,
                    int workers = 1);

}  // namespace tileseg
