#pragma once

#include <string>
#include <vector>

#include "tileseg/net.hpp"
#include "tileseg/raster.hpp"

namespace tileseg {

enum class StitchMode { Concat, Clip, Average };
enum class AvgWeight { Uniform, EdgeTaper };

struct StitchStrategy {
    StitchMode mode = StitchMode::Concat;
    int clip = 0;          // Clip: output pixels per side
    int stride_in = 0;     // Average: grid step in input pixels
    AvgWeight weight = AvgWeight::Uniform;

    static StitchStrategy make_concat() { return {}; }
    static StitchStrategy make_clip(int c) { return {StitchMode::Clip, c, 0, AvgWeight::Uniform}; }
    static StitchStrategy make_average(int stride, AvgWeight w = AvgWeight::Uniform) {
        return {StitchMode::Average, 0, stride, w};
    }

    // "concat" | "clip:<c>" | "avg:<stride>[:taper]"
    static StitchStrategy parse(const std::string& text);
    std::string describe() const;
};

// One patch placement.  input_window is in tile input coordinates and may
// overhang the tile (read with Reflect).  output_window is in output-grid
// coordinates (the stitched label tile's own resolution).  The clip quadruple
// says how much of the patch's own output is discarded per side; it includes
// both strategy clipping and boundary trimming, so
//   output_window.w == patch_output - clip_left - clip_right  (same for h).
struct PlanEntry {
    Window input_window;
    Window output_window;
    int clip_left = 0, clip_top = 0, clip_right = 0, clip_bottom = 0;
};

struct TilePlan {
    int tile_w = 0, tile_h = 0;
    int patch_input = 0;   // n: square patch fed to the net
    int patch_output = 0;  // m: the net's output size for n
    int out_w = 0, out_h = 0;  // output-grid size of the whole tile
    int period = 1;            // equivariance period P (input px)
    int out_stride = 1;        // output-grid pitch in input px
    StitchStrategy strategy;
    std::vector<PlanEntry> entries;
};

// Default cap honoring the hardware-memory motivation for patch limits.
inline constexpr int kDefaultPatchCap = 4096;

TilePlan plan(int tile_w, int tile_h, const NetGeometry& geom, int patch_input,
              const StitchStrategy& strategy, int patch_cap = kDefaultPatchCap);

// Per-pixel coverage counts over the output grid (counts saturate at 255).
Raster coverage_map(const TilePlan& plan);

std::string serialize_plan(const TilePlan& plan);
TilePlan parse_plan(const std::string& text);

}  // namespace tileseg
