#include "tileseg/tiler.hpp"

#include <charconv>
#include <sstream>

namespace tileseg {

StitchStrategy StitchStrategy::parse(const std::string& text) {
    auto int_after = [&](size_t pos, size_t end) {
        int v = 0;
        auto [p, ec] = std::from_chars(text.data() + pos, text.data() + end, v);
        if (ec != std::errc{} || p != text.data() + end)
            throw FormatError("bad strategy '" + text + "'");
        return v;
    };
    if (text == "concat") return make_concat();
    if (text.rfind("clip:", 0) == 0) return make_clip(int_after(5, text.size()));
    if (text.rfind("avg:", 0) == 0) {
        auto colon = text.find(':', 4);
        if (colon == std::string::npos) return make_average(int_after(4, text.size()));
        if (text.substr(colon + 1) != "taper")
            throw FormatError("bad strategy '" + text + "' (expected avg:<stride>[:taper])");
        return make_average(int_after(4, colon), AvgWeight::EdgeTaper);
    }
    throw FormatError("bad strategy '" + text + "' (expected concat, clip:<c>, avg:<stride>[:taper])");
}

std::string StitchStrategy::describe() const {
    switch (mode) {
        case StitchMode::Concat: return "concat";
        case StitchMode::Clip: return "clip:" + std::to_string(clip);
        case StitchMode::Average:
            return "avg:" + std::to_string(stride_in) +
                   (weight == AvgWeight::EdgeTaper ? ":taper" : "");
    }
    return "?";
}

namespace {

int ceil_div(int a, int b) { return (a + b - 1) / b; }

struct AxisSeg {
    int o;        // input offset of the patch window
    int full_lo;  // o / sigma: the patch output's origin on the output grid
    int lo, hi;   // kept output interval [lo, hi)
};

// One axis of the grid.  T tile length, M its output length, n/m the patch
// input/output sizes.
std::vector<AxisSeg> plan_axis(int T, int M, int n, int m, int sigma, int P,
                               const StitchStrategy& st) {
    if (n > T) throw PlanError("patch input " + std::to_string(n) + " exceeds tile " +
                               std::to_string(T));
    if (P > T) throw PlanError("equivariance period exceeds tile size");

    const int c = st.mode == StitchMode::Clip ? st.clip : 0;
    const long long nominal =
        st.mode == StitchMode::Average ? st.stride_in : static_cast<long long>(sigma) * (m - 2 * c);
    const int S = static_cast<int>(nominal / P) * P;
    if (S < P)
        throw PlanError("step " + std::to_string(nominal) + " below the alignment period " +
                        std::to_string(P));

    // Aligned offsets 0, S, 2S, ...; the final one is edge-aligned and rounded
    // to the period.  Rounding up (with a reflect overhang) rather than down
    // keeps the rightmost output columns covered when P does not divide T - n.
    const int o_last = ceil_div(T - n, P) * P;
    std::vector<int> offsets;
    for (int o = 0; o < o_last; o += S) offsets.push_back(o);
    offsets.push_back(o_last);

    std::vector<AxisSeg> segs;
    int water = 0;  // next uncovered output index
    for (size_t i = 0; i < offsets.size(); ++i) {
        const int o = offsets[i];
        const int full_lo = o / sigma;
        int lo, hi;
        if (st.mode == StitchMode::Average) {
            lo = full_lo;
            hi = std::min(full_lo + m, M);
            if (full_lo > water)
                throw PlanError("averaging stride leaves an output gap at " +
                                std::to_string(water));
        } else {
            const int c_l = i == 0 ? 0 : c;
            const int c_r = i + 1 == offsets.size() ? 0 : c;
            lo = std::max(water, full_lo + c_l);
            hi = std::min(M, full_lo + m - c_r);
            if (hi <= lo) continue;  // fully shadowed by earlier entries
            if (lo > water)
                throw PlanError("coverage gap at output index " + std::to_string(water));
        }
        segs.push_back({o, full_lo, lo, hi});
        water = std::max(water, hi);
    }
    if (water != M)
        throw PlanError("plan covers only " + std::to_string(water) + " of " + std::to_string(M) +
                        " output rows/columns");
    return segs;
}

}  // namespace

TilePlan plan(int tile_w, int tile_h, const NetGeometry& geom, int patch_input,
              const StitchStrategy& strategy, int patch_cap) {
    if (patch_input < 1) throw PlanError("patch size must be positive");
    if (patch_input > patch_cap)
        throw PlanError("patch " + std::to_string(patch_input) + " exceeds the hardware cap " +
                        std::to_string(patch_cap));

    auto m_opt = geom.try_output_size(patch_input);
    if (!m_opt) throw PlanError("patch size " + std::to_string(patch_input) +
                                " is not a valid input size for this net");
    const int m = *m_opt;
    auto mw = geom.try_output_size(tile_w), mh = geom.try_output_size(tile_h);
    if (!mw || !mh)
        throw PlanError("tile " + std::to_string(tile_w) + "x" + std::to_string(tile_h) +
                        " is not a valid input size for this net");

    switch (strategy.mode) {
        case StitchMode::Concat: break;
        case StitchMode::Clip:
            if (strategy.clip < 0 || 2 * strategy.clip >= m)
                throw PlanError("clip " + std::to_string(strategy.clip) +
                                " leaves no usable output in a " + std::to_string(m) +
                                "-pixel patch output");
            break;
        case StitchMode::Average:
            if (strategy.stride_in < 1) throw PlanError("averaging stride must be positive");
            break;
    }

    TilePlan tp;
    tp.tile_w = tile_w;
    tp.tile_h = tile_h;
    tp.patch_input = patch_input;
    tp.patch_output = m;
    tp.out_w = *mw;
    tp.out_h = *mh;
    tp.period = geom.delta_tot();
    tp.out_stride = geom.out_stride();
    tp.strategy = strategy;

    auto xs = plan_axis(tile_w, tp.out_w, patch_input, m, tp.out_stride, tp.period, strategy);
    auto ys = plan_axis(tile_h, tp.out_h, patch_input, m, tp.out_stride, tp.period, strategy);
    for (const AxisSeg& y : ys)
        for (const AxisSeg& x : xs) {
            PlanEntry e;
            e.input_window = {x.o, y.o, patch_input, patch_input};
            e.output_window = {x.lo, y.lo, x.hi - x.lo, y.hi - y.lo};
            e.clip_left = x.lo - x.full_lo;
            e.clip_top = y.lo - y.full_lo;
            e.clip_right = x.full_lo + m - x.hi;
            e.clip_bottom = y.full_lo + m - y.hi;
            tp.entries.push_back(e);
        }
    return tp;
}

Raster coverage_map(const TilePlan& plan) {
    Raster cov(plan.out_w, plan.out_h, 1, Dtype::U8);
    for (const PlanEntry& e : plan.entries) {
        const Window& w = e.output_window;
        for (int y = w.y0; y < w.y0 + w.h; ++y) {
            uint8_t* row = cov.u8_plane(0) + static_cast<size_t>(y) * plan.out_w;
            for (int x = w.x0; x < w.x0 + w.w; ++x)
                if (row[x] < 255) ++row[x];
        }
    }
    return cov;
}

std::string serialize_plan(const TilePlan& plan) {
    std::ostringstream os;
    os << "PLAN1\n";
    os << "tile " << plan.tile_w << " " << plan.tile_h << "\n";
    os << "patch " << plan.patch_input << " " << plan.patch_output << "\n";
    os << "out " << plan.out_w << " " << plan.out_h << "\n";
    os << "period " << plan.period << "\n";
    os << "outstride " << plan.out_stride << "\n";
    os << "strategy " << plan.strategy.describe() << "\n";
    for (const PlanEntry& e : plan.entries)
        os << "entry " << e.input_window.x0 << " " << e.input_window.y0 << " "
           << e.input_window.w << " " << e.input_window.h << " " << e.output_window.x0 << " "
           << e.output_window.y0 << " " << e.output_window.w << " " << e.output_window.h << " "
           << e.clip_left << " " << e.clip_top << " " << e.clip_right << " " << e.clip_bottom
           << "\n";
    return os.str();
}

TilePlan parse_plan(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != "PLAN1") throw FormatError("plan: bad header");
    TilePlan tp;
    auto expect = [&](const std::string& key, auto&... vals) {
        if (!std::getline(is, line)) throw FormatError("plan: truncated at '" + key + "'");
        std::istringstream ls(line);
        std::string k;
        if (!(ls >> k) || k != key) throw FormatError("plan: expected '" + key + "' line");
        if (!((ls >> vals) && ...)) throw FormatError("plan: bad values in '" + key + "' line");
    };
    expect("tile", tp.tile_w, tp.tile_h);
    expect("patch", tp.patch_input, tp.patch_output);
    expect("out", tp.out_w, tp.out_h);
    expect("period", tp.period);
    expect("outstride", tp.out_stride);
    std::string strat;
    expect("strategy", strat);
    tp.strategy = StitchStrategy::parse(strat);
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string k;
        ls >> k;
        if (k != "entry") throw FormatError("plan: unexpected line '" + line + "'");
        PlanEntry e;
        if (!(ls >> e.input_window.x0 >> e.input_window.y0 >> e.input_window.w >>
              e.input_window.h >> e.output_window.x0 >> e.output_window.y0 >>
              e.output_window.w >> e.output_window.h >> e.clip_left >> e.clip_top >>
              e.clip_right >> e.clip_bottom))
            throw FormatError("plan: bad entry line");
        if (e.input_window.w < 1 || e.output_window.w < 1 || e.output_window.h < 1)
            throw FormatError("plan: degenerate entry");
        tp.entries.push_back(e);
    }
    if (tp.tile_w < 1 || tp.out_w < 1 || tp.period < 1 || tp.out_stride < 1 ||
        tp.patch_input < 1 || tp.entries.empty())
        throw FormatError("plan: missing or invalid fields");
    return tp;
}

}  // namespace tileseg
