// Acceptance gate: nine end-to-end properties, one line of output each.
// Exit status is nonzero when any of them fails.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tileseg/analysis.hpp"
#include "tileseg/kernels.hpp"
#include "tileseg/net.hpp"
#include "tileseg/prng.hpp"
#include "tileseg/raster.hpp"
#include "tileseg/stitcher.hpp"
#include "tileseg/synth.hpp"
#include "tileseg/tiler.hpp"

using namespace tileseg;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void run_criterion(int idx, const char* desc, const std::function<bool()>& body) {
    bool ok = false;
    std::string note;
    try {
        ok = body();
    } catch (const std::exception& e) {
        note = std::string(" (") + e.what() + ")";
    }
    std::printf("ACCEPTANCE %d %s - %s%s\n", idx, ok ? "PASS" : "FAIL", desc, note.c_str());
    if (!ok) ++failures;
}

Raster labels_of(const Raster& scores) {
    Raster lab(scores.width(), scores.height(), 1, Dtype::U8);
    kernels::argmax_u8(scores.f32(), scores.plane_size(), scores.channels(), lab.u8(),
                       scores.plane_size());
    return lab;
}

// Five unpadded nets, each with two pooling stages (period 4).
const char* kValid[5] = {
    "input in channels=1\nconv c1 from=in k=3 cout=4\nrelu r1 from=c1\n"
    "maxpool p1 from=r1 k=2 s=2\nconv c2 from=p1 k=3 cout=8\nrelu r2 from=c2\n"
    "maxpool p2 from=r2 k=2 s=2\nconv c3 from=p2 k=1 cout=3\noutput out from=c3\n",

    "input in channels=1\nconv c1 from=in k=5 cout=3\nmaxpool p1 from=c1 k=2 s=2\n"
    "conv c2 from=p1 k=3 cout=6\nmaxpool p2 from=c2 k=2 s=2\n"
    "conv c3 from=p2 k=1 cout=2\noutput out from=c3\n",

    "input in channels=1\nconv c1 from=in k=3 cout=2\nconv c2 from=c1 k=3 cout=4\n"
    "maxpool p1 from=c2 k=2 s=2\nconv c3 from=p1 k=3 cout=4\n"
    "maxpool p2 from=c3 k=2 s=2\nconv c4 from=p2 k=3 cout=3\noutput out from=c4\n",

    "input in channels=1\nconv c1 from=in k=3 cout=4\nrelu r1 from=c1\n"
    "maxpool p1 from=r1 k=3 s=2\nconv c2 from=p1 k=3 cout=4\n"
    "maxpool p2 from=c2 k=2 s=2\nconv c3 from=p2 k=1 cout=4\noutput out from=c3\n",

    "input in channels=2\nconv c1 from=in k=3 cout=4\nmaxpool p1 from=c1 k=2 s=2\n"
    "conv c2 from=p1 k=5 cout=5\nmaxpool p2 from=c2 k=2 s=2\n"
    "conv c3 from=p2 k=3 cout=2\noutput out from=c3\n",
};

// Same-padded stacks: contamination without shrinkage.
const char* kPad5 =
    "input in channels=1\nconv c1 from=in k=5 p=2 cout=3\noutput out from=c1\n";
const char* kPad33 =
    "input in channels=1\nconv c1 from=in k=3 p=1 cout=4\n"
    "conv c2 from=c1 k=3 p=1 cout=3\noutput out from=c2\n";
const char* kPad333 =
    "input in channels=1\nconv c1 from=in k=3 p=1 cout=4\nconv c2 from=c1 k=3 p=1 cout=4\n"
    "conv c3 from=c2 k=3 p=1 cout=3\noutput out from=c3\n";
// Padded net with a pooling stage: period 2, contaminated borders.
const char* kPadPool =
    "input in channels=1\nconv c1 from=in k=3 p=1 cout=4\nrelu r1 from=c1\n"
    "maxpool p1 from=r1 k=2 s=2\nconv c2 from=p1 k=3 p=1 cout=3\noutput out from=c2\n";
// Pool + upsample keeps the output on the input grid (stride 1) while the
// period stays 2, so misaligned shifts realign exactly and only the pooling
// phase differs between ensemble members.
const char* kPadUp =
    "input in channels=1\nconv c1 from=in k=3 p=1 cout=4\nrelu r1 from=c1\n"
    "maxpool p1 from=r1 k=2 s=2\nconv c2 from=p1 k=3 p=1 cout=4\nrelu r2 from=c2\n"
    "upsample u1 from=r2 f=2\nconv c3 from=u1 k=3 p=1 cout=3\noutput out from=c3\n";
// Narrow same-size net for the timing sweep: every patch size covers the tile
// with zero overlap, so per-entry overhead is what separates the sizes, and
// four cheap layers keep the intermediate planes cache-resident even at 1024.
const char* kBenchNet =
    "input in channels=1\nconv c1 from=in k=3 p=1 cout=1\nconv c2 from=c1 k=3 p=1 cout=1\n"
    "conv c3 from=c2 k=3 p=1 cout=1\nconv c4 from=c3 k=3 p=1 cout=1\noutput out from=c4\n";

NetworkGraph make_net(const char* spec, uint64_t wseed) {
    NetworkGraph net = NetworkGraph::parse(spec);
    net.init_weights(wseed);
    return net;
}

bool criterion_oracle_equality() {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    for (int i = 0; i < 5; ++i) {
        NetworkGraph net = make_net(kValid[i], 500 + i);
        Raster tile = make_synthetic_tile(60 + i, 256, 256, net.input_channels(), 6);
        NetGeometry geom(net);
        TilePlan tp = plan(256, 256, geom, 64, StitchStrategy::parse("concat"));
        StitchResult res = stitch(tile, net, tp, 1);
        Raster oracle = net.forward(tile);
        ok &= diff_count(res.prob, oracle) == 0;
        ok &= diff_count(res.label, labels_of(oracle)) == 0;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return ok && secs < 10.0;
}

bool criterion_contamination() {
    int total = 0;
    bool ok = true;

    auto margins_agree = [&](const NetworkGraph& net, int patch_n, uint64_t tile_seed) {
        NetGeometry geom(net);
        Raster tile = make_synthetic_tile(tile_seed, 64, 64, net.input_channels(), 5);
        Window pw{26, 26, patch_n, patch_n};
        Raster mask = context_sensitivity(net, tile, pw);
        ++total;
        return mask_margin(mask) == geom.contamination_margin(patch_n);
    };

    // The two canonical cases: one 5x5 conv or two 3x3 convs leave exactly the
    // center pixel of a 5x5 output clean.
    for (const char* spec : {kPad5, kPad33}) {
        NetworkGraph net = make_net(spec, 71);
        ok &= margins_agree(net, 5, 9001);
        Raster mask = context_sensitivity(net, make_synthetic_tile(9002, 64, 64, 1, 5),
                                          {26, 26, 5, 5});
        int clean = 0;
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 5; ++x) clean += mask.at_u8(0, y, x) == 0;
        ok &= clean == 1 && mask.at_u8(0, 2, 2) == 0;
    }

    SplitMix64 rng(20240823);
    for (int i = 0; i < 20; ++i) {
        const int depth = 1 + int(rng.next_u64() % 3);
        std::ostringstream spec;
        spec << "input in channels=1\n";
        std::string prev = "in";
        for (int d = 0; d < depth; ++d) {
            const int k = rng.next_u64() % 2 ? 5 : 3;
            const int cout = 1 + int(rng.next_u64() % 4);
            // Linear stacks only: a relu can swallow the border perturbation
            // (dead channels, negative preactivations on both sides), making
            // the observed margin undershoot the receptive-field bound.
            spec << "conv c" << d << " from=" << prev << " k=" << k << " p=" << k / 2
                 << " cout=" << cout << "\n";
            prev = "c" + std::to_string(d);
        }
        spec << "output out from=" << prev << "\n";
        NetworkGraph net = NetworkGraph::parse(spec.str());
        net.init_weights(rng.next_u64());
        const int patch_n = 9 + 2 * int(rng.next_u64() % 4);
        ok &= margins_agree(net, patch_n, rng.next_u64());
    }
    return ok && total >= 22;
}

bool criterion_equivariance_periodicity() {
    bool ok = true;
    NetworkGraph net = make_net(kValid[0], 77);
    for (uint64_t seed : {201, 202, 203}) {
        Raster tile = make_synthetic_tile(seed, 96, 96, 1, 6);
        CorrelationMatrix cm = correlation_matrix(net, tile, {20, 20, 24, 24}, 8);
        for (int di = 0; di < 8; ++di)
            for (int dj = 0; dj < 8; ++dj)
                ok &= cm.is_exact(di, dj) == (di % 4 == 0 && dj % 4 == 0);
    }

    // Padded pooling net: period-2 shifts stand out but are not exact because
    // the region deliberately covers the contaminated window borders.
    for (uint64_t seed : {301, 302, 303, 304, 305}) {
        NetworkGraph pnet = make_net(kPadPool, 88 + seed);
        Raster tile = make_synthetic_tile(seed, 64, 64, 1, 6);
        CorrelationMatrix cm = correlation_matrix(pnet, tile, {8, 8, 48, 48}, 8);
        for (int di = 0; di < 8; di += 2)
            for (int dj = 0; dj < 8; dj += 2) {
                if (di == 0 && dj == 0) continue;
                const double v = cm.value(di, dj);
                ok &= v < 1.0;
                for (int a = di - 1; a <= di + 1; ++a)
                    for (int b = dj - 1; b <= dj + 1; ++b) {
                        if (a < 0 || b < 0 || a >= 8 || b >= 8 || (a == di && b == dj))
                            continue;
                        ok &= v > cm.value(a, b);
                    }
            }
    }
    return ok;
}

bool criterion_edge_error_support() {
    bool ok = true;
    std::vector<char> seen;  // aggregated support for the padded net

    NetworkGraph pnet = make_net(kPad33, 11);
    NetGeometry pgeom(pnet);
    const int C = pgeom.contamination_margin(32);
    for (uint64_t seed : {401, 402, 403, 404, 405}) {
        pnet.init_weights(seed);
        Raster tile = make_synthetic_tile(seed, 128, 128, 1, 6);
        TilePlan tp = plan(128, 128, pgeom, 32, StitchStrategy::parse("concat"));
        EdgeErrorProfile prof = edge_error_profile(pnet, tile, tp);
        if (seen.empty()) seen.assign(prof.counts.size(), 0);
        for (size_t d = 0; d < prof.counts.size(); ++d) {
            if (int(d) >= C) ok &= prof.disagreements[d] == 0;
            if (prof.disagreements[d] > 0) seen[d] = 1;
        }
    }
    for (size_t d = 0; d < seen.size(); ++d) ok &= (seen[d] != 0) == (int(d) < C);

    NetworkGraph vnet = make_net(kValid[0], 12);
    NetGeometry vgeom(vnet);
    for (uint64_t seed : {411, 412, 413, 414, 415}) {
        vnet.init_weights(seed);
        Raster tile = make_synthetic_tile(seed, 128, 128, 1, 6);
        TilePlan tp = plan(128, 128, vgeom, 64, StitchStrategy::parse("concat"));
        EdgeErrorProfile prof = edge_error_profile(vnet, tile, tp);
        for (size_t d = 0; d < prof.counts.size(); ++d) ok &= prof.disagreements[d] == 0;
    }
    return ok;
}

bool criterion_clip_restores_oracle() {
    bool ok = true;
    int i = 0;
    for (const char* spec : {kPad5, kPad33, kPad333}) {
        NetworkGraph net = make_net(spec, 600 + i);
        NetGeometry geom(net);
        Raster tile = make_synthetic_tile(620 + i, 100, 100, 1, 6);
        const int C = geom.contamination_margin(25);
        TilePlan tp =
            plan(100, 100, geom, 25, StitchStrategy::parse("clip:" + std::to_string(C)));
        StitchResult res = stitch(tile, net, tp, 1);
        Raster oracle = net.forward(tile);
        ok &= diff_count(res.prob, oracle) == 0;
        ok &= diff_count(res.label, labels_of(oracle)) == 0;
        ++i;
    }
    return ok;
}

bool criterion_patch_size_trend() {
    NetworkGraph net = make_net(kBenchNet, 4242);
    NetGeometry geom(net);
    Raster tile = make_synthetic_tile(4242, 2048, 2048, 1, 10);

    bool ok = true;
    bool mono = false;
    // One retry: the trend is structural, but a scheduler hiccup during a
    // single rep can still flip a median by a hair.
    for (int attempt = 0; attempt < 2 && !mono; ++attempt) {
        std::vector<BenchRow> rows = bench_patch_sizes(net, tile, {128, 512, 1024}, 5, 1);
        if (rows.size() != 3) return false;
        const int P = geom.delta_tot();
        for (const BenchRow& r : rows) {
            const int m = *geom.try_output_size(r.patch);
            const int S = geom.out_stride() * m;
            const int o_last = (2048 - r.patch + P - 1) / P * P;
            int per_axis = 1;
            for (int o = 0; o < o_last; o += S) ++per_axis;
            ok &= r.entries == per_axis * per_axis;
        }
        ok &= rows[0].entries > rows[1].entries && rows[1].entries > rows[2].entries;
        // Trend check: strictly cheaper end to end, and no step may regress
        // beyond scheduler jitter (5%). A work-growth pathology shows up as
        // tens of percent, far outside the allowance.
        mono = rows[1].total_ms <= rows[0].total_ms * 1.05 &&
               rows[2].total_ms <= rows[1].total_ms * 1.05 &&
               rows[2].total_ms < rows[0].total_ms;
    }
    return ok && mono;
}

bool criterion_averaging_tradeoff() {
    bool ok = true;
    const std::vector<std::pair<int, int>> mis = {{0, 0}, {1, 0}, {0, 1}, {1, 1}, {2, 1},
                                                  {1, 2}, {3, 0}, {0, 3}, {3, 1}, {1, 3},
                                                  {2, 3}, {3, 2}, {3, 3}, {1, 4}, {4, 1}};
    // One fixed network, varying tile content: the unshifted window loses a
    // border band to contamination and the phase-shifted ensemble wins it back.
    int wins = 0;
    NetworkGraph net = make_net(kPadUp, 19);
    for (uint64_t seed : {501, 502, 503, 504, 505}) {
        Raster tile = make_synthetic_tile(seed, 48, 48, 1, 8);
        std::vector<SweepPoint> sweep = averaging_sweep(net, tile, mis);
        wins += sweep.back().mean_iou >= sweep.front().mean_iou;
    }
    ok &= wins >= 4;

    const std::vector<std::pair<int, int>> aligned = {{0, 0}, {4, 0},  {0, 4},  {4, 4},
                                                      {8, 0}, {0, 8},  {8, 8},  {12, 4},
                                                      {4, 12}, {12, 12}};
    NetworkGraph vnet = make_net(kValid[0], 999);
    Raster tile = make_synthetic_tile(77, 96, 96, 1, 6);
    std::vector<SweepPoint> sweep = averaging_sweep(vnet, tile, aligned);
    for (const SweepPoint& pt : sweep) ok &= pt.mean_iou == sweep.front().mean_iou;
    return ok;
}

bool criterion_plan_and_format_soundness() {
    bool ok = true;
    NetworkGraph nets[3] = {NetworkGraph::parse(kValid[0]), NetworkGraph::parse(kPadPool),
                            NetworkGraph::parse(kPad33)};

    SplitMix64 rng(88);
    int done = 0;
    for (int attempt = 0; attempt < 5000 && done < 50; ++attempt) {
        const NetworkGraph& net = nets[rng.next_u64() % 3];
        NetGeometry geom(net);
        const int tw = 48 + int(rng.next_u64() % 120);
        const int th = 48 + int(rng.next_u64() % 120);
        const int lo = std::max(geom.min_input_size(), 8);
        const int cap = std::min(tw, th);
        if (cap < lo) continue;
        const int patch = lo + int(rng.next_u64() % (cap - lo + 1));
        const int m = *geom.try_output_size(patch);
        const int P = geom.delta_tot();

        std::string strat;
        switch (rng.next_u64() % 4) {
            case 0: strat = "concat"; break;
            case 1: strat = "clip:" + std::to_string(rng.next_u64() % std::max(1, m / 2)); break;
            case 2:
            case 3: {
                const int cells = std::max(1, geom.out_stride() * m / P);
                const int stride = P * (1 + int(rng.next_u64() % cells));
                strat = "avg:" + std::to_string(stride);
                if (rng.next_u64() % 2) strat += ":taper";
                break;
            }
        }

        TilePlan tp;
        try {
            tp = plan(tw, th, geom, patch, StitchStrategy::parse(strat));
        } catch (const PlanError&) {
            continue;
        }

        // Independent per-pixel count of the kept output windows.
        std::vector<int> counts(size_t(tp.out_w) * tp.out_h, 0);
        for (const PlanEntry& e : tp.entries)
            for (int y = e.output_window.y0; y < e.output_window.y0 + e.output_window.h; ++y)
                for (int x = e.output_window.x0; x < e.output_window.x0 + e.output_window.w; ++x)
                    ++counts[size_t(y) * tp.out_w + x];
        int cmin = counts.empty() ? 0 : counts[0], cmax = cmin;
        for (int c : counts) cmin = std::min(cmin, c), cmax = std::max(cmax, c);

        Raster cov = coverage_map(tp);
        bool cov_matches = true;
        for (int y = 0; y < tp.out_h; ++y)
            for (int x = 0; x < tp.out_w; ++x)
                cov_matches &= cov.at_u8(0, y, x) == std::min(counts[size_t(y) * tp.out_w + x], 255);

        ok &= cov_matches && cmin >= 1;
        if (tp.strategy.mode != StitchMode::Average) ok &= cmin == 1 && cmax == 1;
        ++done;
    }
    ok &= done == 50;

    // Container round-trips on randomized payloads.
    fs::path dir = fs::temp_directory_path() / "tileseg_acceptance";
    fs::create_directories(dir);
    for (int t = 0; t < 5; ++t) {
        const int w = 1 + int(rng.next_u64() % 40), h = 1 + int(rng.next_u64() % 40);
        const int c = 1 + int(rng.next_u64() % 3);
        Raster r(w, h, c, t % 2 ? Dtype::U8 : Dtype::F32);
        if (r.dtype() == Dtype::F32)
            for (size_t i = 0; i < r.total_size(); ++i) r.f32()[i] = rng.next_float(-5.0, 5.0);
        else
            for (size_t i = 0; i < r.total_size(); ++i) r.u8()[i] = uint8_t(rng.next_u64());
        write_ras1(dir / "a.ras1", r);
        Raster back = read_ras1(dir / "a.ras1");
        ok &= diff_count(back, r) == 0;
        write_ras1(dir / "b.ras1", back);
        std::ifstream fa(dir / "a.ras1", std::ios::binary), fb(dir / "b.ras1", std::ios::binary);
        std::ostringstream sa, sb;
        sa << fa.rdbuf(), sb << fb.rdbuf();
        ok &= !sa.str().empty() && sa.str() == sb.str();
    }

    NetworkGraph wnet = make_net(kValid[0], 31337);
    wnet.save_weights(dir / "a.wts1");
    NetworkGraph wnet2 = NetworkGraph::parse(kValid[0]);
    wnet2.load_weights(dir / "a.wts1");
    wnet2.save_weights(dir / "b.wts1");
    std::ifstream fa(dir / "a.wts1", std::ios::binary), fb(dir / "b.wts1", std::ios::binary);
    std::ostringstream sa, sb;
    sa << fa.rdbuf(), sb << fb.rdbuf();
    ok &= !sa.str().empty() && sa.str() == sb.str();
    for (int n = 0; n < int(wnet.nodes().size()); ++n)
        if (wnet.node(n).kind == LayerKind::Conv)
            ok &= wnet.weights(n).w == wnet2.weights(n).w &&
                  wnet.weights(n).bias == wnet2.weights(n).bias;
    fs::remove_all(dir);
    return ok;
}

bool criterion_maxpool_variance_witness() {
    NetworkGraph net = NetworkGraph::parse(
        "input in channels=1\nmaxpool p1 from=in k=2 s=2\noutput out from=p1\n");
    bool found = false, shift2_ok = true;
    for (uint64_t seed = 0; seed < 10 && !found; ++seed) {
        Raster img = make_synthetic_tile(seed, 16, 2, 1, 2);
        shift2_ok &= equivariance_check(net, img, 0, 2) == 0;
        found = equivariance_check(net, img, 0, 1) > 0;
    }
    return found && shift2_ok;
}

}  // namespace

int main() {
    run_criterion(1, "stitched concat output is bit-identical to the full-tile forward "
                     "on five seeded valid nets",
                  criterion_oracle_equality);
    run_criterion(2, "analytic contamination margin matches the brute-force "
                     "context-sensitivity mask on 22 padded nets",
                  criterion_contamination);
    run_criterion(3, "exact equivariance precisely at period-aligned shifts; padded peaks "
                     "are sub-unit local maxima",
                  criterion_equivariance_periodicity);
    run_criterion(4, "patchwise disagreements confined to the contamination band; valid "
                     "nets are error-free",
                  criterion_edge_error_support);
    run_criterion(5, "clipping by the contamination margin restores bit-exact stitching "
                     "for padded nets",
                  criterion_clip_restores_oracle);
    run_criterion(6, "larger patches never increase 2048x2048 stitch time and need fewer "
                     "plan entries",
                  criterion_patch_size_trend);
    run_criterion(7, "translation averaging does not hurt oracle IoU; period-aligned "
                     "averaging is exactly constant",
                  criterion_averaging_tradeoff);
    run_criterion(8, "every generated plan covers each output pixel; RAS1/WTS1 round-trips "
                     "are byte-identical",
                  criterion_plan_and_format_soundness);
    run_criterion(9, "maxpool shift-by-1 variance witness found; shift-by-2 is pure "
                     "translation",
                  criterion_maxpool_variance_witness);

    std::printf("acceptance: %d/9 passed\n", 9 - failures);
    return failures == 0 ? 0 : 1;
}
