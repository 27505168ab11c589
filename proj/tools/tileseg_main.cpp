// tileseg: plan patch grids over large rasters, run the built-in network
// patch-by-patch, stitch the results, and measure how stitching behaves
// against the full-image forward pass.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tileseg/analysis.hpp"
#include "tileseg/kernels.hpp"
#include "tileseg/net.hpp"
#include "tileseg/raster.hpp"
#include "tileseg/stitcher.hpp"
#include "tileseg/synth.hpp"
#include "tileseg/tiler.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tileseg;

namespace {

constexpr const char* kVersion = "tileseg 1.0.0";

struct CommonOpts {
    std::string net_path;
    std::string weights_path;
    std::optional<uint64_t> seed;
    std::string tile_path;
    std::string out_dir = ".";
    std::string strategy = "concat";
    int patch = 0;
    int workers = 1;
    int patch_cap = kDefaultPatchCap;
    std::string kernels;
};

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw FormatError("cannot open " + p.string());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw FormatError("cannot open " + p.string() + " for writing");
    os << text;
    if (!os) throw FormatError("write failed for " + p.string());
}

void apply_kernels_flag(const std::string& flag) {
    if (flag.empty()) return;
    if (flag == "scalar")
        kernels::set_active_isa(kernels::Isa::Scalar);
    else if (flag == "avx2")
        kernels::set_active_isa(kernels::Isa::Avx2);
    else
        throw Error("unknown kernel set '" + flag + "' (expected scalar or avx2)");
}

NetworkGraph load_net(const CommonOpts& o, bool want_weights, json& manifest) {
    NetworkGraph net = NetworkGraph::parse(slurp(o.net_path));
    manifest["net"] = o.net_path;
    if (!want_weights) return net;
    if (o.seed && !o.weights_path.empty())
        throw CLI::ValidationError("--seed and --weights are mutually exclusive");
    if (o.seed) {
        net.init_weights(*o.seed);
        manifest["seed"] = *o.seed;
    } else if (!o.weights_path.empty()) {
        net.load_weights(o.weights_path);
        manifest["weights"] = o.weights_path;
    } else {
        throw CLI::ValidationError("need --weights <wts1> or --seed <u64>");
    }
    return net;
}

Raster load_tile(const CommonOpts& o, json& manifest) {
    if (o.tile_path.empty()) throw CLI::ValidationError("need --tile <ras1>");
    manifest["tile"] = o.tile_path;
    return read_ras1(o.tile_path);
}

fs::path ensure_out(const CommonOpts& o) {
    fs::path dir(o.out_dir);
    fs::create_directories(dir);
    return dir;
}

void write_manifest(const fs::path& dir, json& manifest) {
    manifest["version"] = kVersion;
    manifest["kernels"] = kernels::isa_name(kernels::active_isa());
    spit(dir / "manifest.json", manifest.dump(2) + "\n");
}

// Labels spread over the 0..255 ramp so single-digit class ids are visible.
Raster label_view(const Raster& labels, int classes) {
    Raster v(labels.width(), labels.height(), 1, Dtype::U8);
    const int denom = std::max(classes - 1, 1);
    for (size_t i = 0; i < labels.total_size(); ++i)
        v.u8()[i] = uint8_t(int(labels.u8()[i]) * 255 / denom);
    return v;
}

json plan_summary(const TilePlan& tp) {
    return {{"tile", {tp.tile_w, tp.tile_h}},
            {"patch_input", tp.patch_input},
            {"patch_output", tp.patch_output},
            {"out", {tp.out_w, tp.out_h}},
            {"period", tp.period},
            {"out_stride", tp.out_stride},
            {"strategy", tp.strategy.describe()},
            {"entries", tp.entries.size()}};
}

// ---- subcommands ----------------------------------------------------------

int cmd_geom(const CommonOpts& o, int probe_override) {
    json manifest{{"command", "geom"}};
    NetworkGraph net = load_net(o, false, manifest);
    NetGeometry geom(net);
    const int probe = probe_override > 0 ? probe_override : geom.linear_probe_size();
    manifest["probe_input"] = probe;

    std::ostringstream rep;
    rep << "net: " << o.net_path << "\n";
    rep << "probe input size: " << probe << "\n\n";
    rep << "node            kind        out_size   cum_stride\n";
    const int out_sz = geom.output_size(probe);
    // Per-node sizes via a local walk (same arithmetic forward() uses).
    {
        std::vector<int> sizes(net.nodes().size());
        for (size_t i = 0; i < net.nodes().size(); ++i) {
            const LayerNode& n = net.nodes()[i];
            int s = 0;
            switch (n.kind) {
                case LayerKind::Input: s = probe; break;
                case LayerKind::Conv:
                    s = kernels::conv_out_size(sizes[n.parents[0]], n.k, n.stride, n.pad, n.dil);
                    break;
                case LayerKind::Relu: s = sizes[n.parents[0]]; break;
                case LayerKind::MaxPool:
                    s = kernels::pool_out_size(sizes[n.parents[0]], n.k, n.stride);
                    break;
                case LayerKind::Upsample: s = sizes[n.parents[0]] * n.factor; break;
                case LayerKind::CropConcat: s = sizes[n.parents[1]]; break;
                case LayerKind::Output: s = sizes[n.parents[0]]; break;
            }
            if (s < 1)
                throw GeometryError("node '" + n.name + "': output size underflows at input size " +
                                    std::to_string(probe));
            sizes[i] = s;
            char line[128];
            std::snprintf(line, sizeof line, "%-15s %-11s %6d %12d\n", n.name.c_str(),
                          layer_kind_name(n.kind), s, geom.cumulative_strides()[i]);
            rep << line;
        }
    }
    rep << "\n";
    rep << "output size:          " << out_sz << "\n";
    rep << "delta_tot (period P): " << geom.delta_tot() << "\n";
    rep << "output stride:        " << geom.out_stride() << "\n";
    rep << "margin_in per side:   " << geom.margin_in() << "\n";
    rep << "contamination margin: " << geom.contamination_margin(probe) << " output px per side\n";
    rep << "min valid input:      " << geom.min_input_size() << "\n";
    rep << "size arithmetic:      output(n) = (n - " << 2 * geom.margin_in() << ") / "
        << geom.out_stride() << " on the linear range (probe " << geom.linear_probe_size()
        << ")\n";

    std::cout << rep.str();
    fs::path dir = ensure_out(o);
    spit(dir / "geom.txt", rep.str());
    manifest["delta_tot"] = geom.delta_tot();
    manifest["out_stride"] = geom.out_stride();
    manifest["margin_in"] = geom.margin_in();
    manifest["contamination_margin"] = geom.contamination_margin(probe);
    manifest["outputs"] = {"geom.txt"};
    write_manifest(dir, manifest);
    return 0;
}

int cmd_synth(const CommonOpts& o, uint64_t seed, int w, int h, int channels, int rects) {
    json manifest{{"command", "synth"},
                  {"seed", seed},
                  {"width", w},
                  {"height", h},
                  {"channels", channels},
                  {"rects", rects}};
    Raster tile = make_synthetic_tile(seed, w, h, channels, rects);
    fs::path dir = ensure_out(o);
    write_ras1(dir / "tile.ras1", tile);
    manifest["outputs"] = {"tile.ras1"};
    write_manifest(dir, manifest);
    std::cout << "wrote " << (dir / "tile.ras1").string() << " (" << w << "x" << h << "x"
              << channels << ")\n";
    return 0;
}

int cmd_stitch(const CommonOpts& o, const std::string& plan_path) {
    json manifest{{"command", "stitch"}};
    NetworkGraph net = load_net(o, true, manifest);
    Raster tile = load_tile(o, manifest);
    NetGeometry geom(net);

    TilePlan tp;
    if (!plan_path.empty()) {
        tp = parse_plan(slurp(plan_path));
        manifest["plan"] = plan_path;
    } else {
        if (o.patch < 1) throw CLI::ValidationError("need --patch <n> (or --plan)");
        tp = plan(tile.width(), tile.height(), geom, o.patch, StitchStrategy::parse(o.strategy),
                  o.patch_cap);
    }
    manifest["strategy"] = tp.strategy.describe();
    manifest["workers"] = o.workers;
    manifest["plan_summary"] = plan_summary(tp);

    StitchResult res = stitch(tile, net, tp, o.workers);
    fs::path dir = ensure_out(o);
    write_ras1(dir / "label.ras1", res.label);
    write_ras1(dir / "prob.ras1", res.prob);
    write_pgm(dir / "label.pgm", label_view(res.label, net.num_classes()));
    spit(dir / "timing.txt", res.timing.to_kv());
    spit(dir / "plan.txt", serialize_plan(tp));
    manifest["outputs"] = {"label.ras1", "prob.ras1", "label.pgm", "timing.txt", "plan.txt"};
    write_manifest(dir, manifest);
    std::cout << res.timing.to_kv();
    return 0;
}

int cmd_oracle(const CommonOpts& o) {
    json manifest{{"command", "oracle"}};
    NetworkGraph net = load_net(o, true, manifest);
    Raster tile = load_tile(o, manifest);
    Raster scores = net.forward(tile);
    Raster labels(scores.width(), scores.height(), 1, Dtype::U8);
    kernels::argmax_u8(scores.f32(), scores.plane_size(), scores.channels(), labels.u8(),
                       scores.plane_size());
    fs::path dir = ensure_out(o);
    write_ras1(dir / "oracle_label.ras1", labels);
    write_ras1(dir / "oracle_prob.ras1", scores);
    write_pgm(dir / "oracle_label.pgm", label_view(labels, net.num_classes()));
    manifest["outputs"] = {"oracle_label.ras1", "oracle_prob.ras1", "oracle_label.pgm"};
    write_manifest(dir, manifest);
    std::cout << "oracle output " << scores.width() << "x" << scores.height() << ", "
              << scores.channels() << " classes\n";
    return 0;
}

int cmd_corr(const CommonOpts& o, int max_shift, std::string region_text) {
    json manifest{{"command", "corr"}, {"max_shift", max_shift}};
    NetworkGraph net = load_net(o, true, manifest);
    Raster tile = load_tile(o, manifest);

    Window region;
    if (!region_text.empty()) {
        int x0, y0, w, h;
        if (std::sscanf(region_text.c_str(), "%d,%d,%d,%d", &x0, &y0, &w, &h) != 4)
            throw CLI::ValidationError("--region expects x0,y0,w,h");
        region = {x0, y0, w, h};
    } else {
        // Default: a centered probe region, shrunk to fit small tiles.
        int side = std::min({100, tile.width() / 2, tile.height() / 2});
        region = {(tile.width() - side) / 2, (tile.height() - side) / 2, side, side};
    }
    manifest["region"] = {region.x0, region.y0, region.w, region.h};
    manifest["reference_shift"] = {0, 0};  // correlations are against the (0,0) run

    CorrelationMatrix cm = correlation_matrix(net, tile, region, max_shift);

    std::ostringstream csv;
    csv << "di,dj,pearson,defined,exact\n";
    for (int di = 0; di < max_shift; ++di)
        for (int dj = 0; dj < max_shift; ++dj)
            csv << di << "," << dj << "," << cm.value(di, dj) << ","
                << (cm.is_defined(di, dj) ? 1 : 0) << "," << (cm.is_exact(di, dj) ? 1 : 0)
                << "\n";
    Raster heat(max_shift, max_shift, 1, Dtype::U8);
    for (int di = 0; di < max_shift; ++di)
        for (int dj = 0; dj < max_shift; ++dj) {
            double v = (cm.value(di, dj) + 1.0) / 2.0;
            heat.at_u8(0, di, dj) = uint8_t(std::clamp(int(v * 255.0 + 0.5), 0, 255));
        }

    fs::path dir = ensure_out(o);
    spit(dir / "corr.csv", csv.str());
    write_pgm(dir / "corr.pgm", heat);
    manifest["outputs"] = {"corr.csv", "corr.pgm"};
    write_manifest(dir, manifest);
    std::cout << "wrote " << (dir / "corr.csv").string() << "\n";
    return 0;
}

int cmd_edge_profile(const CommonOpts& o) {
    json manifest{{"command", "edge-profile"}};
    NetworkGraph net = load_net(o, true, manifest);
    Raster tile = load_tile(o, manifest);
    if (o.patch < 1) throw CLI::ValidationError("need --patch <n>");
    NetGeometry geom(net);
    TilePlan tp = plan(tile.width(), tile.height(), geom, o.patch,
                       StitchStrategy::parse(o.strategy), o.patch_cap);
    manifest["plan_summary"] = plan_summary(tp);

    EdgeErrorProfile prof = edge_error_profile(net, tile, tp);
    std::ostringstream csv;
    csv << "distance,count,disagreements,rate\n";
    for (size_t d = 0; d < prof.counts.size(); ++d) {
        csv << d << "," << prof.counts[d] << "," << prof.disagreements[d] << ",";
        if (prof.counts[d])
            csv << double(prof.disagreements[d]) / double(prof.counts[d]);
        csv << "\n";
    }
    fs::path dir = ensure_out(o);
    spit(dir / "edge_profile.csv", csv.str());
    manifest["outputs"] = {"edge_profile.csv"};
    write_manifest(dir, manifest);
    std::cout << "wrote " << (dir / "edge_profile.csv").string() << "\n";
    return 0;
}

int cmd_avg_sweep(const CommonOpts& o, const std::string& shifts_text) {
    json manifest{{"command", "avg-sweep"}, {"shifts", shifts_text}};
    NetworkGraph net = load_net(o, true, manifest);
    Raster tile = load_tile(o, manifest);

    std::vector<std::pair<int, int>> shifts;
    std::istringstream ss(shifts_text);
    std::string item;
    while (std::getline(ss, item, ';')) {
        int di, dj;
        if (std::sscanf(item.c_str(), "%d,%d", &di, &dj) != 2)
            throw CLI::ValidationError("--shifts expects di,dj;di,dj;...");
        shifts.emplace_back(di, dj);
    }
    if (shifts.empty()) throw CLI::ValidationError("--shifts expects di,dj;di,dj;...");

    auto sweep = averaging_sweep(net, tile, shifts);
    std::ostringstream csv;
    csv << "count,di,dj,mean_iou";
    for (int c = 0; c < net.num_classes(); ++c) csv << ",iou_class" << c;
    csv << "\n";
    for (const SweepPoint& pt : sweep) {
        csv << pt.count << "," << pt.di << "," << pt.dj << "," << pt.mean_iou;
        for (double v : pt.class_iou) csv << "," << v;
        csv << "\n";
    }
    fs::path dir = ensure_out(o);
    spit(dir / "avg_sweep.csv", csv.str());
    manifest["outputs"] = {"avg_sweep.csv"};
    write_manifest(dir, manifest);
    std::cout << "wrote " << (dir / "avg_sweep.csv").string() << "\n";
    return 0;
}

int cmd_bench(const CommonOpts& o, const std::string& sizes_text, int reps) {
    json manifest{{"command", "bench"}, {"sizes", sizes_text}, {"reps", reps}};
    NetworkGraph net = load_net(o, true, manifest);
    Raster tile = load_tile(o, manifest);

    std::vector<int> sizes;
    std::istringstream ss(sizes_text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        int v;
        if (std::sscanf(item.c_str(), "%d", &v) != 1 || v < 1)
            throw CLI::ValidationError("--sizes expects a comma list of positive sizes");
        sizes.push_back(v);
    }
    if (sizes.empty()) throw CLI::ValidationError("--sizes expects a comma list");

    auto rows = bench_patch_sizes(net, tile, sizes, reps, o.workers);
    std::ostringstream csv;
    csv << "patch,entries,total_ms,forward_ms,handling_ms\n";
    for (const BenchRow& r : rows)
        csv << r.patch << "," << r.entries << "," << r.total_ms << "," << r.forward_ms << ","
            << r.handling_ms << "\n";
    fs::path dir = ensure_out(o);
    spit(dir / "bench.csv", csv.str());
    manifest["workers"] = o.workers;
    manifest["outputs"] = {"bench.csv"};
    write_manifest(dir, manifest);
    std::cout << csv.str();
    return 0;
}

int cmd_plan_only(const CommonOpts& o, int tile_w, int tile_h) {
    json manifest{{"command", "plan"}};
    NetworkGraph net = load_net(o, false, manifest);
    NetGeometry geom(net);
    int tw = tile_w, th = tile_h;
    if (!o.tile_path.empty()) {
        Raster tile = load_tile(o, manifest);
        tw = tile.width();
        th = tile.height();
    }
    if (tw < 1 || th < 1)
        throw CLI::ValidationError("need --tile <ras1> or --tile-size <w> <h>");
    if (o.patch < 1) throw CLI::ValidationError("need --patch <n>");
    TilePlan tp = plan(tw, th, geom, o.patch, StitchStrategy::parse(o.strategy), o.patch_cap);
    manifest["plan_summary"] = plan_summary(tp);

    Raster cov = coverage_map(tp);
    int cov_min = 255, cov_max = 0;
    for (size_t i = 0; i < cov.total_size(); ++i) {
        cov_min = std::min(cov_min, int(cov.u8()[i]));
        cov_max = std::max(cov_max, int(cov.u8()[i]));
    }
    manifest["coverage"] = {{"min", cov_min}, {"max", cov_max}};

    fs::path dir = ensure_out(o);
    spit(dir / "plan.txt", serialize_plan(tp));
    write_pgm(dir / "coverage.pgm", cov);
    manifest["outputs"] = {"plan.txt", "coverage.pgm"};
    write_manifest(dir, manifest);
    std::cout << "entries=" << tp.entries.size() << " coverage_min=" << cov_min
              << " coverage_max=" << cov_max << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tiled segmentation inference and stitching toolkit"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    CommonOpts o;
    // flags shared by (nearly) every subcommand; registered per-subcommand so
    // help stays accurate
    auto add_common = [&](CLI::App* sc, bool net, bool weights, bool tile) {
        if (net) sc->add_option("--net", o.net_path, "network spec file")->required();
        if (weights) {
            sc->add_option("--weights", o.weights_path, "WTS1 weights file");
            sc->add_option("--seed", o.seed, "init weights from this seed");
        }
        if (tile) sc->add_option("--tile", o.tile_path, "input tile (RAS1)");
        sc->add_option("--out", o.out_dir, "output directory");
        sc->add_option("--kernels", o.kernels, "kernel set: scalar|avx2");
    };

    auto* geom_sc = app.add_subcommand("geom", "report network geometry");
    int geom_probe = 0;
    add_common(geom_sc, true, false, false);
    geom_sc->add_option("--input", geom_probe, "probe input size");

    auto* synth_sc = app.add_subcommand("synth", "generate a synthetic tile");
    uint64_t synth_seed = 0;
    int synth_w = 256, synth_h = 256, synth_c = 1, synth_rects = 8;
    add_common(synth_sc, false, false, false);
    synth_sc->add_option("--seed", synth_seed, "generator seed")->required();
    synth_sc->add_option("--width", synth_w, "tile width");
    synth_sc->add_option("--height", synth_h, "tile height");
    synth_sc->add_option("--channels", synth_c, "channel count");
    synth_sc->add_option("--rects", synth_rects, "number of constant rectangles");

    auto* stitch_sc = app.add_subcommand("stitch", "run the net patchwise and stitch");
    std::string stitch_plan;
    add_common(stitch_sc, true, true, true);
    stitch_sc->add_option("--strategy", o.strategy, "concat|clip:<c>|avg:<stride>[:taper]");
    stitch_sc->add_option("--patch", o.patch, "patch input size");
    stitch_sc->add_option("--workers", o.workers, "worker thread count");
    stitch_sc->add_option("--patch-cap", o.patch_cap, "hardware patch-size cap");
    stitch_sc->add_option("--plan", stitch_plan, "replay a serialized plan");

    auto* oracle_sc = app.add_subcommand("oracle", "full-tile forward pass");
    add_common(oracle_sc, true, true, true);

    auto* corr_sc = app.add_subcommand("corr", "translation correlation matrix");
    int corr_max_shift = 8;
    std::string corr_region;
    add_common(corr_sc, true, true, true);
    corr_sc->add_option("--max-shift", corr_max_shift, "shift range per axis");
    corr_sc->add_option("--region", corr_region, "x0,y0,w,h region (default: centered)");

    auto* edge_sc = app.add_subcommand("edge-profile", "error rate vs patch-border distance");
    add_common(edge_sc, true, true, true);
    edge_sc->add_option("--patch", o.patch, "patch input size")->required();
    edge_sc->add_option("--strategy", o.strategy, "plan strategy");

    auto* sweep_sc = app.add_subcommand("avg-sweep", "translation-averaging IoU sweep");
    std::string sweep_shifts;
    add_common(sweep_sc, true, true, true);
    sweep_sc->add_option("--shifts", sweep_shifts, "di,dj;di,dj;... shift list")->required();

    auto* bench_sc = app.add_subcommand("bench", "patch-size timing sweep");
    std::string bench_sizes;
    int bench_reps = 5;
    add_common(bench_sc, true, true, true);
    bench_sc->add_option("--sizes", bench_sizes, "comma list of patch sizes")->required();
    bench_sc->add_option("--reps", bench_reps, "repetitions per size");
    bench_sc->add_option("--workers", o.workers, "worker thread count");

    auto* plan_sc = app.add_subcommand("plan", "emit a plan without running inference");
    int plan_w = 0, plan_h = 0;
    add_common(plan_sc, true, false, true);
    plan_sc->add_option("--tile-size", plan_w, "tile width=height when no --tile given");
    plan_sc->add_option("--tile-height", plan_h, "tile height override");
    plan_sc->add_option("--patch", o.patch, "patch input size");
    plan_sc->add_option("--strategy", o.strategy, "plan strategy");
    plan_sc->add_option("--patch-cap", o.patch_cap, "hardware patch-size cap");

    try {
        app.parse(argc, argv);
        apply_kernels_flag(o.kernels);
        if (geom_sc->parsed()) return cmd_geom(o, geom_probe);
        if (synth_sc->parsed()) return cmd_synth(o, synth_seed, synth_w, synth_h, synth_c,
                                                 synth_rects);
        if (stitch_sc->parsed()) return cmd_stitch(o, stitch_plan);
        if (oracle_sc->parsed()) return cmd_oracle(o);
        if (corr_sc->parsed()) return cmd_corr(o, corr_max_shift, corr_region);
        if (edge_sc->parsed()) return cmd_edge_profile(o);
        if (sweep_sc->parsed()) return cmd_avg_sweep(o, sweep_shifts);
        if (bench_sc->parsed()) return cmd_bench(o, bench_sizes, bench_reps);
        if (plan_sc->parsed())
            return cmd_plan_only(o, plan_w, plan_h > 0 ? plan_h : plan_w);
        return 2;
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;  // --help and --version exit 0; all misuse is 2
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const CoverageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const GeometryError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
