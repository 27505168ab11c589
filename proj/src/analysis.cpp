#include "tileseg/analysis.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "tileseg/kernels.hpp"
#include "tileseg/stitcher.hpp"

namespace tileseg {

double iou(const Raster& pred, const Raster& truth, uint8_t class_id) {
    if (!pred.same_shape(truth)) throw ShapeError("iou operands have different shapes");
    if (pred.dtype() != Dtype::U8) throw ShapeError("iou expects U8 label rasters");
    long long inter = 0, uni = 0;
    const uint8_t *a = pred.u8(), *b = truth.u8();
    for (size_t i = 0; i < pred.total_size(); ++i) {
        bool pa = a[i] == class_id, pb = b[i] == class_id;
        inter += pa && pb;
        uni += pa || pb;
    }
    return uni == 0 ? 1.0 : double(inter) / double(uni);
}

namespace {

Raster labels_of(const Raster& scores) {
    Raster lab(scores.width(), scores.height(), 1, Dtype::U8);
    kernels::argmax_u8(scores.f32(), scores.plane_size(), scores.channels(), lab.u8(),
                       scores.plane_size());
    return lab;
}

// Largest input size <= cap that the net accepts on this axis.
int shrink_to_valid(const NetGeometry& geom, int cap) {
    for (int n = cap; n >= 1; --n)
        if (geom.try_output_size(n)) return n;
    throw GeometryError("no valid input size at or below " + std::to_string(cap));
}

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

}  // namespace

CorrelationMatrix correlation_matrix(const NetworkGraph& net, const Raster& tile,
                                     const Window& region, int max_shift) {
    if (max_shift < 1) throw GeometryError("max_shift must be >= 1");
    NetGeometry geom(net);
    const int sigma = geom.out_stride();

    const int win_w = shrink_to_valid(geom, tile.width() - (max_shift - 1));
    const int win_h = shrink_to_valid(geom, tile.height() - (max_shift - 1));
    const int m_w = *geom.try_output_size(win_w);
    const int m_h = *geom.try_output_size(win_h);
    // Offset of the output grid's origin inside the window, input pixels.
    const int b_x = (win_w - sigma * m_w) / 2;
    const int b_y = (win_h - sigma * m_h) / 2;

    auto check_axis = [&](int q0, int qn, int b, int m) {
        int lo = q0 - (max_shift - 1) - b;
        int hi = qn - 1 - b;
        if (lo < 0 || floor_div(hi, sigma) >= m)
            throw GeometryError("region plus shifts exceeds the span covered by the output");
    };
    check_axis(region.x0, region.x0 + region.w, b_x, m_w);
    check_axis(region.y0, region.y0 + region.h, b_y, m_h);

    const size_t vec_len = size_t(region.w) * region.h;
    auto extract = [&](const Raster& out, int dj, int di, std::vector<float>& v) {
        v.resize(vec_len);
        size_t idx = 0;
        const float* plane = out.f32_plane(0);
        for (int y = region.y0; y < region.y0 + region.h; ++y) {
            const int oy = (y - di - b_y) / sigma;
            const float* row = plane + size_t(oy) * out.width();
            for (int x = region.x0; x < region.x0 + region.w; ++x)
                v[idx++] = row[(x - dj - b_x) / sigma];
        }
    };

    CorrelationMatrix cm;
    cm.max_shift = max_shift;
    cm.pearson.assign(size_t(max_shift) * max_shift, 0.0);
    cm.exact.assign(size_t(max_shift) * max_shift, 0);
    cm.defined.assign(size_t(max_shift) * max_shift, 0);

    std::vector<float> ref, cur;
    for (int di = 0; di < max_shift; ++di) {
        for (int dj = 0; dj < max_shift; ++dj) {
            Raster out = net.forward(
                read_window(tile, {dj, di, win_w, win_h}, BorderPolicy::Error));
            if (di == 0 && dj == 0) {
                extract(out, 0, 0, ref);
                cur = ref;
            } else {
                extract(out, dj, di, cur);
            }
            const size_t at = size_t(di) * max_shift + dj;
            cm.exact[at] =
                std::memcmp(ref.data(), cur.data(), vec_len * sizeof(float)) == 0 ? 1 : 0;

            double sa = 0, sb = 0;
            for (size_t i = 0; i < vec_len; ++i) sa += ref[i], sb += cur[i];
            const double ma = sa / double(vec_len), mb = sb / double(vec_len);
            double cov = 0, va = 0, vb = 0;
            for (size_t i = 0; i < vec_len; ++i) {
                const double da = ref[i] - ma, db = cur[i] - mb;
                cov += da * db;
                va += da * da;
                vb += db * db;
            }
            if (va > 0 && vb > 0) {
                cm.defined[at] = 1;
                cm.pearson[at] = cov / std::sqrt(va * vb);
            } else {
                cm.pearson[at] = cm.exact[at] ? 1.0 : 0.0;
            }
        }
    }
    return cm;
}

EdgeErrorProfile edge_error_profile(const NetworkGraph& net, const Raster& tile,
                                    const TilePlan& plan) {
    Raster oracle_labels = labels_of(net.forward(tile));
    const int m = plan.patch_output;
    EdgeErrorProfile prof;
    prof.counts.assign((m + 1) / 2, 0);
    prof.disagreements.assign((m + 1) / 2, 0);

    for (const PlanEntry& e : plan.entries) {
        Raster out = net.forward(read_window(tile, e.input_window, BorderPolicy::Reflect));
        Raster lab = labels_of(out);
        const int gx0 = e.output_window.x0 - e.clip_left;
        const int gy0 = e.output_window.y0 - e.clip_top;
        for (int y = 0; y < m; ++y) {
            const int gy = gy0 + y;
            if (gy < 0 || gy >= plan.out_h) continue;
            for (int x = 0; x < m; ++x) {
                const int gx = gx0 + x;
                if (gx < 0 || gx >= plan.out_w) continue;
                const int d = std::min({x, y, m - 1 - x, m - 1 - y});
                ++prof.counts[d];
                prof.disagreements[d] += lab.at_u8(0, y, x) != oracle_labels.at_u8(0, gy, gx);
            }
        }
    }
    return prof;
}

size_t equivariance_check(const NetworkGraph& net, const Raster& image, int ki, int kj) {
    const int aki = std::abs(ki), akj = std::abs(kj);
    if (akj >= image.width() || aki >= image.height())
        throw GeometryError("shift exceeds image extent");
    const int w = image.width() - akj, h = image.height() - aki;

    // A at the origin-side placement, B displaced by (ki, kj); both in-bounds.
    Window wa{kj < 0 ? akj : 0, ki < 0 ? aki : 0, w, h};
    Window wb{wa.x0 + kj, wa.y0 + ki, w, h};

    NetGeometry geom(net);
    const int sigma = geom.out_stride();
    Raster out_a = net.forward(read_window(image, wa, BorderPolicy::Error));
    Raster out_b = net.forward(read_window(image, wb, BorderPolicy::Error));

    // Expected output displacement; exact when sigma divides the shift,
    // floored otherwise (any mismatch then witnesses variance).
    const int sx = floor_div(kj, sigma), sy = floor_div(ki, sigma);
    const int x0 = std::max(0, -sx), x1 = std::min(out_a.width(), out_a.width() - sx);
    const int y0 = std::max(0, -sy), y1 = std::min(out_a.height(), out_a.height() - sy);
    if (x0 >= x1 || y0 >= y1) throw GeometryError("shift leaves no output overlap");

    size_t diffs = 0;
    for (int c = 0; c < out_a.channels(); ++c)
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x)
                diffs += std::bit_cast<uint32_t>(out_b.at_f32(c, y, x)) !=
                         std::bit_cast<uint32_t>(out_a.at_f32(c, y + sy, x + sx));
    return diffs;
}

Raster context_sensitivity(const NetworkGraph& net, const Raster& tile, const Window& patch) {
    if (patch.x0 < 0 || patch.y0 < 0 || patch.x0 + patch.w > tile.width() ||
        patch.y0 + patch.h > tile.height())
        throw GeometryError("patch must lie inside the tile");
    NetGeometry geom(net);
    const int P = geom.delta_tot(), sigma = geom.out_stride();

    Raster out_patch = net.forward(read_window(tile, patch, BorderPolicy::Error));
    const int m_w = out_patch.width(), m_h = out_patch.height();

    // Period-aligned context so pooling phases match between the two runs.
    int e = (geom.influence_reach() + P - 1) / P * P;
    for (;; e += P) {
        if (patch.x0 - e < 0 || patch.y0 - e < 0 || patch.x0 + patch.w + e > tile.width() ||
            patch.y0 + patch.h + e > tile.height())
            throw GeometryError("tile provides insufficient context around the patch");
        auto ew = geom.try_output_size(patch.w + 2 * e);
        auto eh = geom.try_output_size(patch.h + 2 * e);
        if (!ew || !eh) continue;
        if (*ew < e / sigma + m_w || *eh < e / sigma + m_h) continue;
        break;
    }

    Window ctx{patch.x0 - e, patch.y0 - e, patch.w + 2 * e, patch.h + 2 * e};
    Raster out_ctx = net.forward(read_window(tile, ctx, BorderPolicy::Error));
    const int off = e / sigma;

    Raster mask(m_w, m_h, 1, Dtype::U8);
    for (int y = 0; y < m_h; ++y)
        for (int x = 0; x < m_w; ++x) {
            uint8_t changed = 0;
            for (int c = 0; c < out_patch.channels() && !changed; ++c)
                changed = std::bit_cast<uint32_t>(out_patch.at_f32(c, y, x)) !=
                          std::bit_cast<uint32_t>(out_ctx.at_f32(c, y + off, x + off));
            mask.at_u8(0, y, x) = changed;
        }
    return mask;
}

int mask_margin(const Raster& mask) {
    const int w = mask.width(), h = mask.height();
    int worst = -1;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (mask.at_u8(0, y, x))
                worst = std::max(worst, std::min({x, y, w - 1 - x, h - 1 - y}));
    return worst + 1;
}

std::vector<SweepPoint> averaging_sweep(const NetworkGraph& net, const Raster& tile,
                                        const std::vector<std::pair<int, int>>& shifts) {
    if (shifts.empty()) return {};
    int max_di = 0, max_dj = 0;
    for (auto [di, dj] : shifts) {
        if (di < 0 || dj < 0) throw GeometryError("sweep shifts must be non-negative");
        max_di = std::max(max_di, di);
        max_dj = std::max(max_dj, dj);
    }
    NetGeometry geom(net);
    const int sigma = geom.out_stride();
    const int bw = shrink_to_valid(geom, tile.width() - max_dj);
    const int bh = shrink_to_valid(geom, tile.height() - max_di);

    Raster oracle_labels = labels_of(net.forward(tile));
    const int classes = net.num_classes();

    // Region of the base output grid covered by every shifted window.
    int x_lo = 0, y_lo = 0;
    int x_hi = 1 << 30, y_hi = 1 << 30;
    int sm_w = 0, sm_h = 0;
    std::vector<Raster> outs;
    outs.reserve(shifts.size());
    for (auto [di, dj] : shifts) {
        Raster out = net.forward(read_window(tile, {dj, di, bw, bh}, BorderPolicy::Error));
        sm_w = out.width(), sm_h = out.height();
        x_lo = std::max(x_lo, dj / sigma);
        y_lo = std::max(y_lo, di / sigma);
        x_hi = std::min(x_hi, dj / sigma + sm_w);
        y_hi = std::min(y_hi, di / sigma + sm_h);
        outs.push_back(std::move(out));
    }
    if (x_hi <= x_lo || y_hi <= y_lo) throw GeometryError("sweep shifts share no output region");
    x_hi = std::min(x_hi, oracle_labels.width());
    y_hi = std::min(y_hi, oracle_labels.height());
    const int rw = x_hi - x_lo, rh = y_hi - y_lo;

    Raster truth(rw, rh, 1, Dtype::U8);
    for (int y = 0; y < rh; ++y)
        std::memcpy(truth.u8_plane(0) + size_t(y) * rw,
                    oracle_labels.u8_plane(0) + size_t(y + y_lo) * oracle_labels.width() + x_lo,
                    size_t(rw));

    std::vector<double> sums(size_t(classes) * rw * rh, 0.0);
    std::vector<SweepPoint> result;
    for (size_t k = 0; k < shifts.size(); ++k) {
        auto [di, dj] = shifts[k];
        const Raster& out = outs[k];
        for (int c = 0; c < classes; ++c) {
            double* acc = sums.data() + size_t(c) * rw * rh;
            const float* plane = out.f32_plane(c);
            for (int y = 0; y < rh; ++y) {
                const float* row = plane + size_t(y + y_lo - di / sigma) * out.width() +
                                   (x_lo - dj / sigma);
                for (int x = 0; x < rw; ++x) acc[size_t(y) * rw + x] += row[x];
            }
        }
        // Labels from the prefix mean; the double sum divided by the exact
        // integer count keeps "identical summands" exactly constant.
        Raster pred(rw, rh, 1, Dtype::U8);
        const double inv_count = double(k + 1);
        for (int y = 0; y < rh; ++y)
            for (int x = 0; x < rw; ++x) {
                float best = float(sums[size_t(y) * rw + x] / inv_count);
                int cls = 0;
                for (int c = 1; c < classes; ++c) {
                    float v = float(sums[(size_t(c) * rh + y) * rw + x] / inv_count);
                    if (v > best) best = v, cls = c;
                }
                pred.at_u8(0, y, x) = uint8_t(cls);
            }

        SweepPoint pt;
        pt.count = int(k + 1);
        pt.di = di;
        pt.dj = dj;
        for (int c = 0; c < classes; ++c)
            pt.class_iou.push_back(iou(pred, truth, uint8_t(c)));
        for (double v : pt.class_iou) pt.mean_iou += v;
        pt.mean_iou /= double(classes);
        result.push_back(std::move(pt));
    }
    return result;
}

std::vector<BenchRow> bench_patch_sizes(const NetworkGraph& net, const Raster& tile,
                                        const std::vector<int>& sizes, int reps, int workers) {
    NetGeometry geom(net);
    const size_t n = sizes.size();
    std::vector<TilePlan> plans;
    plans.reserve(n);
    for (int size : sizes)
        plans.push_back(plan(tile.width(), tile.height(), geom, size,
                             StitchStrategy::make_concat()));

    // Interleave reps round-robin so slow load drift hits every size equally,
    // and burn one untimed warmup pass per size (first-touch, allocator state).
    std::vector<std::vector<double>> total(n), fwd(n), handling(n);
    for (int r = -1; r < std::max(reps, 1); ++r) {
        for (size_t i = 0; i < n; ++i) {
            StitchResult sr = stitch(tile, net, plans[i], workers);
            if (r < 0) continue;
            total[i].push_back(sr.timing.total_ms);
            fwd[i].push_back(sr.timing.forward_ms);
            handling[i].push_back(sr.timing.handling_ms);
        }
    }
    auto median = [](std::vector<double> v) {
        std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
        return v[v.size() / 2];
    };
    std::vector<BenchRow> rows;
    for (size_t i = 0; i < n; ++i)
        rows.push_back({sizes[i], int(plans[i].entries.size()), median(total[i]),
                        median(fwd[i]), median(handling[i])});
    return rows;
}

}  // namespace tileseg
