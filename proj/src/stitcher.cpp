#include "tileseg/stitcher.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include "tileseg/kernels.hpp"

namespace tileseg {

std::string StitchTiming::to_kv() const {
    std::ostringstream os;
    os << "patches=" << patches << "\n";
    os << "forward_ms=" << forward_ms << "\n";
    os << "handling_ms=" << handling_ms << "\n";
    os << "total_ms=" << total_ms << "\n";
    return os.str();
}

StitchAccumulator::StitchAccumulator(const TilePlan& plan, int classes)
    : out_w_(plan.out_w),
      out_h_(plan.out_h),
      classes_(classes),
      patch_out_(plan.patch_output),
      strategy_(plan.strategy),
      sums_(plan.out_w, plan.out_h, classes, Dtype::F32),
      weights_(plan.out_w, plan.out_h, 1, Dtype::F32) {
    if (strategy_.mode == StitchMode::Average && strategy_.weight == AvgWeight::EdgeTaper) {
        // Integer taper: 1 + distance to the nearest patch-output border.
        taper_ = Raster(patch_out_, patch_out_, 1, Dtype::F32);
        for (int y = 0; y < patch_out_; ++y)
            for (int x = 0; x < patch_out_; ++x)
                taper_.at_f32(0, y, x) = float(
                    1 + std::min({x, y, patch_out_ - 1 - x, patch_out_ - 1 - y}));
    }
}

void StitchAccumulator::accumulate(const Raster& output_patch, const PlanEntry& e) {
    const Window& w = e.output_window;
    if (output_patch.channels() != classes_ ||
        output_patch.width() != e.clip_left + w.w + e.clip_right ||
        output_patch.height() != e.clip_top + w.h + e.clip_bottom)
        throw ShapeError("output patch does not match the plan entry's pre-clip extent");

    const size_t src_off = static_cast<size_t>(e.clip_top) * output_patch.width() + e.clip_left;
    const size_t dst_off = static_cast<size_t>(w.y0) * out_w_ + w.x0;
    const bool taper = taper_.total_size() > 0;
    for (int c = 0; c < classes_; ++c) {
        float* dst = sums_.f32_plane(c) + dst_off;
        const float* src = output_patch.f32_plane(c) + src_off;
        if (taper)
            kernels::madd_region(dst, out_w_, src, output_patch.width(),
                                 taper_.f32_plane(0) + src_off, patch_out_, w.w, w.h);
        else
            kernels::axpy_region(dst, out_w_, src, output_patch.width(), w.w, w.h, 1.0f);
    }
    float* wdst = weights_.f32_plane(0) + dst_off;
    if (taper)
        kernels::axpy_region(wdst, out_w_, taper_.f32_plane(0) + src_off, patch_out_, w.w, w.h,
                             1.0f);
    else
        kernels::add_const_region(wdst, out_w_, w.w, w.h, 1.0f);
}

StitchAccumulator::Result StitchAccumulator::finalize() const {
    const float* wt = weights_.f32();
    for (size_t i = 0; i < weights_.total_size(); ++i)
        if (wt[i] == 0.0f)
            throw CoverageError("zero coverage at output pixel " + std::to_string(i % out_w_) +
                                "," + std::to_string(i / out_w_));
    Result r{Raster(out_w_, out_h_, classes_, Dtype::F32), Raster(out_w_, out_h_, 1, Dtype::U8)};
    for (int c = 0; c < classes_; ++c)
        kernels::divide(sums_.f32_plane(c), wt, r.prob.f32_plane(c), weights_.total_size());
    kernels::argmax_u8(r.prob.f32(), r.prob.plane_size(), classes_, r.label.u8(),
                       r.prob.plane_size());
    return r;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

StitchResult stitch(const Raster& tile, const NetworkGraph& net, const TilePlan& plan,
                    int workers) {
    if (tile.channels() != net.input_channels())
        throw ShapeError("tile channel count does not match the net input");
    const auto t_start = Clock::now();
    StitchAccumulator acc(plan, net.num_classes());
    StitchTiming timing;
    timing.patches = static_cast<int>(plan.entries.size());

    const size_t n = plan.entries.size();
    if (workers < 1) workers = 1;

    if (workers == 1) {
        for (const PlanEntry& e : plan.entries) {
            auto t0 = Clock::now();
            Raster patch = read_window(tile, e.input_window, BorderPolicy::Reflect);
            timing.handling_ms += ms_since(t0);
            t0 = Clock::now();
            Raster out = net.forward(patch);
            timing.forward_ms += ms_since(t0);
            t0 = Clock::now();
            acc.accumulate(out, e);
            timing.handling_ms += ms_since(t0);
        }
    } else {
        // Workers compute forwards; the main thread commits results in entry
        // order through a bounded ring so sums are scheduling-independent and
        // memory stays at O(workers) patches.
        const size_t ring = static_cast<size_t>(workers) + 2;
        std::vector<Raster> slot(ring);
        std::vector<bool> ready(ring, false);
        std::mutex mu;
        std::condition_variable cv_ready, cv_free;
        size_t next_job = 0, committed = 0;
        double worker_forward_ms = 0.0, worker_read_ms = 0.0;

        auto work = [&] {
            double fwd = 0.0, rd = 0.0;
            for (;;) {
                size_t i;
                {
                    std::unique_lock lk(mu);
                    if (next_job >= n) break;
                    i = next_job++;
                    cv_free.wait(lk, [&] { return i < committed + ring; });
                }
                auto t0 = Clock::now();
                Raster patch = read_window(tile, plan.entries[i].input_window,
                                           BorderPolicy::Reflect);
                rd += ms_since(t0);
                t0 = Clock::now();
                Raster out = net.forward(patch);
                fwd += ms_since(t0);
                {
                    std::lock_guard lk(mu);
                    slot[i % ring] = std::move(out);
                    ready[i % ring] = true;
                }
                cv_ready.notify_all();
            }
            std::lock_guard lk(mu);
            worker_forward_ms += fwd;
            worker_read_ms += rd;
        };

        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(work);
        for (size_t i = 0; i < n; ++i) {
            Raster out;
            {
                std::unique_lock lk(mu);
                cv_ready.wait(lk, [&] { return ready[i % ring]; });
                out = std::move(slot[i % ring]);
                ready[i % ring] = false;
                ++committed;
            }
            cv_free.notify_all();
            auto t0 = Clock::now();
            acc.accumulate(out, plan.entries[i]);
            timing.handling_ms += ms_since(t0);
        }
        for (auto& t : pool) t.join();
        timing.forward_ms += worker_forward_ms;
        timing.handling_ms += worker_read_ms;
    }

    auto t0 = Clock::now();
    auto fin = acc.finalize();
    timing.handling_ms += ms_since(t0);
    timing.total_ms = ms_since(t_start);
    return {std::move(fin.prob), std::move(fin.label), timing};
}

}  // namespace tileseg
