#pragma once

#include <cstdint>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "tileseg/errors.hpp"

namespace tileseg {

enum class Dtype : uint8_t { U8 = 0, F32 = 1 };

// Axis-aligned window in pixel coordinates.  May reach outside the raster it
// is applied to; what happens then is the BorderPolicy's business.
struct Window {
    int x0 = 0;
    int y0 = 0;
    int w = 0;
    int h = 0;

    bool operator==(const Window&) const = default;
};

enum class BorderPolicy : uint8_t {
    Error,     // any out-of-range pixel throws OutOfBounds
    ZeroFill,  // out-of-range pixels read as 0
    Reflect,   // mirror across the border, edge pixel not repeated
    Clamp,     // nearest edge pixel
};

// Planar (channel-major) image: channel 0 rows, then channel 1 rows, ...
// One of the two payload vectors is active depending on dtype.
class Raster {
  public:
    Raster() = default;
    Raster(int w, int h, int c, Dtype dt);

    int width() const { return w_; }
    int height() const { return h_; }
    int channels() const { return c_; }
    Dtype dtype() const { return dt_; }
    size_t plane_size() const { return static_cast<size_t>(w_) * h_; }
    size_t total_size() const { return plane_size() * c_; }
    bool same_shape(const Raster& o) const {
        return w_ == o.w_ && h_ == o.h_ && c_ == o.c_ && dt_ == o.dt_;
    }

    float* f32() { return f32_.data(); }
    const float* f32() const { return f32_.data(); }
    uint8_t* u8() { return u8_.data(); }
    const uint8_t* u8() const { return u8_.data(); }

    float* f32_plane(int ch) { return f32_.data() + plane_size() * ch; }
    const float* f32_plane(int ch) const { return f32_.data() + plane_size() * ch; }
    uint8_t* u8_plane(int ch) { return u8_.data() + plane_size() * ch; }
    const uint8_t* u8_plane(int ch) const { return u8_.data() + plane_size() * ch; }

    float& at_f32(int ch, int y, int x) { return f32_[idx(ch, y, x)]; }
    float at_f32(int ch, int y, int x) const { return f32_[idx(ch, y, x)]; }
    uint8_t& at_u8(int ch, int y, int x) { return u8_[idx(ch, y, x)]; }
    uint8_t at_u8(int ch, int y, int x) const { return u8_[idx(ch, y, x)]; }

  private:
    size_t idx(int ch, int y, int x) const {
        return plane_size() * ch + static_cast<size_t>(y) * w_ + x;
    }

    int w_ = 0, h_ = 0, c_ = 0;
    Dtype dt_ = Dtype::U8;
    std::vector<float> f32_;
    std::vector<uint8_t> u8_;
};

// Resolve a (possibly out-of-range) coordinate against an axis of length n.
// Returns -1 for ZeroFill misses; throws for Error/unsupported Reflect.
int resolve_border(int t, int n, BorderPolicy policy);

// Copy-out of `win` from `src` under `policy`.  Result has the window's size
// and the source's channel count / dtype.
Raster read_window(const Raster& src, const Window& win, BorderPolicy policy);

// Number of positions (over all channels) where the two rasters differ.
// F32 is compared bitwise.  Throws ShapeError on shape/dtype mismatch.
size_t diff_count(const Raster& a, const Raster& b);

// RAS1 container: magic "RAS1", u32le width/height/channels, u8 dtype code,
// then the planar payload (F32 little-endian).  Reading rejects NaN payloads.
void write_ras1(const std::filesystem::path& path, const Raster& r);
Raster read_ras1(const std::filesystem::path& path);

// Binary PGM (P5, maxval 255) for single-channel U8 rasters only.
void write_pgm(const std::filesystem::path& path, const Raster& r);
Raster read_pgm(const std::filesystem::path& path);

}  // namespace tileseg
