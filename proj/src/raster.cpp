#include "tileseg/raster.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace tileseg {

Raster::Raster(int w, int h, int c, Dtype dt) : w_(w), h_(h), c_(c), dt_(dt) {
    if (w <= 0 || h <= 0 || c <= 0)
        throw ShapeError("raster dimensions must be positive");
    if (dt == Dtype::F32)
        f32_.assign(total_size(), 0.0f);
    else
        u8_.assign(total_size(), 0);
}

int resolve_border(int t, int n, BorderPolicy policy) {
    if (t >= 0 && t < n) return t;
    switch (policy) {
        case BorderPolicy::Error:
            throw OutOfBounds("coordinate " + std::to_string(t) +
                              " outside [0, " + std::to_string(n) + ")");
        case BorderPolicy::ZeroFill:
            return -1;
        case BorderPolicy::Clamp:
            return t < 0 ? 0 : n - 1;
        case BorderPolicy::Reflect: {
            // mirror across the border without repeating the edge pixel:
            // ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
            int r = t < 0 ? -t : 2 * n - 2 - t;
            if (r < 0 || r >= n)
                throw UnsupportedReflect(
                    "reflect overhang " + std::to_string(t) +
                    " exceeds axis length " + std::to_string(n));
            return r;
        }
    }
    throw Error("unreachable border policy");
}

Raster read_window(const Raster& src, const Window& win, BorderPolicy policy) {
    if (win.w <= 0 || win.h <= 0)
        throw GeometryError("window size must be positive");
    Raster out(win.w, win.h, src.channels(), src.dtype());

    // Resolve each axis once; windows are typically much wider than tall.
    std::vector<int> sx(win.w), sy(win.h);
    for (int x = 0; x < win.w; ++x) sx[x] = resolve_border(win.x0 + x, src.width(), policy);
    for (int y = 0; y < win.h; ++y) sy[y] = resolve_border(win.y0 + y, src.height(), policy);

    for (int ch = 0; ch < src.channels(); ++ch) {
        for (int y = 0; y < win.h; ++y) {
            if (src.dtype() == Dtype::F32) {
                float* row = out.f32_plane(ch) + static_cast<size_t>(y) * win.w;
                if (sy[y] < 0) {
                    std::memset(row, 0, sizeof(float) * win.w);
                    continue;
                }
                const float* srow = src.f32_plane(ch) + static_cast<size_t>(sy[y]) * src.width();
                for (int x = 0; x < win.w; ++x) row[x] = sx[x] < 0 ? 0.0f : srow[sx[x]];
            } else {
                uint8_t* row = out.u8_plane(ch) + static_cast<size_t>(y) * win.w;
                if (sy[y] < 0) {
                    std::memset(row, 0, win.w);
                    continue;
                }
                const uint8_t* srow = src.u8_plane(ch) + static_cast<size_t>(sy[y]) * src.width();
                for (int x = 0; x < win.w; ++x) row[x] = sx[x] < 0 ? uint8_t{0} : srow[sx[x]];
            }
        }
    }
    return out;
}

size_t diff_count(const Raster& a, const Raster& b) {
    if (!a.same_shape(b))
        throw ShapeError("diff_count operands have different shapes");
    size_t n = a.total_size(), diffs = 0;
    if (a.dtype() == Dtype::F32) {
        const float *pa = a.f32(), *pb = b.f32();
        for (size_t i = 0; i < n; ++i)
            diffs += std::bit_cast<uint32_t>(pa[i]) != std::bit_cast<uint32_t>(pb[i]);
    } else {
        const uint8_t *pa = a.u8(), *pb = b.u8();
        for (size_t i = 0; i < n; ++i) diffs += pa[i] != pb[i];
    }
    return diffs;
}

namespace {

void put_u32le(std::ostream& os, uint32_t v) {
    char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char(v >> 24)};
    os.write(b, 4);
}

uint32_t get_u32le(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw FormatError("unexpected end of file");
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

}  // namespace

void write_ras1(const std::filesystem::path& path, const Raster& r) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    os.write("RAS1", 4);
    put_u32le(os, static_cast<uint32_t>(r.width()));
    put_u32le(os, static_cast<uint32_t>(r.height()));
    put_u32le(os, static_cast<uint32_t>(r.channels()));
    char dt = static_cast<char>(r.dtype());
    os.write(&dt, 1);
    if (r.dtype() == Dtype::F32)
        os.write(reinterpret_cast<const char*>(r.f32()), std::streamsize(r.total_size() * 4));
    else
        os.write(reinterpret_cast<const char*>(r.u8()), std::streamsize(r.total_size()));
    if (!os) throw FormatError("write failed for " + path.string());
}

Raster read_ras1(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "RAS1", 4) != 0)
        throw FormatError(path.string() + ": bad magic");
    uint32_t w = get_u32le(is), h = get_u32le(is), c = get_u32le(is);
    char dt_raw;
    if (!is.read(&dt_raw, 1)) throw FormatError(path.string() + ": truncated header");
    if (dt_raw != 0 && dt_raw != 1)
        throw FormatError(path.string() + ": unknown dtype code " + std::to_string(int(dt_raw)));
    constexpr uint64_t kMaxElems = uint64_t(1) << 31;
    if (w == 0 || h == 0 || c == 0 || uint64_t(w) * h * c > kMaxElems)
        throw FormatError(path.string() + ": unreasonable dimensions");

    Raster r(int(w), int(h), int(c), dt_raw ? Dtype::F32 : Dtype::U8);
    std::streamsize bytes = std::streamsize(r.total_size() * (dt_raw ? 4 : 1));
    char* dst = dt_raw ? reinterpret_cast<char*>(r.f32()) : reinterpret_cast<char*>(r.u8());
    if (!is.read(dst, bytes)) throw FormatError(path.string() + ": truncated payload");
    if (is.peek() != std::char_traits<char>::eof())
        throw FormatError(path.string() + ": trailing bytes after payload");
    if (dt_raw) {
        const float* p = r.f32();
        for (size_t i = 0; i < r.total_size(); ++i)
            if (std::isnan(p[i]))
                throw FormatError(path.string() + ": NaN in payload at element " + std::to_string(i));
    }
    return r;
}

void write_pgm(const std::filesystem::path& path, const Raster& r) {
    if (r.channels() != 1 || r.dtype() != Dtype::U8)
        throw ShapeError("PGM output requires a single-channel U8 raster");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    os << "P5\n" << r.width() << " " << r.height() << "\n255\n";
    os.write(reinterpret_cast<const char*>(r.u8()), std::streamsize(r.total_size()));
    if (!os) throw FormatError("write failed for " + path.string());
}

namespace {

// PNM token reader: skips whitespace and '#' comments.
uint64_t pnm_uint(std::istream& is, const std::filesystem::path& path) {
    int ch = is.get();
    while (ch != EOF && (std::isspace(ch) || ch == '#')) {
        if (ch == '#')
            while (ch != EOF && ch != '\n') ch = is.get();
        ch = is.get();
    }
    if (ch == EOF || !std::isdigit(ch)) throw FormatError(path.string() + ": malformed PGM header");
    uint64_t v = 0;
    while (ch != EOF && std::isdigit(ch)) {
        v = v * 10 + (ch - '0');
        if (v > std::numeric_limits<uint32_t>::max())
            throw FormatError(path.string() + ": PGM header value overflow");
        ch = is.get();
    }
    if (ch != EOF) is.unget();
    return v;
}

}  // namespace

Raster read_pgm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path.string());
    char m0 = 0, m1 = 0;
    is.get(m0), is.get(m1);
    if (m0 != 'P' || m1 != '5') throw FormatError(path.string() + ": not a P5 PGM");
    uint64_t w = pnm_uint(is, path), h = pnm_uint(is, path), maxval = pnm_uint(is, path);
    if (maxval != 255) throw FormatError(path.string() + ": only maxval 255 supported");
    if (w == 0 || h == 0 || w * h > (uint64_t(1) << 31))
        throw FormatError(path.string() + ": unreasonable dimensions");
    is.get();  // single whitespace byte after maxval
    Raster r(int(w), int(h), 1, Dtype::U8);
    if (!is.read(reinterpret_cast<char*>(r.u8()), std::streamsize(r.total_size())))
        throw FormatError(path.string() + ": truncated payload");
    return r;
}

}  // namespace tileseg
