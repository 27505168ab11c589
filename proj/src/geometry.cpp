#include <algorithm>
#include <numeric>

#include "tileseg/kernels.hpp"
#include "tileseg/net.hpp"

namespace tileseg {

namespace {

// One axis of per-node spatial sizes.  Returns the first failing node's index
// via `bad` instead of throwing so callers can build their own message.
bool size_chain(const std::vector<LayerNode>& nodes, int input_node, int n,
                std::vector<int>& sizes, int* bad) {
    sizes.assign(nodes.size(), 0);
    for (size_t i = 0; i < nodes.size(); ++i) {
        const LayerNode& nd = nodes[i];
        int out = 0;
        switch (nd.kind) {
            case LayerKind::Input: out = n; break;
            case LayerKind::Conv:
                out = kernels::conv_out_size(sizes[nd.parents[0]], nd.k, nd.stride, nd.pad, nd.dil);
                break;
            case LayerKind::Relu: out = sizes[nd.parents[0]]; break;
            case LayerKind::MaxPool:
                out = kernels::pool_out_size(sizes[nd.parents[0]], nd.k, nd.stride);
                break;
            case LayerKind::Upsample: out = sizes[nd.parents[0]] * nd.factor; break;
            case LayerKind::CropConcat: {
                int a = sizes[nd.parents[0]], b = sizes[nd.parents[1]];
                if (a < b || (a - b) % 2) {
                    if (bad) *bad = static_cast<int>(i);
                    return false;
                }
                out = b;
                break;
            }
            case LayerKind::Output: out = sizes[nd.parents[0]]; break;
        }
        if (out < 1) {
            if (bad) *bad = static_cast<int>(i);
            return false;
        }
        sizes[i] = out;
    }
    (void)input_node;
    return true;
}

int ceil_div(int a, int b) { return (a + b - 1) / b; }

}  // namespace

NetGeometry::NetGeometry(const NetworkGraph& net)
    : nodes_(net.nodes()), input_(net.input_index()), output_(net.output_index()) {
    // Cumulative strides; every node must land on an integer grid.
    std::vector<long long> num(nodes_.size(), 1), den(nodes_.size(), 1);
    for (size_t i = 0; i < nodes_.size(); ++i) {
        const LayerNode& n = nodes_[i];
        if (!n.parents.empty()) {
            num[i] = num[n.parents[0]];
            den[i] = den[n.parents[0]];
        }
        if (n.kind == LayerKind::Conv || n.kind == LayerKind::MaxPool) num[i] *= n.stride;
        if (n.kind == LayerKind::Upsample) den[i] *= n.factor;
        long long g = std::gcd(num[i], den[i]);
        num[i] /= g, den[i] /= g;
        if (den[i] != 1)
            throw GeometryError("non-integer cumulative stride at node '" + n.name + "'");
    }
    cum_stride_.resize(nodes_.size());
    for (size_t i = 0; i < nodes_.size(); ++i) {
        cum_stride_[i] = static_cast<int>(num[i]);
        delta_tot_ = std::max(delta_tot_, cum_stride_[i]);
    }
    out_stride_ = cum_stride_[output_];
    if (delta_tot_ % out_stride_ != 0)
        throw GeometryError("equivariance period is not a multiple of the output stride");

    for (size_t i = 0; i < nodes_.size(); ++i) {
        const LayerNode& n = nodes_[i];
        int jump = n.parents.empty() ? 1 : cum_stride_[n.parents[0]];
        if (n.kind == LayerKind::Conv) reach_ += n.dil * (n.k - 1) * jump;
        if (n.kind == LayerKind::MaxPool) reach_ += (n.k - 1) * jump;
    }

    // Smallest input that runs, then the first stretch where sizes grow
    // linearly (one extra output row per period); that stretch defines the
    // per-side input margin exactly.
    std::vector<int> sizes;
    constexpr int kScanLimit = 65536;
    min_input_ = 0;
    for (int n = 1; n <= kScanLimit; ++n) {
        if (size_chain(nodes_, input_, n, sizes, nullptr)) {
            min_input_ = n;
            break;
        }
    }
    if (min_input_ == 0) throw GeometryError("no valid input size up to 65536");

    const int step = delta_tot_ / out_stride_;
    probe_ = 0;
    for (int n = min_input_; n <= kScanLimit; ++n) {
        std::vector<int> s2;
        if (!size_chain(nodes_, input_, n, sizes, nullptr)) continue;
        if (!size_chain(nodes_, input_, n + delta_tot_, s2, nullptr)) continue;
        if (s2[output_] - sizes[output_] != step) continue;
        probe_ = n;
        margin_in_ = (n - double(out_stride_) * sizes[output_]) / 2.0;
        break;
    }
    if (probe_ == 0) throw GeometryError("no linear size regime found up to 65536");
}

int NetGeometry::output_size(int input_size) const {
    std::vector<int> sizes;
    int bad = -1;
    if (!size_chain(nodes_, input_, input_size, sizes, &bad))
        throw GeometryError("node '" + nodes_[bad].name + "': output size underflows at input size " +
                            std::to_string(input_size));
    return sizes[output_];
}

std::optional<int> NetGeometry::try_output_size(int input_size) const {
    if (input_size < 1) return std::nullopt;
    std::vector<int> sizes;
    if (!size_chain(nodes_, input_, input_size, sizes, nullptr)) return std::nullopt;
    return sizes[output_];
}

int NetGeometry::contamination_margin(int input_size) const {
    std::vector<int> sizes;
    int bad = -1;
    if (!size_chain(nodes_, input_, input_size, sizes, &bad))
        throw GeometryError("node '" + nodes_[bad].name + "': output size underflows at input size " +
                            std::to_string(input_size));

    // Per-node interval [lo, hi] of output positions whose computation never
    // reads a zero-padded tap at any layer.  Empty interval: lo > hi.
    std::vector<int> lo(nodes_.size()), hi(nodes_.size());
    for (size_t i = 0; i < nodes_.size(); ++i) {
        const LayerNode& n = nodes_[i];
        int out = sizes[i];
        int l = 0, h = out - 1;
        if (!n.parents.empty()) {
            int pl = lo[n.parents[0]], ph = hi[n.parents[0]];
            switch (n.kind) {
                case LayerKind::Conv:
                    // taps of output x: x*s - p + j*d, j in [0, k)
                    l = ceil_div(pl + n.pad, n.stride);
                    h = (ph + n.pad - (n.k - 1) * n.dil) / n.stride;
                    if (ph + n.pad - (n.k - 1) * n.dil < 0) h = -1;
                    break;
                case LayerKind::MaxPool:
                    l = ceil_div(pl, n.stride);
                    h = (ph - (n.k - 1)) / n.stride;
                    if (ph - (n.k - 1) < 0) h = -1;
                    break;
                case LayerKind::Upsample:
                    l = pl * n.factor;
                    h = ph * n.factor + n.factor - 1;
                    break;
                case LayerKind::CropConcat: {
                    int t = (sizes[n.parents[0]] - sizes[n.parents[1]]) / 2;
                    l = std::max(pl - t, lo[n.parents[1]]);
                    h = std::min(ph - t, hi[n.parents[1]]);
                    break;
                }
                default:
                    l = pl, h = ph;
            }
            if (pl > ph) l = 0, h = -1;  // empty stays empty
        }
        lo[i] = std::max(l, 0);
        hi[i] = std::min(h, out - 1);
    }

    const int m = sizes[output_];
    const int cl = lo[output_], ch = hi[output_];
    if (cl <= 0 && ch >= m - 1) return 0;
    // C = 1 + the deepest border distance any contaminated pixel reaches.
    int worst = -1;
    for (int y = 0; y < m; ++y)
        for (int x = 0; x < m; ++x) {
            if (x >= cl && x <= ch && y >= cl && y <= ch) continue;
            worst = std::max(worst, std::min({x, y, m - 1 - x, m - 1 - y}));
        }
    return worst + 1;
}

}  // namespace tileseg
