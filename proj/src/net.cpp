#include "tileseg/net.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "tileseg/kernels.hpp"
#include "tileseg/prng.hpp"

namespace tileseg {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Input: return "input";
        case LayerKind::Conv: return "conv";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::Upsample: return "upsample";
        case LayerKind::CropConcat: return "cropconcat";
        case LayerKind::Output: return "output";
    }
    return "?";
}

namespace {

struct Rational {
    long long num = 1, den = 1;
    void reduce() {
        long long g = std::gcd(num, den);
        if (g > 1) num /= g, den /= g;
    }
    bool operator==(const Rational&) const = default;
};

int parse_int(const std::string& s, int line, const std::string& key) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw SpecError(line, "bad integer for " + key + ": '" + s + "'");
    return v;
}

uint64_t parse_u64(const std::string& s, int line, const std::string& key) {
    uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw SpecError(line, "bad integer for " + key + ": '" + s + "'");
    return v;
}

// Key=value arguments after `<kind> <name>`.
struct KvArgs {
    std::map<std::string, std::string> kv;
    int line;

    bool has(const std::string& k) const { return kv.count(k) != 0; }
    std::string take_str(const std::string& k) {
        auto it = kv.find(k);
        if (it == kv.end()) throw SpecError(line, "missing " + k + "=");
        std::string v = it->second;
        kv.erase(it);
        return v;
    }
    int take_int(const std::string& k) { return parse_int(take_str(k), line, k); }
    int take_int_or(const std::string& k, int dflt) {
        return has(k) ? take_int(k) : dflt;
    }
    void done() const {
        if (!kv.empty()) throw SpecError(line, "unknown argument '" + kv.begin()->first + "='");
    }
};

}  // namespace

NetworkGraph NetworkGraph::parse(const std::string& text) {
    NetworkGraph g;
    std::unordered_map<std::string, int> index;
    std::vector<Rational> cum;  // parse-time cumulative strides for the concat check

    std::istringstream is(text);
    std::string raw;
    int lineno = 0;
    while (std::getline(is, raw)) {
        ++lineno;
        if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
        std::istringstream ls(raw);
        std::string kind_s, name;
        if (!(ls >> kind_s)) continue;  // blank line
        if (!(ls >> name)) throw SpecError(lineno, "missing node name");

        KvArgs args{{}, lineno};
        std::string tok;
        while (ls >> tok) {
            auto eq = tok.find('=');
            if (eq == std::string::npos || eq == 0)
                throw SpecError(lineno, "expected key=value, got '" + tok + "'");
            if (!args.kv.emplace(tok.substr(0, eq), tok.substr(eq + 1)).second)
                throw SpecError(lineno, "duplicate argument '" + tok.substr(0, eq) + "='");
        }

        if (index.count(name)) throw SpecError(lineno, "duplicate node name '" + name + "'");

        LayerNode n;
        n.name = name;
        auto resolve = [&](const std::string& parent) {
            auto it = index.find(parent);
            if (it == index.end())
                throw SpecError(lineno, "unknown or forward-referenced parent '" + parent + "'");
            return it->second;
        };

        if (kind_s == "input") {
            n.kind = LayerKind::Input;
            n.channels = args.take_int("channels");
            if (n.channels < 1) throw SpecError(lineno, "channels must be >= 1");
            if (g.input_ >= 0) throw SpecError(lineno, "more than one input node");
            n.out_channels = n.channels;
        } else if (kind_s == "conv") {
            n.kind = LayerKind::Conv;
            n.parents.push_back(resolve(args.take_str("from")));
            n.k = args.take_int("k");
            n.cout = args.take_int("cout");
            n.stride = args.take_int_or("s", 1);
            n.pad = args.take_int_or("p", 0);
            n.dil = args.take_int_or("d", 1);
            int bias = args.take_int_or("bias", 1);
            if (bias != 0 && bias != 1) throw SpecError(lineno, "bias must be 0 or 1");
            n.has_bias = bias == 1;
            if (n.k < 1 || n.stride < 1 || n.pad < 0 || n.dil < 1 || n.cout < 1)
                throw SpecError(lineno, "conv requires k,s,d,cout >= 1 and p >= 0");
            n.out_channels = n.cout;
        } else if (kind_s == "relu") {
            n.kind = LayerKind::Relu;
            n.parents.push_back(resolve(args.take_str("from")));
            n.out_channels = g.nodes_[n.parents[0]].out_channels;
        } else if (kind_s == "maxpool") {
            n.kind = LayerKind::MaxPool;
            n.parents.push_back(resolve(args.take_str("from")));
            n.k = args.take_int("k");
            n.stride = args.take_int("s");
            if (n.k < 1 || n.stride < 1) throw SpecError(lineno, "maxpool requires k,s >= 1");
            n.out_channels = g.nodes_[n.parents[0]].out_channels;
        } else if (kind_s == "upsample") {
            n.kind = LayerKind::Upsample;
            n.parents.push_back(resolve(args.take_str("from")));
            n.factor = args.take_int("f");
            if (n.factor < 2) throw SpecError(lineno, "upsample requires f >= 2");
            n.out_channels = g.nodes_[n.parents[0]].out_channels;
        } else if (kind_s == "cropconcat") {
            n.kind = LayerKind::CropConcat;
            std::string from = args.take_str("from");
            auto comma = from.find(',');
            if (comma == std::string::npos || comma == 0 || comma + 1 == from.size())
                throw SpecError(lineno, "cropconcat needs from=<a>,<b>");
            n.parents.push_back(resolve(from.substr(0, comma)));
            n.parents.push_back(resolve(from.substr(comma + 1)));
            if (!(cum[n.parents[0]] == cum[n.parents[1]]))
                throw SpecError(lineno, "cropconcat parents have different cumulative strides");
            n.out_channels = g.nodes_[n.parents[0]].out_channels +
                             g.nodes_[n.parents[1]].out_channels;
        } else if (kind_s == "output") {
            n.kind = LayerKind::Output;
            n.parents.push_back(resolve(args.take_str("from")));
            if (g.output_ >= 0) throw SpecError(lineno, "more than one output node");
            n.out_channels = g.nodes_[n.parents[0]].out_channels;
        } else {
            throw SpecError(lineno, "unknown node kind '" + kind_s + "'");
        }
        args.done();

        if (n.kind != LayerKind::Input && g.input_ < 0)
            throw SpecError(lineno, "first node must be the input");

        Rational cs;  // cumulative stride, carried for the cropconcat check
        if (!n.parents.empty()) cs = cum[n.parents[0]];
        if (n.kind == LayerKind::Conv || n.kind == LayerKind::MaxPool) cs.num *= n.stride;
        if (n.kind == LayerKind::Upsample) cs.den *= n.factor;
        cs.reduce();
        cum.push_back(cs);

        int idx = static_cast<int>(g.nodes_.size());
        if (n.kind == LayerKind::Input) g.input_ = idx;
        if (n.kind == LayerKind::Output) g.output_ = idx;
        index.emplace(name, idx);
        g.nodes_.push_back(std::move(n));
    }

    if (g.input_ < 0) throw SpecError(0, "netspec has no input node");
    if (g.output_ < 0) throw SpecError(0, "netspec has no output node");
    g.weights_.resize(g.nodes_.size());
    return g;
}

int NetworkGraph::find(const std::string& name) const {
    for (size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].name == name) return static_cast<int>(i);
    return -1;
}

void NetworkGraph::init_weights(uint64_t seed) {
    SplitMix64 rng(seed);
    for (size_t i = 0; i < nodes_.size(); ++i) {
        const LayerNode& n = nodes_[i];
        if (n.kind != LayerKind::Conv) continue;
        int cin = nodes_[n.parents[0]].out_channels;
        ConvWeights cw;
        cw.w.resize(static_cast<size_t>(n.cout) * cin * n.k * n.k);
        for (float& v : cw.w) v = rng.next_float(-0.1, 0.1);
        if (n.has_bias) {
            cw.bias.resize(n.cout);
            for (float& v : cw.bias) v = rng.next_float(-0.1, 0.1);
        }
        weights_[i] = std::move(cw);
    }
    has_weights_ = true;
}

namespace {

void put_u16le(std::ostream& os, uint16_t v) {
    char b[2] = {char(v & 0xff), char(v >> 8)};
    os.write(b, 2);
}

void put_u32le(std::ostream& os, uint32_t v) {
    char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char(v >> 24)};
    os.write(b, 4);
}

uint32_t get_u32le(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw WeightsError("truncated weights file");
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

uint16_t get_u16le(std::istream& is) {
    unsigned char b[2];
    if (!is.read(reinterpret_cast<char*>(b), 2)) throw WeightsError("truncated weights file");
    return uint16_t(b[0] | b[1] << 8);
}

void put_record(std::ostream& os, const std::string& name, uint8_t kind,
                const std::vector<uint32_t>& dims, const std::vector<float>& payload) {
    put_u16le(os, static_cast<uint16_t>(name.size()));
    os.write(name.data(), std::streamsize(name.size()));
    os.put(char(kind));
    put_u32le(os, static_cast<uint32_t>(dims.size()));
    for (uint32_t d : dims) put_u32le(os, d);
    os.write(reinterpret_cast<const char*>(payload.data()), std::streamsize(payload.size() * 4));
}

}  // namespace

void NetworkGraph::save_weights(const std::filesystem::path& path) const {
    if (!has_weights_) throw WeightsError("graph has no weights to save");
    uint32_t records = 0;
    for (const LayerNode& n : nodes_)
        if (n.kind == LayerKind::Conv) records += n.has_bias ? 2 : 1;

    std::ofstream os(path, std::ios::binary);
    if (!os) throw WeightsError("cannot open " + path.string() + " for writing");
    os.write("WTS1", 4);
    put_u32le(os, records);
    for (size_t i = 0; i < nodes_.size(); ++i) {
        const LayerNode& n = nodes_[i];
        if (n.kind != LayerKind::Conv) continue;
        int cin = nodes_[n.parents[0]].out_channels;
        const ConvWeights& cw = weights_[i];
        put_record(os, n.name, 0,
                   {uint32_t(n.cout), uint32_t(cin), uint32_t(n.k), uint32_t(n.k)}, cw.w);
        if (n.has_bias) put_record(os, n.name, 1, {uint32_t(n.cout)}, cw.bias);
    }
    if (!os) throw WeightsError("write failed for " + path.string());
}

void NetworkGraph::load_weights(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw WeightsError("cannot open " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "WTS1", 4) != 0)
        throw WeightsError(path.string() + ": bad magic");
    uint32_t records = get_u32le(is);

    std::vector<ConvWeights> loaded(nodes_.size());
    std::vector<std::array<bool, 2>> seen(nodes_.size(), {false, false});
    for (uint32_t r = 0; r < records; ++r) {
        uint16_t len = get_u16le(is);
        std::string name(len, '\0');
        if (!is.read(name.data(), len)) throw WeightsError("truncated weights file");
        int kind = is.get();
        if (kind != 0 && kind != 1)
            throw WeightsError(path.string() + ": bad record kind for '" + name + "'");
        uint32_t rank = get_u32le(is);
        if (rank > 8) throw WeightsError(path.string() + ": unreasonable rank");
        std::vector<uint32_t> dims(rank);
        uint64_t count = 1;
        for (auto& d : dims) {
            d = get_u32le(is);
            count *= d;
        }
        if (count > (uint64_t(1) << 28)) throw WeightsError(path.string() + ": oversized tensor");

        int idx = find(name);
        if (idx < 0 || nodes_[idx].kind != LayerKind::Conv)
            throw WeightsError(path.string() + ": no conv layer named '" + name + "'");
        const LayerNode& n = nodes_[idx];
        int cin = nodes_[n.parents[0]].out_channels;
        std::vector<uint32_t> expect =
            kind == 0 ? std::vector<uint32_t>{uint32_t(n.cout), uint32_t(cin), uint32_t(n.k),
                                              uint32_t(n.k)}
                      : std::vector<uint32_t>{uint32_t(n.cout)};
        if (kind == 1 && !n.has_bias)
            throw WeightsError(path.string() + ": layer '" + name + "' takes no bias");
        if (dims != expect)
            throw WeightsError(path.string() + ": shape mismatch for '" + name + "'");
        if (seen[idx][kind])
            throw WeightsError(path.string() + ": duplicate record for '" + name + "'");
        seen[idx][kind] = true;

        std::vector<float> payload(count);
        if (!is.read(reinterpret_cast<char*>(payload.data()), std::streamsize(count * 4)))
            throw WeightsError(path.string() + ": truncated payload for '" + name + "'");
        for (float v : payload)
            if (std::isnan(v)) throw WeightsError(path.string() + ": NaN in '" + name + "'");
        if (kind == 0)
            loaded[idx].w = std::move(payload);
        else
            loaded[idx].bias = std::move(payload);
    }
    if (is.peek() != std::char_traits<char>::eof())
        throw WeightsError(path.string() + ": trailing bytes");

    for (size_t i = 0; i < nodes_.size(); ++i) {
        const LayerNode& n = nodes_[i];
        if (n.kind != LayerKind::Conv) continue;
        if (!seen[i][0])
            throw WeightsError(path.string() + ": missing weights for '" + n.name + "'");
        if (n.has_bias && !seen[i][1])
            throw WeightsError(path.string() + ": missing bias for '" + n.name + "'");
    }
    weights_ = std::move(loaded);
    has_weights_ = true;
}

Raster NetworkGraph::forward(const Raster& input) const {
    if (input.dtype() != Dtype::F32) throw ShapeError("forward input must be F32");
    if (input.channels() != input_channels())
        throw ShapeError("input has " + std::to_string(input.channels()) +
                         " channels, net expects " + std::to_string(input_channels()));

    // Evaluate only what the output depends on, freeing each intermediate
    // after its last use so peak memory stays near the widest layer.
    std::vector<bool> needed(nodes_.size(), false);
    std::vector<int> pending_uses(nodes_.size(), 0);
    {
        std::vector<int> stack{output_};
        needed[output_] = true;
        while (!stack.empty()) {
            int i = stack.back();
            stack.pop_back();
            for (int p : nodes_[i].parents) {
                ++pending_uses[p];
                if (!needed[p]) {
                    needed[p] = true;
                    stack.push_back(p);
                }
            }
        }
    }

    std::vector<Raster> value(nodes_.size());
    auto release_parents = [&](int i) {
        for (int p : nodes_[i].parents)
            if (--pending_uses[p] == 0) value[p] = Raster();
    };

    for (size_t i = 0; i < nodes_.size(); ++i) {
        if (!needed[i]) continue;
        const LayerNode& n = nodes_[i];
        switch (n.kind) {
            case LayerKind::Input:
                value[i] = input;
                break;
            case LayerKind::Conv: {
                const Raster& src = value[n.parents[0]];
                if (!has_weights_) throw Error("forward requires initialized weights");
                kernels::ConvShape cs{src.width(), src.height(), src.channels(),
                                      n.k, n.stride, n.pad, n.dil, n.cout};
                if (cs.out_w() < 1 || cs.out_h() < 1)
                    throw GeometryError("node '" + n.name + "': output size underflows at input " +
                                        std::to_string(src.width()) + "x" +
                                        std::to_string(src.height()));
                Raster dst(cs.out_w(), cs.out_h(), n.cout, Dtype::F32);
                const ConvWeights& cw = weights_[i];
                kernels::conv2d(src.f32(), cw.w.data(),
                                n.has_bias ? cw.bias.data() : nullptr, dst.f32(), cs);
                value[i] = std::move(dst);
                break;
            }
            case LayerKind::Relu: {
                const Raster& src = value[n.parents[0]];
                Raster dst(src.width(), src.height(), src.channels(), Dtype::F32);
                kernels::relu(src.f32(), dst.f32(), src.total_size());
                value[i] = std::move(dst);
                break;
            }
            case LayerKind::MaxPool: {
                const Raster& src = value[n.parents[0]];
                int ow = kernels::pool_out_size(src.width(), n.k, n.stride);
                int oh = kernels::pool_out_size(src.height(), n.k, n.stride);
                if (ow < 1 || oh < 1)
                    throw GeometryError("node '" + n.name + "': output size underflows at input " +
                                        std::to_string(src.width()) + "x" +
                                        std::to_string(src.height()));
                Raster dst(ow, oh, src.channels(), Dtype::F32);
                for (int c = 0; c < src.channels(); ++c)
                    kernels::maxpool2d(src.f32_plane(c), dst.f32_plane(c), src.width(),
                                       src.height(), n.k, n.stride);
                value[i] = std::move(dst);
                break;
            }
            case LayerKind::Upsample: {
                const Raster& src = value[n.parents[0]];
                Raster dst(src.width() * n.factor, src.height() * n.factor, src.channels(),
                           Dtype::F32);
                for (int c = 0; c < src.channels(); ++c)
                    kernels::upsample_nearest(src.f32_plane(c), dst.f32_plane(c), src.width(),
                                              src.height(), n.factor);
                value[i] = std::move(dst);
                break;
            }
            case LayerKind::CropConcat: {
                const Raster& a = value[n.parents[0]];
                const Raster& b = value[n.parents[1]];
                int dw = a.width() - b.width(), dh = a.height() - b.height();
                if (dw < 0 || dh < 0 || dw % 2 || dh % 2)
                    throw GeometryError("node '" + n.name + "': cannot center-crop " +
                                        std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                                        " to " + std::to_string(b.width()) + "x" +
                                        std::to_string(b.height()));
                Raster dst(b.width(), b.height(), a.channels() + b.channels(), Dtype::F32);
                for (int c = 0; c < a.channels(); ++c)
                    for (int y = 0; y < b.height(); ++y)
                        std::memcpy(dst.f32_plane(c) + size_t(y) * b.width(),
                                    a.f32_plane(c) + size_t(y + dh / 2) * a.width() + dw / 2,
                                    sizeof(float) * b.width());
                for (int c = 0; c < b.channels(); ++c)
                    std::memcpy(dst.f32_plane(a.channels() + c), b.f32_plane(c),
                                sizeof(float) * b.plane_size());
                value[i] = std::move(dst);
                break;
            }
            case LayerKind::Output:
                value[i] = value[n.parents[0]];
                break;
        }
        release_parents(static_cast<int>(i));
    }
    return std::move(value[output_]);
}

}  // namespace tileseg
