#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tileseg/raster.hpp"

namespace tileseg {

enum class LayerKind { Input, Conv, Relu, MaxPool, Upsample, CropConcat, Output };

const char* layer_kind_name(LayerKind k);

struct LayerNode {
    std::string name;
    LayerKind kind = LayerKind::Input;
    std::vector<int> parents;  // indices into the node list; declared before use

    // Input
    int channels = 0;
    // Conv: weights [cout][cin][k][k]; MaxPool reuses k/stride
    int k = 0, stride = 1, pad = 0, dil = 1, cout = 0;
    bool has_bias = true;
    // Upsample
    int factor = 0;

    int out_channels = 0;  // resolved at parse time
};

struct ConvWeights {
    std::vector<float> w;     // [cout][cin][k][k] row-major
    std::vector<float> bias;  // [cout], empty when has_bias == 0
};

// Layer DAG in declaration order (which is already topological) plus
// optional per-conv weights.
class NetworkGraph {
  public:
    static NetworkGraph parse(const std::string& text);

    const std::vector<LayerNode>& nodes() const { return nodes_; }
    const LayerNode& node(int i) const { return nodes_[i]; }
    int find(const std::string& name) const;  // -1 if absent
    int input_index() const { return input_; }
    int output_index() const { return output_; }
    int input_channels() const { return nodes_[input_].channels; }
    int num_classes() const { return nodes_[output_].out_channels; }

    bool has_weights() const { return has_weights_; }
    const ConvWeights& weights(int node) const { return weights_[node]; }

    // Fill every conv tensor from one SplitMix64 stream: nodes in declaration
    // order, [cout][cin][kh][kw] row-major, bias after weights.
    void init_weights(uint64_t seed);

    void save_weights(const std::filesystem::path& path) const;
    void load_weights(const std::filesystem::path& path);

    // One forward pass.  Throws GeometryError naming the first node whose
    // spatial size underflows; ShapeError on channel mismatch.
    Raster forward(const Raster& input) const;

  private:
    std::vector<LayerNode> nodes_;
    std::vector<ConvWeights> weights_;  // parallel to nodes_, empty for non-conv
    int input_ = -1, output_ = -1;
    bool has_weights_ = false;
};

// Analytic per-net geometry facts.
class NetGeometry {
  public:
    explicit NetGeometry(const NetworkGraph& net);

    // Equivariance period P: max cumulative stride over all nodes.
    int delta_tot() const { return delta_tot_; }
    // Cumulative stride at the output node (output-grid pitch in input px).
    int out_stride() const { return out_stride_; }
    // Input pixels trimmed per side between input and output coordinates,
    // measured in the linear size regime: (n0 - out_stride * output_size(n0)) / 2.
    double margin_in() const { return margin_in_; }
    // Reference input size where the linear regime was established.
    int linear_probe_size() const { return probe_; }
    // Upper bound, in input pixels, on how far outside a window the input can
    // influence any output pixel (sum of tap reaches).
    int influence_reach() const { return reach_; }

    // Output spatial size for a square input; throws GeometryError (naming
    // the first offending node) when any intermediate size underflows.
    int output_size(int input_size) const;
    std::optional<int> try_output_size(int input_size) const;
    int min_input_size() const { return min_input_; }

    // Smallest per-side output margin C such that every output pixel at
    // border distance >= C has a receptive field free of zero-padded taps.
    int contamination_margin(int input_size) const;

    // Per-node cumulative strides (all integral once construction succeeds).
    const std::vector<int>& cumulative_strides() const { return cum_stride_; }

  private:
    std::vector<LayerNode> nodes_;
    std::vector<int> cum_stride_;
    int input_ = -1, output_ = -1;
    int delta_tot_ = 1, out_stride_ = 1, min_input_ = 1, probe_ = 0, reach_ = 0;
    double margin_in_ = 0.0;
};

}  // namespace tileseg
