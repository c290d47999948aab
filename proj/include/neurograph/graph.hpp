// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace neurograph {

/// Number of Brodmann areas per hemisphere pair in the parcellation.
inline constexpr std::size_t kAreaCount = 84;

struct BrodmannArea {
    std::size_t index = 0;
    std::string label;                 // e.g. "BA17-L"
    std::array<double, 3> centroid{};  // millimeters
};

// ---------------------------------------------------------------------------
// Frequency bands

enum class Band : std::uint8_t { delta = 0, theta, alpha1, alpha2, beta1 };

inline constexpr std::size_t kBandCount = 5;
inline constexpr std::array<Band, kBandCount> kAllBands{
    Band::delta, Band::theta, Band::alpha1, Band::alpha2, Band::beta1};

struct BandRange {
    double low_hz;
    double high_hz;
};

constexpr BandRange band_range(Band b) {
    switch (b) {
    case Band::delta: return {2.0, 4.0};
    case Band::theta: return {4.0, 8.0};
    case Band::alpha1: return {8.0, 10.5};
    case Band::alpha2: return {10.5, 13.0};
    case Band::beta1: return {13.0, 20.0};
    }
    return {0.0, 0.0};
}

constexpr std::size_t band_index(Band b) { return static_cast<std::size_t>(b); }

/// Canonical long name: "delta", "theta", "alpha1", "alpha2", "beta1".
std::string_view band_name(Band b);
/// Short CLI name: "d", "t", "a1", "a2", "b1".
std::string_view band_short_name(Band b);
/// Accepts either the long or the short name.
Band parse_band(std::string_view name);
/// Comma separated list, e.g. "a1,a2,b1".
std::vector<Band> parse_band_list(std::string_view list);

// ---------------------------------------------------------------------------
// Connectivity

/// Symmetric nonnegative LLC weight matrix for one band. Construction
/// validates the invariants and zeroes the diagonal.
class ConnectivityMatrix {
public:
    static constexpr double kSymmetryTolerance = 1e-9;

    ConnectivityMatrix(Band band, std::size_t n, std::vector<double> weights);

    Band band() const noexcept { return band_; }
    std::size_t size() const noexcept { return n_; }
    double operator()(std::size_t i, std::size_t j) const { return weights_[i * n_ + j]; }
    std::span<const double> data() const noexcept { return weights_; }

    friend bool operator==(const ConnectivityMatrix&, const ConnectivityMatrix&) = default;

private:
    Band band_;
    std::size_t n_;
    std::vector<double> weights_;
};

// ---------------------------------------------------------------------------
// Layers and the multi-layer graph

enum class EdgeType : std::uint8_t { intra = 0, cross = 1, self = 2 };
inline constexpr std::size_t kEdgeTypeCount = 3;

std::string_view edge_type_name(EdgeType t);
EdgeType parse_edge_type(std::string_view name);

/// Undirected edge, stored with u <= v.
struct Edge {
    std::size_t u = 0;
    std::size_t v = 0;
    double weight = 1.0;
    EdgeType type = EdgeType::intra;

    friend bool operator==(const Edge&, const Edge&) = default;
};

/// One rewired band layer over `labels.size()` nodes. Edges are canonicalized
/// (u <= v, sorted by (u, v)); duplicates and out-of-range ids are rejected.
class BandLayer {
public:
    BandLayer(Band band, std::vector<std::string> labels, std::vector<Edge> edges);

    Band band() const noexcept { return band_; }
    std::size_t node_count() const noexcept { return labels_.size(); }
    const std::vector<std::string>& labels() const noexcept { return labels_; }
    const std::vector<Edge>& edges() const noexcept { return edges_; }

    bool has_self_loop(std::size_t v) const;
    bool all_self_loops() const;
    /// Number of non-self-loop edges.
    std::size_t intra_edge_count() const;

    friend bool operator==(const BandLayer&, const BandLayer&) = default;

private:
    Band band_;
    std::vector<std::string> labels_;
    std::vector<Edge> edges_;
};

/// Global node id in layer-major order: layer * nodes_per_layer + label.
std::size_t global_id(std::size_t label_index, std::size_t layer_index, std::size_t num_layers,
                      std::size_t nodes_per_layer = kAreaCount);

/// Band layers plus same-label cross-layer edges and optional node features.
/// Immutable after construction; `with_features` returns a modified copy.
class MultiLayerGraph {
public:
    MultiLayerGraph(std::vector<BandLayer> layers, std::vector<Edge> cross_edges);

    std::size_t layer_count() const noexcept { return layers_.size(); }
    std::size_t nodes_per_layer() const noexcept { return layers_.front().node_count(); }
    std::size_t node_count() const noexcept { return layer_count() * nodes_per_layer(); }
    const std::vector<BandLayer>& layers() const noexcept { return layers_; }
    const std::vector<Edge>& cross_edges() const noexcept { return cross_edges_; }

    std::size_t global_id(std::size_t label_index, std::size_t layer_index) const;
    std::size_t layer_of(std::size_t node) const { return node / nodes_per_layer(); }
    std::size_t label_of(std::size_t node) const { return node % nodes_per_layer(); }

    /// All edges in global ids: intra and self edges of every layer, then the
    /// cross edges.
    std::vector<Edge> global_edges() const;

    std::size_t feature_dim() const noexcept { return feature_dim_; }
    bool has_features() const noexcept { return feature_dim_ > 0; }
    /// Row-major node_count() x feature_dim().
    const std::vector<double>& features() const noexcept { return features_; }
    std::span<const double> node_feature(std::size_t node) const;

    MultiLayerGraph with_features(std::size_t dim, std::vector<double> features) const;

    friend bool operator==(const MultiLayerGraph&, const MultiLayerGraph&) = default;

private:
    std::vector<BandLayer> layers_;
    std::vector<Edge> cross_edges_;
    std::size_t feature_dim_ = 0;
    std::vector<double> features_;
};

/// Assembles layers into a multi-layer graph, adding one weight-1 cross edge
/// per label per unordered layer pair.
MultiLayerGraph build_multilayer(std::vector<BandLayer> layers);

/// {nodes:[{id,label,layer,band[,features]}], edges:[{u,v,weight,type}]}, node
/// ids ascending, edges in `global_edges()` order.
nlohmann::ordered_json graph_to_json(const MultiLayerGraph& graph);
MultiLayerGraph graph_from_json(const nlohmann::ordered_json& j);

} // namespace neurograph
