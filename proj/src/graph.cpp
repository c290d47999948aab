// SPDX-License-Identifier: Apache-2.0
#include "neurograph/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "neurograph/errors.hpp"

namespace neurograph {

namespace {

constexpr std::array<std::string_view, kBandCount> kLongNames{"delta", "theta", "alpha1", "alpha2",
                                                              "beta1"};
constexpr std::array<std::string_view, kBandCount> kShortNames{"d", "t", "a1", "a2", "b1"};

} // namespace

std::string_view band_name(Band b) { return kLongNames[band_index(b)]; }
std::string_view band_short_name(Band b) { return kShortNames[band_index(b)]; }

Band parse_band(std::string_view name) {
    for (std::size_t i = 0; i < kBandCount; ++i) {
        if (name == kLongNames[i] || name == kShortNames[i]) return kAllBands[i];
    }
    throw ArgumentError("unknown frequency band '" + std::string(name) + "'");
}

std::vector<Band> parse_band_list(std::string_view list) {
    std::vector<Band> out;
    std::size_t start = 0;
    while (start <= list.size()) {
        auto end = list.find(',', start);
        if (end == std::string_view::npos) end = list.size();
        auto item = list.substr(start, end - start);
        if (!item.empty()) out.push_back(parse_band(item));
        start = end + 1;
    }
    if (out.empty()) throw ArgumentError("empty band list");
    return out;
}

std::string_view edge_type_name(EdgeType t) {
    switch (t) {
    case EdgeType::intra: return "intra";
    case EdgeType::cross: return "cross";
    case EdgeType::self: return "self";
    }
    return "intra";
}

EdgeType parse_edge_type(std::string_view name) {
    if (name == "intra") return EdgeType::intra;
    if (name == "cross") return EdgeType::cross;
    if (name == "self") return EdgeType::self;
    throw ArgumentError("unknown edge type '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

ConnectivityMatrix::ConnectivityMatrix(Band band, std::size_t n, std::vector<double> weights)
    : band_(band), n_(n), weights_(std::move(weights)) {
    if (weights_.size() != n_ * n_) {
        throw DataError("connectivity matrix has " + std::to_string(weights_.size()) +
                        " entries, expected " + std::to_string(n_ * n_));
    }
    for (std::size_t i = 0; i < n_; ++i) {
        weights_[i * n_ + i] = 0.0;
        for (std::size_t j = 0; j < n_; ++j) {
            const double w = weights_[i * n_ + j];
            if (!std::isfinite(w)) {
                throw DataError("non-finite weight at (" + std::to_string(i) + "," +
                                std::to_string(j) + ")");
            }
            if (w < 0.0) {
                throw DataError("negative weight at (" + std::to_string(i) + "," + std::to_string(j) +
                                ")");
            }
            if (j > i && std::abs(w - weights_[j * n_ + i]) > kSymmetryTolerance) {
                throw DataError("asymmetric weight at (" + std::to_string(i) + "," +
                                std::to_string(j) + ")");
            }
        }
    }
}

// ---------------------------------------------------------------------------

BandLayer::BandLayer(Band band, std::vector<std::string> labels, std::vector<Edge> edges)
    : band_(band), labels_(std::move(labels)), edges_(std::move(edges)) {
    const auto n = labels_.size();
    for (auto& e : edges_) {
        if (e.u > e.v) std::swap(e.u, e.v);
        if (e.v >= n) {
            throw StructuralError("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) +
                                  ") outside layer of " + std::to_string(n) + " nodes");
        }
        if (e.type == EdgeType::cross) throw StructuralError("cross edge inside a band layer");
        e.type = (e.u == e.v) ? EdgeType::self : EdgeType::intra;
    }
    std::sort(edges_.begin(), edges_.end(),
              [](const Edge& a, const Edge& b) { return std::tie(a.u, a.v) < std::tie(b.u, b.v); });
    auto dup = std::adjacent_find(edges_.begin(), edges_.end(), [](const Edge& a, const Edge& b) {
        return a.u == b.u && a.v == b.v;
    });
    if (dup != edges_.end()) {
        throw StructuralError("duplicate edge (" + std::to_string(dup->u) + "," +
                              std::to_string(dup->v) + ")");
    }
}

bool BandLayer::has_self_loop(std::size_t v) const {
    return std::binary_search(edges_.begin(), edges_.end(), Edge{v, v, 0.0, EdgeType::self},
                              [](const Edge& a, const Edge& b) {
                                  return std::tie(a.u, a.v) < std::tie(b.u, b.v);
                              });
}

bool BandLayer::all_self_loops() const {
    for (std::size_t v = 0; v < node_count(); ++v) {
        if (!has_self_loop(v)) return false;
    }
    return true;
}

std::size_t BandLayer::intra_edge_count() const {
    return static_cast<std::size_t>(
        std::count_if(edges_.begin(), edges_.end(), [](const Edge& e) { return e.u != e.v; }));
}

// ---------------------------------------------------------------------------

std::size_t global_id(std::size_t label_index, std::size_t layer_index, std::size_t num_layers,
                      std::size_t nodes_per_layer) {
    if (label_index >= nodes_per_layer || layer_index >= num_layers) {
        throw ArgumentError("node (" + std::to_string(label_index) + "," +
                            std::to_string(layer_index) + ") out of range");
    }
    return layer_index * nodes_per_layer + label_index;
}

MultiLayerGraph::MultiLayerGraph(std::vector<BandLayer> layers, std::vector<Edge> cross_edges)
    : layers_(std::move(layers)), cross_edges_(std::move(cross_edges)) {
    if (layers_.empty()) throw ArgumentError("multi-layer graph needs at least one layer");
    const auto& labels = layers_.front().labels();
    for (const auto& layer : layers_) {
        if (layer.labels() != labels) {
            throw StructuralError("band layers do not share the same label set");
        }
    }
    const auto n = node_count();
    for (const auto& e : cross_edges_) {
        if (e.u >= n || e.v >= n) throw StructuralError("cross edge outside graph");
        if (label_of(e.u) != label_of(e.v) || layer_of(e.u) == layer_of(e.v)) {
            throw StructuralError("cross edge must join the same label in distinct layers");
        }
    }
}

std::size_t MultiLayerGraph::global_id(std::size_t label_index, std::size_t layer_index) const {
    return neurograph::global_id(label_index, layer_index, layer_count(), nodes_per_layer());
}

std::vector<Edge> MultiLayerGraph::global_edges() const {
    std::vector<Edge> out;
    std::size_t total = cross_edges_.size();
    for (const auto& l : layers_) total += l.edges().size();
    out.reserve(total);
    const auto n = nodes_per_layer();
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        for (auto e : layers_[li].edges()) {
            e.u += li * n;
            e.v += li * n;
            out.push_back(e);
        }
    }
    out.insert(out.end(), cross_edges_.begin(), cross_edges_.end());
    return out;
}

std::span<const double> MultiLayerGraph::node_feature(std::size_t node) const {
    return std::span<const double>(features_).subspan(node * feature_dim_, feature_dim_);
}

MultiLayerGraph MultiLayerGraph::with_features(std::size_t dim, std::vector<double> features) const {
    if (features.size() != dim * node_count()) {
        throw ShapeError("feature matrix has " + std::to_string(features.size()) +
                         " entries, expected " + std::to_string(dim * node_count()));
    }
    MultiLayerGraph copy = *this;
    copy.feature_dim_ = dim;
    copy.features_ = std::move(features);
    return copy;
}

MultiLayerGraph build_multilayer(std::vector<BandLayer> layers) {
    if (layers.empty()) throw ArgumentError("build_multilayer: empty layer list");
    const auto n = layers.front().node_count();
    const auto num_layers = layers.size();
    std::vector<Edge> cross;
    cross.reserve(n * num_layers * (num_layers - 1) / 2);
    for (std::size_t a = 0; a < num_layers; ++a) {
        for (std::size_t b = a + 1; b < num_layers; ++b) {
            for (std::size_t i = 0; i < n; ++i) {
                cross.push_back({a * n + i, b * n + i, 1.0, EdgeType::cross});
            }
        }
    }
    return MultiLayerGraph(std::move(layers), std::move(cross));
}

// ---------------------------------------------------------------------------

nlohmann::ordered_json graph_to_json(const MultiLayerGraph& graph) {
    using nlohmann::ordered_json;
    ordered_json nodes = ordered_json::array();
    const auto n = graph.nodes_per_layer();
    for (std::size_t id = 0; id < graph.node_count(); ++id) {
        const auto& layer = graph.layers()[graph.layer_of(id)];
        ordered_json node;
        node["id"] = id;
        node["label"] = layer.labels()[graph.label_of(id)];
        node["layer"] = id / n;
        node["band"] = band_name(layer.band());
        if (graph.has_features()) {
            auto f = graph.node_feature(id);
            node["features"] = std::vector<double>(f.begin(), f.end());
        }
        nodes.push_back(std::move(node));
    }
    ordered_json edges = ordered_json::array();
    for (const auto& e : graph.global_edges()) {
        ordered_json edge;
        edge["u"] = e.u;
        edge["v"] = e.v;
        edge["weight"] = e.weight;
        edge["type"] = edge_type_name(e.type);
        edges.push_back(std::move(edge));
    }
    ordered_json out;
    out["nodes"] = std::move(nodes);
    out["edges"] = std::move(edges);
    return out;
}

MultiLayerGraph graph_from_json(const nlohmann::ordered_json& j) {
    try {
        const auto& nodes = j.at("nodes");
        std::vector<std::string> labels;
        std::vector<Band> bands;
        std::size_t feature_dim = 0;
        std::vector<double> features;
        for (std::size_t id = 0; id < nodes.size(); ++id) {
            const auto& node = nodes[id];
            if (node.at("id").get<std::size_t>() != id) {
                throw DataError("graph JSON node ids must be ascending from 0");
            }
            const auto layer = node.at("layer").get<std::size_t>();
            if (layer == bands.size()) {
                bands.push_back(parse_band(node.at("band").get<std::string>()));
            } else if (layer + 1 != bands.size()) {
                throw DataError("graph JSON nodes must be layer-major");
            }
            if (layer == 0) labels.push_back(node.at("label").get<std::string>());
            if (node.contains("features")) {
                auto f = node.at("features").get<std::vector<double>>();
                if (id == 0) feature_dim = f.size();
                if (f.size() != feature_dim) throw DataError("ragged node features");
                features.insert(features.end(), f.begin(), f.end());
            }
        }
        if (bands.empty()) throw DataError("graph JSON has no nodes");
        const auto n = labels.size();
        if (n * bands.size() != nodes.size()) throw DataError("graph JSON layers differ in size");

        std::vector<std::vector<Edge>> per_layer(bands.size());
        std::vector<Edge> cross;
        for (const auto& je : j.at("edges")) {
            Edge e{je.at("u").get<std::size_t>(), je.at("v").get<std::size_t>(),
                   je.at("weight").get<double>(), parse_edge_type(je.at("type").get<std::string>())};
            if (e.type == EdgeType::cross) {
                cross.push_back(e);
                continue;
            }
            const auto layer = e.u / n;
            if (layer >= bands.size() || e.v / n != layer) {
                throw DataError("intra edge spans layers in graph JSON");
            }
            e.u -= layer * n;
            e.v -= layer * n;
            per_layer[layer].push_back(e);
        }
        std::vector<BandLayer> layers;
        for (std::size_t l = 0; l < bands.size(); ++l) {
            layers.emplace_back(bands[l], labels, std::move(per_layer[l]));
        }
        MultiLayerGraph g(std::move(layers), std::move(cross));
        if (feature_dim > 0) g = g.with_features(feature_dim, std::move(features));
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed graph JSON: ") + e.what());
    }
}

} // namespace neurograph
