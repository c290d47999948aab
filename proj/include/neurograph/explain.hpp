// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "neurograph/gat.hpp"
#include "neurograph/graph.hpp"

namespace neurograph {

/// Directed attention graph over one band's nodes. edges[{u, v}] holds the
/// coefficient alpha_{v,u} of the message u -> v.
struct AttentionGraph {
    std::string name;                 // band name or "combined"
    std::vector<std::string> labels;
    std::map<std::pair<std::size_t, std::size_t>, double> edges;
    std::vector<double> self_attention;   // alpha_{v,v}
    std::vector<double> cross_attention;  // summed alpha from other layers into v

    std::size_t node_count() const noexcept { return labels.size(); }
    friend bool operator==(const AttentionGraph&, const AttentionGraph&) = default;
};

struct CrossAttention {
    std::size_t label = 0;
    Band from = Band::alpha1;
    Band to = Band::alpha1;
    double alpha = 0.0;
};

struct AttentionExtraction {
    std::vector<AttentionGraph> bands;  // graph layer order
    std::vector<CrossAttention> cross;
    std::size_t layer = 0;
};

/// Eval-mode attention of one GAT layer (default: last), averaged over heads
/// and split per band. Throws NumericError when parameters are not finite.
AttentionExtraction extract_attention(const GatModel& model, const MultiLayerGraph& graph,
                                      std::optional<std::size_t> layer = {});

/// Per ordered pair, max over the graphs where the pair is present. Throws
/// StructuralError on mismatched node sets.
AttentionGraph combine_bands(std::span<const AttentionGraph> graphs);

/// c(v) = sum of alpha over incoming non-self edges.
std::vector<double> weighted_in_degree(const AttentionGraph& graph);

// ---------------------------------------------------------------------------
// Classical metrics on undirected weighted graphs (self-loops ignored)

/// Onnela clustering with weights normalized by the largest non-self weight.
std::vector<double> weighted_clustering(std::size_t n, std::span<const Edge> edges);
std::vector<double> weighted_clustering(const BandLayer& layer);

/// Brandes edge betweenness over unordered pairs, aligned with `edges`
/// (self-loops get 0). Weighted mode uses length 1/weight and throws DataError
/// on a non-positive weight.
std::vector<double> edge_betweenness(std::size_t n, std::span<const Edge> edges, bool weighted);
std::vector<double> edge_betweenness(const BandLayer& layer, bool weighted);

/// Union of the layers' non-self edges with the max weight per pair.
std::vector<Edge> combine_layer_edges(std::span<const BandLayer> layers);

// ---------------------------------------------------------------------------
// Annotated graphs and export

struct AnnotatedNode {
    std::string label;
    double centrality = 0.0;
    double clustering = 0.0;
    double self_attention = 0.0;
    double cross_attention = 0.0;
    friend bool operator==(const AnnotatedNode&, const AnnotatedNode&) = default;
};

struct AnnotatedEdge {
    std::size_t source = 0;
    std::size_t target = 0;
    double weight = 0.0;  // attention
    EdgeType type = EdgeType::intra;
    double betweenness = 0.0;
    double llc = 0.0;
    friend bool operator==(const AnnotatedEdge&, const AnnotatedEdge&) = default;
};

struct AnnotatedGraph {
    std::string name;
    std::vector<AnnotatedNode> nodes;
    std::vector<AnnotatedEdge> edges;
    friend bool operator==(const AnnotatedGraph&, const AnnotatedGraph&) = default;
};

/// Joins attention with centrality, clustering and betweenness computed on the
/// given undirected LLC edges over the same nodes.
AnnotatedGraph annotate(const AttentionGraph& attention, std::span<const Edge> llc_edges,
                        bool weighted_betweenness = true);

enum class ExportFormat { json, graphml, dot };

ExportFormat parse_export_format(std::string_view name);
std::string_view export_extension(ExportFormat f);

nlohmann::ordered_json annotated_to_json(const AnnotatedGraph& g);
AnnotatedGraph annotated_from_json(const nlohmann::json& j);
std::string to_graphml(const AnnotatedGraph& g);
std::string to_dot(const AnnotatedGraph& g);
std::string format_graph(const AnnotatedGraph& g, ExportFormat f);
void export_graph(const AnnotatedGraph& g, ExportFormat f, const std::filesystem::path& path);

/// graph,node,label,in_degree,clustering,self_attention,cross_attention
std::string centrality_csv(std::span<const AnnotatedGraph> graphs);

struct ExplainOptions {
    std::vector<Band> bands{Band::alpha1, Band::alpha2, Band::beta1};
    std::optional<std::size_t> layer;  // default: last GAT layer
    bool weighted_betweenness = true;
};

/// One annotated graph per requested band followed by the band-max combined
/// graph.
std::vector<AnnotatedGraph> explain_patient(const GatModel& model, const MultiLayerGraph& graph,
                                            const ExplainOptions& options = {});

/// Writes <prefix>_<band>.<ext>, <prefix>_combined.<ext> and
/// <prefix>_centrality.csv under `dir`. Returns the written paths.
std::vector<std::filesystem::path> write_explain(std::span<const AnnotatedGraph> graphs,
                                                 ExportFormat format,
                                                 const std::filesystem::path& dir,
                                                 const std::string& prefix);

} // namespace neurograph
