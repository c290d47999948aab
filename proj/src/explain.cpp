// SPDX-License-Identifier: Apache-2.0
#include "neurograph/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <queue>

#include "neurograph/errors.hpp"
#include "neurograph/io.hpp"

namespace neurograph {

AttentionExtraction extract_attention(const GatModel& model, const MultiLayerGraph& graph,
                                      std::optional<std::size_t> layer) {
    for (const auto& p : model.parameters()) {
        if (!p.var.value().all_finite()) throw NumericError("parameter " + p.name + " is not finite");
    }
    const auto& cfg = model.config();
    const std::size_t which = layer.value_or(cfg.num_layers - 1);
    if (which >= cfg.num_layers) {
        throw ArgumentError("attention layer " + std::to_string(which) + " out of range");
    }
    const auto batch = make_batch(graph);
    const auto result = forward(model, batch, false);
    const Tensor& alpha = result.attention.at(which).alpha;
    const auto heads = alpha.cols();

    AttentionExtraction out;
    out.layer = which;
    const auto n = graph.nodes_per_layer();
    std::vector<std::string> labels = graph.layers().front().labels();
    for (const auto& l : graph.layers()) {
        AttentionGraph g;
        g.name = std::string(band_name(l.band()));
        g.labels = labels;
        g.self_attention.assign(n, 0.0);
        g.cross_attention.assign(n, 0.0);
        out.bands.push_back(std::move(g));
    }
    for (std::size_t e = 0; e < batch.src.size(); ++e) {
        double a = 0.0;
        for (std::size_t h = 0; h < heads; ++h) a += alpha(e, h);
        a /= static_cast<double>(heads);
        const auto s = batch.src[e];
        const auto d = batch.dst[e];
        const auto ls = graph.layer_of(s);
        const auto ld = graph.layer_of(d);
        auto& g = out.bands[ld];
        switch (static_cast<EdgeType>(batch.edge_type[e])) {
        case EdgeType::self: g.self_attention[graph.label_of(d)] = a; break;
        case EdgeType::intra: g.edges[{graph.label_of(s), graph.label_of(d)}] = a; break;
        case EdgeType::cross:
            g.cross_attention[graph.label_of(d)] += a;
            out.cross.push_back({graph.label_of(d), graph.layers()[ls].band(), graph.layers()[ld].band(), a});
            break;
        }
    }
    return out;
}

AttentionGraph combine_bands(std::span<const AttentionGraph> graphs) {
    if (graphs.empty()) throw ArgumentError("combine_bands: no graphs");
    AttentionGraph out;
    out.name = "combined";
    out.labels = graphs.front().labels;
    const auto n = out.labels.size();
    out.self_attention.assign(n, 0.0);
    out.cross_attention.assign(n, 0.0);
    for (const auto& g : graphs) {
        if (g.labels != out.labels) throw StructuralError("combine_bands: node sets differ");
        for (const auto& [pair, a] : g.edges) {
            auto [it, inserted] = out.edges.emplace(pair, a);
            if (!inserted) it->second = std::max(it->second, a);
        }
        for (std::size_t v = 0; v < n; ++v) {
            if (v < g.self_attention.size()) out.self_attention[v] = std::max(out.self_attention[v], g.self_attention[v]);
            if (v < g.cross_attention.size()) out.cross_attention[v] = std::max(out.cross_attention[v], g.cross_attention[v]);
        }
    }
    return out;
}

std::vector<double> weighted_in_degree(const AttentionGraph& graph) {
    std::vector<double> c(graph.node_count(), 0.0);
    for (const auto& [pair, a] : graph.edges) {
        if (pair.first != pair.second) c[pair.second] += a;
    }
    return c;
}

// ---------------------------------------------------------------------------

namespace {

struct Adjacent {
    std::size_t node;
    std::size_t edge;
};

std::vector<std::vector<Adjacent>> adjacency(std::size_t n, std::span<const Edge> edges) {
    std::vector<std::vector<Adjacent>> adj(n);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const auto& e = edges[i];
        if (e.u >= n || e.v >= n) throw StructuralError("edge endpoint out of range");
        if (e.u == e.v) continue;
        adj[e.u].push_back({e.v, i});
        adj[e.v].push_back({e.u, i});
    }
    return adj;
}

} // namespace

std::vector<double> weighted_clustering(std::size_t n, std::span<const Edge> edges) {
    std::vector<std::map<std::size_t, double>> w(n);
    double max_w = 0.0;
    for (const auto& e : edges) {
        if (e.u >= n || e.v >= n) throw StructuralError("edge endpoint out of range");
        if (e.u == e.v) continue;
        w[e.u][e.v] = e.weight;
        w[e.v][e.u] = e.weight;
        max_w = std::max(max_w, e.weight);
    }
    std::vector<double> c(n, 0.0);
    if (max_w <= 0.0) return c;
    for (std::size_t v = 0; v < n; ++v) {
        const auto k = w[v].size();
        if (k < 2) continue;
        double s = 0.0;
        for (const auto& [a, wva] : w[v]) {
            for (const auto& [b, wvb] : w[v]) {
                if (a == b) continue;
                const auto it = w[a].find(b);
                if (it == w[a].end()) continue;
                s += std::cbrt((wva / max_w) * (wvb / max_w) * (it->second / max_w));
            }
        }
        c[v] = s / static_cast<double>(k * (k - 1));
    }
    return c;
}

std::vector<double> weighted_clustering(const BandLayer& layer) {
    return weighted_clustering(layer.node_count(), layer.edges());
}

std::vector<double> edge_betweenness(std::size_t n, std::span<const Edge> edges, bool weighted) {
    if (weighted) {
        for (const auto& e : edges) {
            if (e.u != e.v && !(e.weight > 0.0)) {
                throw DataError("edge betweenness: non-positive weight on edge " + std::to_string(e.u) + "-" +
                                std::to_string(e.v));
            }
        }
    }
    const auto adj = adjacency(n, edges);
    std::vector<double> eb(edges.size(), 0.0);
    std::vector<double> dist(n), sigma(n), delta(n);
    std::vector<std::vector<Adjacent>> pred(n);
    std::vector<std::size_t> order;
    constexpr double inf = std::numeric_limits<double>::infinity();

    for (std::size_t s = 0; s < n; ++s) {
        std::fill(dist.begin(), dist.end(), inf);
        std::fill(sigma.begin(), sigma.end(), 0.0);
        std::fill(delta.begin(), delta.end(), 0.0);
        for (auto& p : pred) p.clear();
        order.clear();
        dist[s] = 0.0;
        sigma[s] = 1.0;
        if (!weighted) {
            std::queue<std::size_t> q;
            q.push(s);
            while (!q.empty()) {
                const auto v = q.front();
                q.pop();
                order.push_back(v);
                for (const auto& [w, e] : adj[v]) {
                    if (dist[w] == inf) {
                        dist[w] = dist[v] + 1.0;
                        q.push(w);
                    }
                    if (dist[w] == dist[v] + 1.0) {
                        sigma[w] += sigma[v];
                        pred[w].push_back({v, e});
                    }
                }
            }
        } else {
            using Item = std::pair<double, std::size_t>;
            std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
            std::vector<char> done(n, 0);
            pq.push({0.0, s});
            while (!pq.empty()) {
                const auto [d, v] = pq.top();
                pq.pop();
                if (done[v] || d > dist[v]) continue;
                done[v] = 1;
                order.push_back(v);
                for (const auto& [w, e] : adj[v]) {
                    if (done[w]) continue;
                    const double nd = dist[v] + 1.0 / edges[e].weight;
                    const double tol = 1e-12 * std::max(1.0, nd);
                    if (nd < dist[w] - tol) {
                        dist[w] = nd;
                        sigma[w] = sigma[v];
                        pred[w].assign(1, {v, e});
                        pq.push({nd, w});
                    } else if (std::abs(nd - dist[w]) <= tol) {
                        sigma[w] += sigma[v];
                        pred[w].push_back({v, e});
                    }
                }
            }
        }
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            const auto w = *it;
            for (const auto& [v, e] : pred[w]) {
                const double c = sigma[v] / sigma[w] * (1.0 + delta[w]);
                eb[e] += c;
                delta[v] += c;
            }
        }
    }
    for (auto& x : eb) x /= 2.0;
    return eb;
}

std::vector<double> edge_betweenness(const BandLayer& layer, bool weighted) {
    return edge_betweenness(layer.node_count(), layer.edges(), weighted);
}

std::vector<Edge> combine_layer_edges(std::span<const BandLayer> layers) {
    std::map<std::pair<std::size_t, std::size_t>, double> best;
    for (const auto& l : layers) {
        for (const auto& e : l.edges()) {
            if (e.u == e.v) continue;
            auto [it, inserted] = best.emplace(std::pair{e.u, e.v}, e.weight);
            if (!inserted) it->second = std::max(it->second, e.weight);
        }
    }
    std::vector<Edge> out;
    out.reserve(best.size());
    for (const auto& [pair, w] : best) out.push_back({pair.first, pair.second, w, EdgeType::intra});
    return out;
}

// ---------------------------------------------------------------------------

AnnotatedGraph annotate(const AttentionGraph& attention, std::span<const Edge> llc_edges,
                        bool weighted_betweenness) {
    const auto n = attention.node_count();
    const auto centrality = weighted_in_degree(attention);
    const auto clustering = weighted_clustering(n, llc_edges);
    const auto betweenness = edge_betweenness(n, llc_edges, weighted_betweenness);
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> llc_index;
    for (std::size_t i = 0; i < llc_edges.size(); ++i) {
        const auto& e = llc_edges[i];
        llc_index[{std::min(e.u, e.v), std::max(e.u, e.v)}] = i;
    }

    AnnotatedGraph g;
    g.name = attention.name;
    for (std::size_t v = 0; v < n; ++v) {
        AnnotatedNode node;
        node.label = attention.labels[v];
        node.centrality = centrality[v];
        node.clustering = clustering[v];
        if (v < attention.self_attention.size()) node.self_attention = attention.self_attention[v];
        if (v < attention.cross_attention.size()) node.cross_attention = attention.cross_attention[v];
        g.nodes.push_back(std::move(node));
    }
    for (const auto& [pair, a] : attention.edges) {
        AnnotatedEdge e;
        e.source = pair.first;
        e.target = pair.second;
        e.weight = a;
        const auto it = llc_index.find({std::min(pair.first, pair.second), std::max(pair.first, pair.second)});
        if (it != llc_index.end()) {
            e.betweenness = betweenness[it->second];
            e.llc = llc_edges[it->second].weight;
        }
        g.edges.push_back(e);
    }
    return g;
}

ExportFormat parse_export_format(std::string_view name) {
    if (name == "json") return ExportFormat::json;
    if (name == "graphml") return ExportFormat::graphml;
    if (name == "dot") return ExportFormat::dot;
    throw ArgumentError("unknown export format '" + std::string(name) + "' (json, graphml, dot)");
}

std::string_view export_extension(ExportFormat f) {
    switch (f) {
    case ExportFormat::json: return "json";
    case ExportFormat::graphml: return "graphml";
    case ExportFormat::dot: return "dot";
    }
    return "";
}

nlohmann::ordered_json annotated_to_json(const AnnotatedGraph& g) {
    nlohmann::ordered_json j;
    j["name"] = g.name;
    j["directed"] = true;
    auto nodes = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const auto& n = g.nodes[i];
        nlohmann::ordered_json jn;
        jn["id"] = i;
        jn["label"] = n.label;
        jn["centrality"] = n.centrality;
        jn["clustering"] = n.clustering;
        jn["self_attention"] = n.self_attention;
        jn["cross_attention"] = n.cross_attention;
        nodes.push_back(std::move(jn));
    }
    j["nodes"] = std::move(nodes);
    auto edges = nlohmann::ordered_json::array();
    for (const auto& e : g.edges) {
        nlohmann::ordered_json je;
        je["source"] = e.source;
        je["target"] = e.target;
        je["weight"] = e.weight;
        je["type"] = edge_type_name(e.type);
        je["betweenness"] = e.betweenness;
        je["llc"] = e.llc;
        edges.push_back(std::move(je));
    }
    j["edges"] = std::move(edges);
    return j;
}

AnnotatedGraph annotated_from_json(const nlohmann::json& j) {
    try {
        AnnotatedGraph g;
        g.name = j.at("name").get<std::string>();
        for (const auto& jn : j.at("nodes")) {
            if (jn.at("id").get<std::size_t>() != g.nodes.size()) throw DataError("node ids must be 0..n-1 in order");
            g.nodes.push_back({jn.at("label").get<std::string>(), jn.at("centrality").get<double>(),
                               jn.at("clustering").get<double>(), jn.at("self_attention").get<double>(),
                               jn.at("cross_attention").get<double>()});
        }
        for (const auto& je : j.at("edges")) {
            AnnotatedEdge e;
            e.source = je.at("source").get<std::size_t>();
            e.target = je.at("target").get<std::size_t>();
            if (e.source >= g.nodes.size() || e.target >= g.nodes.size()) throw DataError("edge endpoint out of range");
            e.weight = je.at("weight").get<double>();
            e.type = parse_edge_type(je.at("type").get<std::string>());
            e.betweenness = je.at("betweenness").get<double>();
            e.llc = je.at("llc").get<double>();
            g.edges.push_back(e);
        }
        return g;
    } catch (const nlohmann::json::exception& ex) {
        throw DataError(std::string("annotated graph json: ") + ex.what());
    }
}

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        case '\'': out += "&apos;"; break;
        default: out += c;
        }
    }
    return out;
}

std::string dot_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out;
}

} // namespace

std::string to_graphml(const AnnotatedGraph& g) {
    std::string s;
    s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\"\n";
    s += "    xmlns:xsi=\"http://www.w3.org/2001/XMLSchema-instance\"\n";
    s += "    xsi:schemaLocation=\"http://graphml.graphdrawing.org/xmlns "
         "http://graphml.graphdrawing.org/xmlns/1.0/graphml.xsd\">\n";
    s += "  <key id=\"label\" for=\"node\" attr.name=\"label\" attr.type=\"string\"/>\n";
    s += "  <key id=\"centrality\" for=\"node\" attr.name=\"centrality\" attr.type=\"double\"/>\n";
    s += "  <key id=\"clustering\" for=\"node\" attr.name=\"clustering\" attr.type=\"double\"/>\n";
    s += "  <key id=\"self_attention\" for=\"node\" attr.name=\"self_attention\" attr.type=\"double\"/>\n";
    s += "  <key id=\"cross_attention\" for=\"node\" attr.name=\"cross_attention\" attr.type=\"double\"/>\n";
    s += "  <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n";
    s += "  <key id=\"type\" for=\"edge\" attr.name=\"type\" attr.type=\"string\"/>\n";
    s += "  <key id=\"betweenness\" for=\"edge\" attr.name=\"betweenness\" attr.type=\"double\"/>\n";
    s += "  <key id=\"llc\" for=\"edge\" attr.name=\"llc\" attr.type=\"double\"/>\n";
    s += "  <graph id=\"" + xml_escape(g.name) + "\" edgedefault=\"directed\">\n";
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const auto& n = g.nodes[i];
        s += "    <node id=\"n" + std::to_string(i) + "\">\n";
        s += "      <data key=\"label\">" + xml_escape(n.label) + "</data>\n";
        s += "      <data key=\"centrality\">" + num(n.centrality) + "</data>\n";
        s += "      <data key=\"clustering\">" + num(n.clustering) + "</data>\n";
        s += "      <data key=\"self_attention\">" + num(n.self_attention) + "</data>\n";
        s += "      <data key=\"cross_attention\">" + num(n.cross_attention) + "</data>\n";
        s += "    </node>\n";
    }
    for (std::size_t i = 0; i < g.edges.size(); ++i) {
        const auto& e = g.edges[i];
        s += "    <edge id=\"e" + std::to_string(i) + "\" source=\"n" + std::to_string(e.source) +
             "\" target=\"n" + std::to_string(e.target) + "\">\n";
        s += "      <data key=\"weight\">" + num(e.weight) + "</data>\n";
        s += "      <data key=\"type\">" + std::string(edge_type_name(e.type)) + "</data>\n";
        s += "      <data key=\"betweenness\">" + num(e.betweenness) + "</data>\n";
        s += "      <data key=\"llc\">" + num(e.llc) + "</data>\n";
        s += "    </edge>\n";
    }
    s += "  </graph>\n</graphml>\n";
    return s;
}

std::string to_dot(const AnnotatedGraph& g) {
    double max_c = 0.0, max_w = 0.0;
    for (const auto& n : g.nodes) max_c = std::max(max_c, n.centrality);
    for (const auto& e : g.edges) max_w = std::max(max_w, e.weight);
    auto shade = [](double t) {
        // white-to-red ramp
        const int level = static_cast<int>(std::lround(255.0 * (1.0 - std::clamp(t, 0.0, 1.0))));
        char buf[16];
        std::snprintf(buf, sizeof buf, "#ff%02x%02x", level, level);
        return std::string(buf);
    };
    std::string s = "digraph \"" + dot_escape(g.name) + "\" {\n";
    s += "  node [shape=circle, style=filled];\n";
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const auto& n = g.nodes[i];
        const double t = max_c > 0.0 ? n.centrality / max_c : 0.0;
        s += "  n" + std::to_string(i) + " [label=\"" + dot_escape(n.label) + "\", width=" + num(0.3 + 0.7 * t) +
             ", fillcolor=\"" + shade(t) + "\", centrality=" + num(n.centrality) +
             ", clustering=" + num(n.clustering) + "];\n";
    }
    for (const auto& e : g.edges) {
        const double t = max_w > 0.0 ? e.weight / max_w : 0.0;
        s += "  n" + std::to_string(e.source) + " -> n" + std::to_string(e.target) + " [weight=" + num(e.weight) +
             ", penwidth=" + num(0.5 + 4.5 * t) + ", color=\"" + shade(t) + "\", betweenness=" +
             num(e.betweenness) + "];\n";
    }
    s += "}\n";
    return s;
}

std::string format_graph(const AnnotatedGraph& g, ExportFormat f) {
    switch (f) {
    case ExportFormat::json: return annotated_to_json(g).dump(2) + "\n";
    case ExportFormat::graphml: return to_graphml(g);
    case ExportFormat::dot: return to_dot(g);
    }
    return {};
}

void export_graph(const AnnotatedGraph& g, ExportFormat f, const std::filesystem::path& path) {
    write_file_atomic(path, format_graph(g, f));
}

std::string centrality_csv(std::span<const AnnotatedGraph> graphs) {
    std::string s = "graph,node,label,in_degree,clustering,self_attention,cross_attention\n";
    for (const auto& g : graphs) {
        for (std::size_t i = 0; i < g.nodes.size(); ++i) {
            const auto& n = g.nodes[i];
            s += g.name + "," + std::to_string(i) + "," + n.label + "," + num(n.centrality) + "," +
                 num(n.clustering) + "," + num(n.self_attention) + "," + num(n.cross_attention) + "\n";
        }
    }
    return s;
}

std::vector<AnnotatedGraph> explain_patient(const GatModel& model, const MultiLayerGraph& graph,
                                            const ExplainOptions& options) {
    if (options.bands.empty()) throw ArgumentError("explain: no bands requested");
    const auto extraction = extract_attention(model, graph, options.layer);
    std::vector<AttentionGraph> chosen;
    std::vector<BandLayer> layers;
    std::vector<AnnotatedGraph> out;
    for (Band b : options.bands) {
        std::size_t l = 0;
        while (l < graph.layer_count() && graph.layers()[l].band() != b) ++l;
        if (l == graph.layer_count()) {
            throw ArgumentError("band " + std::string(band_name(b)) + " is not a layer of this graph");
        }
        chosen.push_back(extraction.bands[l]);
        layers.push_back(graph.layers()[l]);
        out.push_back(annotate(extraction.bands[l], graph.layers()[l].edges(), options.weighted_betweenness));
    }
    const auto combined_llc = combine_layer_edges(layers);
    out.push_back(annotate(combine_bands(chosen), combined_llc, options.weighted_betweenness));
    return out;
}

std::vector<std::filesystem::path> write_explain(std::span<const AnnotatedGraph> graphs,
                                                 ExportFormat format,
                                                 const std::filesystem::path& dir,
                                                 const std::string& prefix) {
    std::vector<std::filesystem::path> paths;
    for (const auto& g : graphs) {
        auto path = dir / (prefix + "_" + g.name + "." + std::string(export_extension(format)));
        export_graph(g, format, path);
        paths.push_back(std::move(path));
    }
    auto csv = dir / (prefix + "_centrality.csv");
    write_file_atomic(csv, centrality_csv(graphs));
    paths.push_back(std::move(csv));
    return paths;
}

} // namespace neurograph
