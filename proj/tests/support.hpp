// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <random>
#include <unistd.h>
#include <string>
#include <vector>

#include "neurograph/areas.hpp"
#include "neurograph/graph.hpp"

namespace testing_support {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                ("neurograph_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

/// Symmetric matrix with uniform [lo, hi) off-diagonal entries.
inline std::vector<double> random_symmetric(std::size_t n, std::mt19937_64& gen, double lo = 0.0,
                                            double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> w(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) w[i * n + j] = w[j * n + i] = u(gen);
    }
    return w;
}

inline std::size_t pick(std::mt19937_64& gen, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(gen);
}

/// Labels "N0".."N{n-1}".
inline std::vector<std::string> labels(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back("N" + std::to_string(i));
    return out;
}

/// Random connected undirected graph on n nodes: random spanning tree plus
/// each other pair with probability p. Weights uniform in [0.1, 1].
inline std::vector<neurograph::Edge> random_connected(std::size_t n, double p, std::mt19937_64& gen) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::vector<char>> has(n, std::vector<char>(n, 0));
    std::vector<neurograph::Edge> edges;
    for (std::size_t v = 1; v < n; ++v) {
        const auto parent = static_cast<std::size_t>(u(gen) * static_cast<double>(v)) % v;
        has[parent][v] = has[v][parent] = 1;
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (!has[i][j] && u(gen) < p) has[i][j] = has[j][i] = 1;
            if (has[i][j]) edges.push_back({i, j, 0.1 + 0.9 * u(gen), neurograph::EdgeType::intra});
        }
    }
    return edges;
}

/// Three band layers (alpha1, alpha2, beta1) over n nodes with random
/// connected intra edges, self-loops and uniform [-1, 1) features.
inline neurograph::MultiLayerGraph random_featured_graph(std::size_t n, std::size_t dim, std::mt19937_64& gen,
                                                         double p = 0.3) {
    using neurograph::Band;
    std::vector<neurograph::BandLayer> layers;
    for (Band b : {Band::alpha1, Band::alpha2, Band::beta1}) {
        auto edges = random_connected(n, p, gen);
        for (std::size_t v = 0; v < n; ++v) edges.push_back({v, v, 1.0, neurograph::EdgeType::self});
        layers.emplace_back(b, labels(n), std::move(edges));
    }
    auto g = neurograph::build_multilayer(std::move(layers));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> f(g.node_count() * dim);
    for (auto& x : f) x = u(gen);
    return g.with_features(dim, std::move(f));
}

// Same graph with every layer relabeled by perm (old label i -> new index perm[i]).
inline neurograph::MultiLayerGraph relabel(const neurograph::MultiLayerGraph& g, const std::vector<std::size_t>& perm) {
    const auto n = g.nodes_per_layer();
    std::vector<neurograph::BandLayer> layers;
    for (const auto& layer : g.layers()) {
        std::vector<std::string> labels(n);
        for (std::size_t i = 0; i < n; ++i) labels[perm[i]] = layer.labels()[i];
        std::vector<neurograph::Edge> edges;
        for (const auto& e : layer.edges()) edges.push_back({perm[e.u], perm[e.v], e.weight});
        layers.emplace_back(layer.band(), labels, edges);
    }
    auto out = neurograph::build_multilayer(std::move(layers));
    const auto d = g.feature_dim();
    std::vector<double> f(g.node_count() * d);
    for (std::size_t l = 0; l < g.layer_count(); ++l) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto src = g.node_feature(g.global_id(i, l));
            std::copy(src.begin(), src.end(), f.begin() + static_cast<std::ptrdiff_t>(out.global_id(perm[i], l) * d));
        }
    }
    return out.with_features(d, f);
}

} // namespace testing_support
