// SPDX-License-Identifier: Apache-2.0
#include "neurograph/rewiring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "neurograph/areas.hpp"
#include "neurograph/errors.hpp"

namespace neurograph {

void RewireConfig::validate() const {
    if (!(quantile >= 0.0 && quantile <= 1.0)) {
        throw ArgumentError("rewire quantile must lie in [0, 1]");
    }
    if (bands_kept.empty()) throw ArgumentError("rewire needs at least one band");
    for (std::size_t i = 0; i < bands_kept.size(); ++i) {
        for (std::size_t j = i + 1; j < bands_kept.size(); ++j) {
            if (bands_kept[i] == bands_kept[j]) throw ArgumentError("duplicate band in bands_kept");
        }
    }
}

EdgeSet structural_edges(std::span<const BrodmannArea> areas, std::size_t k) {
    const auto n = areas.size();
    if (k >= n) {
        throw ArgumentError("structural_edges: k=" + std::to_string(k) + " must be below n=" +
                            std::to_string(n));
    }
    EdgeSet out;
    out.reserve(n * k);
    std::vector<std::size_t> order;
    std::vector<double> dist(n);
    for (std::size_t v = 0; v < n; ++v) {
        for (std::size_t u = 0; u < n; ++u) dist[u] = centroid_distance(areas[v], areas[u]);
        order.clear();
        for (std::size_t u = 0; u < n; ++u) {
            if (u != v) order.push_back(u);
        }
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                          [&](std::size_t a, std::size_t b) {
                              return dist[a] != dist[b] ? dist[a] < dist[b] : a < b;
                          });
        for (std::size_t i = 0; i < k; ++i) out.emplace_back(std::min(v, order[i]), std::max(v, order[i]));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

double interpolated_quantile(std::vector<double> values, double q) {
    if (values.empty()) throw ArgumentError("quantile of an empty set");
    if (!(q >= 0.0 && q <= 1.0)) throw ArgumentError("quantile must lie in [0, 1]");
    std::sort(values.begin(), values.end());
    const double h = static_cast<double>(values.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= values.size()) return values.back();
    const double frac = h - static_cast<double>(lo);
    if (frac == 0.0) return values[lo];
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

double functional_threshold(const ConnectivityMatrix& matrix, double quantile) {
    const auto n = matrix.size();
    std::vector<double> upper;
    upper.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) upper.push_back(matrix(i, j));
    }
    return interpolated_quantile(std::move(upper), quantile);
}

EdgeSet functional_edges(const ConnectivityMatrix& matrix, double quantile) {
    const auto n = matrix.size();
    if (n < 2) return {};
    const double threshold = functional_threshold(matrix, quantile);
    EdgeSet out;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (matrix(i, j) >= threshold) out.emplace_back(i, j);
        }
    }
    return out;
}

BandLayer rewire_layer(const ConnectivityMatrix& matrix, std::span<const BrodmannArea> areas,
                       const RewireConfig& config) {
    config.validate();
    if (matrix.size() != areas.size()) {
        throw DataError("matrix size " + std::to_string(matrix.size()) + " does not match " +
                        std::to_string(areas.size()) + " areas");
    }
    const auto phi = structural_edges(areas, config.k);
    const auto psi = functional_edges(matrix, config.quantile);
    EdgeSet merged;
    merged.reserve(phi.size() + psi.size());
    std::set_union(phi.begin(), phi.end(), psi.begin(), psi.end(), std::back_inserter(merged));

    std::vector<Edge> edges;
    edges.reserve(merged.size() + areas.size());
    for (const auto& [u, v] : merged) edges.push_back({u, v, matrix(u, v), EdgeType::intra});
    for (std::size_t v = 0; v < areas.size(); ++v) edges.push_back({v, v, 1.0, EdgeType::self});
    return BandLayer(matrix.band(), area_labels(areas), std::move(edges));
}

MultiLayerGraph rewire_patient(const PatientRecord& record, std::span<const BrodmannArea> areas,
                               const RewireConfig& config) {
    config.validate();
    std::vector<BandLayer> layers;
    layers.reserve(config.bands_kept.size());
    for (Band b : config.bands_kept) layers.push_back(rewire_layer(record.matrix(b), areas, config));
    return build_multilayer(std::move(layers));
}

double retention_fraction(const BandLayer& layer) {
    const auto n = layer.node_count();
    if (n < 2) return 0.0;
    return static_cast<double>(layer.intra_edge_count()) / static_cast<double>(n * (n - 1) / 2);
}

} // namespace neurograph
