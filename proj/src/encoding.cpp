// SPDX-License-Identifier: Apache-2.0
#include "neurograph/encoding.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "neurograph/errors.hpp"

namespace neurograph {

void EncodingConfig::validate() const {
    if (lap_dim < 1) throw ArgumentError("lap_dim must be >= 1");
    if (rw_steps < 1) throw ArgumentError("rw_steps must be >= 1");
}

Eigen::MatrixXd weighted_adjacency(const BandLayer& layer, bool include_self_loops) {
    const auto n = static_cast<Eigen::Index>(layer.node_count());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (const auto& e : layer.edges()) {
        if (e.u == e.v && !include_self_loops) continue;
        const auto u = static_cast<Eigen::Index>(e.u);
        const auto v = static_cast<Eigen::Index>(e.v);
        a(u, v) = e.weight;
        a(v, u) = e.weight;
    }
    return a;
}

Eigen::MatrixXd normalized_laplacian(const BandLayer& layer) {
    const Eigen::MatrixXd a = weighted_adjacency(layer, false);
    const auto n = a.rows();
    Eigen::VectorXd inv_sqrt(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double d = a.row(i).sum();
        inv_sqrt(i) = d > 0.0 ? 1.0 / std::sqrt(d) : 0.0;
    }
    Eigen::MatrixXd l = -(inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal());
    for (Eigen::Index i = 0; i < n; ++i) l(i, i) += inv_sqrt(i) > 0.0 ? 1.0 : 0.0;
    return l;
}

Spectrum laplacian_spectrum(const BandLayer& layer) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(normalized_laplacian(layer));
    if (solver.info() != Eigen::Success) throw NumericError("Laplacian eigendecomposition failed");
    return {solver.eigenvalues(), solver.eigenvectors()};
}

Eigen::MatrixXd laplacian_pe(const BandLayer& layer, std::size_t dim) {
    if (dim < 1) throw ArgumentError("laplacian_pe: dim must be >= 1");
    const auto spec = laplacian_spectrum(layer);
    const auto n = spec.values.size();
    Eigen::MatrixXd pe = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(dim));
    Eigen::Index col = 0;
    for (Eigen::Index i = 0; i < n && col < pe.cols(); ++i) {
        if (spec.values(i) <= kZeroEigenvalue) continue;
        Eigen::VectorXd q = spec.vectors.col(i);
        for (Eigen::Index r = 0; r < n; ++r) {
            if (std::abs(q(r)) > 1e-10) {
                if (q(r) < 0.0) q = -q;
                break;
            }
        }
        pe.col(col++) = q;
    }
    return pe;
}

Eigen::MatrixXd transition_matrix(const BandLayer& layer) {
    Eigen::MatrixXd t = weighted_adjacency(layer, true);
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
        const double d = t.row(i).sum();
        if (!(d > 0.0)) {
            throw DataError("random-walk encoding: node " + std::to_string(i) +
                            " has zero weighted degree");
        }
        t.row(i) /= d;
    }
    return t;
}

Eigen::MatrixXd rw_pe(const BandLayer& layer, std::size_t steps) {
    if (steps < 1) throw ArgumentError("rw_pe: steps must be >= 1");
    const Eigen::MatrixXd t = transition_matrix(layer);
    Eigen::MatrixXd pe(t.rows(), static_cast<Eigen::Index>(steps));
    Eigen::MatrixXd power = t;
    for (std::size_t s = 0; s < steps; ++s) {
        if (s > 0) power = power * t;
        pe.col(static_cast<Eigen::Index>(s)) = power.diagonal();
    }
    return pe;
}

MultiLayerGraph assemble_features(const MultiLayerGraph& graph, const EncodingConfig& config) {
    config.validate();
    const auto dim = config.feature_dim();
    const auto n = graph.nodes_per_layer();
    std::vector<double> features(graph.node_count() * dim, 0.0);
    for (std::size_t l = 0; l < graph.layer_count(); ++l) {
        const auto& layer = graph.layers()[l];
        const Eigen::MatrixXd lap = laplacian_pe(layer, config.lap_dim);
        const Eigen::MatrixXd rw = rw_pe(layer, config.rw_steps);
        for (std::size_t v = 0; v < n; ++v) {
            double* row = &features[(l * n + v) * dim];
            const auto r = static_cast<Eigen::Index>(v);
            for (std::size_t c = 0; c < config.lap_dim; ++c) row[c] = lap(r, static_cast<Eigen::Index>(c));
            for (std::size_t c = 0; c < config.rw_steps; ++c) {
                row[config.lap_dim + c] = rw(r, static_cast<Eigen::Index>(c));
            }
            row[config.lap_dim + config.rw_steps + band_index(layer.band())] = 1.0;
        }
    }
    return graph.with_features(dim, std::move(features));
}

} // namespace neurograph
