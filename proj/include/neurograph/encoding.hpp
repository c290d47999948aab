// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include "neurograph/graph.hpp"

namespace neurograph {

struct EncodingConfig {
    std::size_t lap_dim = 8;
    std::size_t rw_steps = 8;

    void validate() const;
    /// lap_dim + rw_steps + one-hot over the five bands.
    std::size_t feature_dim() const { return lap_dim + rw_steps + kBandCount; }
};

/// Dense weighted adjacency of a layer, optionally with its self-loops.
Eigen::MatrixXd weighted_adjacency(const BandLayer& layer, bool include_self_loops);

/// I - D^{-1/2} A D^{-1/2} over the layer without self-loops. Isolated nodes
/// get an all-zero row and column.
Eigen::MatrixXd normalized_laplacian(const BandLayer& layer);

struct Spectrum {
    Eigen::VectorXd values;   // ascending
    Eigen::MatrixXd vectors;  // column i pairs with values[i]
};

Spectrum laplacian_spectrum(const BandLayer& layer);

/// Eigenvalues below this are treated as zero.
inline constexpr double kZeroEigenvalue = 1e-8;

/// n x dim: eigenvectors for the `dim` smallest nonzero eigenvalues, each
/// sign-fixed so its first nonzero entry is positive; zero-padded.
Eigen::MatrixXd laplacian_pe(const BandLayer& layer, std::size_t dim);

/// Row-stochastic D^{-1} A including self-loops. Throws DataError on a node
/// with zero weighted degree.
Eigen::MatrixXd transition_matrix(const BandLayer& layer);

/// n x steps: column s-1 holds the return probabilities diag(T^s).
Eigen::MatrixXd rw_pe(const BandLayer& layer, std::size_t steps);

/// Sets per-node features concat(lap_pe, rw_pe, band one-hot), each layer
/// encoded independently.
MultiLayerGraph assemble_features(const MultiLayerGraph& graph, const EncodingConfig& config);

} // namespace neurograph
