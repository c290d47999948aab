// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <utility>
#include <vector>

#include "neurograph/dataset.hpp"
#include "neurograph/graph.hpp"

namespace neurograph {

struct RewireConfig {
    std::size_t k = 3;
    double quantile = 0.99;
    std::vector<Band> bands_kept{Band::alpha1, Band::alpha2, Band::beta1};

    void validate() const;
};

/// Sorted, duplicate-free undirected pairs with first < second.
using EdgeSet = std::vector<std::pair<std::size_t, std::size_t>>;

/// Union over nodes of the k nearest centroids (Euclidean, ties broken by the
/// lower area index), symmetrized.
EdgeSet structural_edges(std::span<const BrodmannArea> areas, std::size_t k);

/// Empirical quantile with linear interpolation between closest order
/// statistics. `values` need not be sorted.
double interpolated_quantile(std::vector<double> values, double q);

/// Threshold used by `functional_edges`: quantile of the upper-triangle
/// off-diagonal weights.
double functional_threshold(const ConnectivityMatrix& matrix, double quantile);

/// Pairs whose weight is >= the quantile threshold.
EdgeSet functional_edges(const ConnectivityMatrix& matrix, double quantile);

/// E_phi ∪ E_psi with LLC weights, plus a weight-1 self-loop on every node.
BandLayer rewire_layer(const ConnectivityMatrix& matrix, std::span<const BrodmannArea> areas,
                       const RewireConfig& config);

/// One rewired layer per kept band, assembled into a multi-layer graph.
MultiLayerGraph rewire_patient(const PatientRecord& record, std::span<const BrodmannArea> areas,
                               const RewireConfig& config);

/// Non-self-loop edges of the layer over the n(n-1)/2 possible pairs.
double retention_fraction(const BandLayer& layer);

} // namespace neurograph
