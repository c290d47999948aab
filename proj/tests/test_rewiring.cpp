// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "neurograph/areas.hpp"
#include "neurograph/dataset.hpp"
#include "neurograph/errors.hpp"
#include "neurograph/rewiring.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace neurograph;
using testing_support::oracle_functional;

namespace {

std::vector<BrodmannArea> line_areas(std::vector<double> xs) {
    std::vector<BrodmannArea> out;
    for (std::size_t i = 0; i < xs.size(); ++i) out.push_back({i, "A" + std::to_string(i), {xs[i], 0, 0}});
    return out;
}

std::vector<BrodmannArea> random_areas(std::size_t n, std::mt19937_64& gen) {
    std::uniform_real_distribution<double> u(-70, 70);
    std::vector<BrodmannArea> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({i, "A" + std::to_string(i), {u(gen), u(gen), u(gen)}});
    return out;
}

// Brute-force kNN union: all pairs ranked by (distance, index).
EdgeSet oracle_structural(const std::vector<BrodmannArea>& areas, std::size_t k) {
    const auto n = areas.size();
    std::set<std::pair<std::size_t, std::size_t>> s;
    for (std::size_t v = 0; v < n; ++v) {
        std::vector<std::pair<double, std::size_t>> ranked;
        for (std::size_t u = 0; u < n; ++u)
            if (u != v) ranked.push_back({centroid_distance(areas[v], areas[u]), u});
        std::sort(ranked.begin(), ranked.end());
        for (std::size_t i = 0; i < k; ++i) s.insert({std::min(v, ranked[i].second), std::max(v, ranked[i].second)});
    }
    return {s.begin(), s.end()};
}

bool subset(const EdgeSet& a, const EdgeSet& b) { return std::includes(b.begin(), b.end(), a.begin(), a.end()); }

} // namespace

TEST(Structural, CollinearTieBreak) {
    const auto e = structural_edges(line_areas({0, 1, 2, 3}), 1);
    EXPECT_EQ(e, (EdgeSet{{0, 1}, {1, 2}, {2, 3}}));
}

TEST(Structural, FullNeighborhoodIsComplete) {
    const auto e = structural_edges(line_areas({0, 1, 5, 9, 10}), 4);
    EXPECT_EQ(e.size(), 10u);
    EXPECT_THROW(structural_edges(line_areas({0, 1, 2}), 3), ArgumentError);
}

TEST(Structural, DefaultAreasBound) {
    const auto areas = default_brodmann_areas();
    const auto e = structural_edges(areas, 3);
    EXPECT_LE(e.size(), 252u);
    EXPECT_EQ(e, oracle_structural(areas, 3));
}

TEST(Structural, DuplicateCentroidsSortByIndex) {
    const auto e = structural_edges(line_areas({0, 0, 0, 5}), 1);
    EXPECT_EQ(e, (EdgeSet{{0, 1}, {0, 2}, {0, 3}}));
}

TEST(Structural, OracleAndMonotoneInK) {
    std::mt19937_64 gen(5);
    for (int t = 0; t < 30; ++t) {
        const auto areas = random_areas(12, gen);
        EdgeSet prev;
        for (std::size_t k = 0; k < 12; ++k) {
            const auto e = structural_edges(areas, k);
            EXPECT_EQ(e, oracle_structural(areas, k));
            EXPECT_TRUE(subset(prev, e));
            prev = e;
        }
    }
}

TEST(Quantile, WorkedExample) {
    const double t = interpolated_quantile({0.1, 0.2, 0.3, 0.4, 0.5, 0.6}, 0.5);
    EXPECT_NEAR(t, 0.35, 1e-15);
    // 4-node matrix with those upper-triangle values
    const ConnectivityMatrix m(Band::alpha1, 4, {0, .1, .2, .3, .1, 0, .4, .5, .2, .4, 0, .6, .3, .5, .6, 0});
    EXPECT_EQ(functional_edges(m, 0.5), (EdgeSet{{1, 2}, {1, 3}, {2, 3}}));
}

TEST(Quantile, ZeroKeepsEverythingOneKeepsMaxima) {
    std::mt19937_64 gen(1);
    const ConnectivityMatrix m(Band::beta1, 84, testing_support::random_symmetric(84, gen));
    EXPECT_EQ(functional_edges(m, 0.0).size(), 3486u);
    EXPECT_EQ(functional_edges(m, 1.0).size(), 1u);
}

TEST(Quantile, DistinctValuesKeep35At99) {
    std::mt19937_64 gen(2);
    const ConnectivityMatrix m(Band::beta1, 84, testing_support::random_symmetric(84, gen));
    EXPECT_EQ(functional_edges(m, 0.99).size(), 35u);
}

TEST(Quantile, MatchesSortOracleExactly) {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> uq(0.0, 1.0);
    for (std::size_t n = 2; n <= 8; ++n) {
        for (int t = 0; t < 50; ++t) {
            auto w = testing_support::random_symmetric(n, gen);
            // Coarse values force ties.
            if (t % 2) for (auto& x : w) x = std::round(x * 4) / 4;
            const ConnectivityMatrix m(Band::alpha2, n, w);
            for (double q : {0.0, 0.25, 0.5, 0.9, 0.99, 1.0, uq(gen)}) {
                EXPECT_EQ(functional_edges(m, q), oracle_functional(m, q)) << "n=" << n << " q=" << q;
            }
        }
    }
}

TEST(Quantile, MonotoneInQ) {
    std::mt19937_64 gen(4);
    const ConnectivityMatrix m(Band::beta1, 20, testing_support::random_symmetric(20, gen));
    EdgeSet prev = functional_edges(m, 0.0);
    for (double q = 0.05; q <= 1.0; q += 0.05) {
        const auto e = functional_edges(m, q);
        EXPECT_TRUE(subset(e, prev));
        prev = e;
    }
}

TEST(RewireLayer, UnionWeightsAndSelfLoops) {
    std::mt19937_64 gen(6);
    const auto areas = default_brodmann_areas();
    const ConnectivityMatrix m(Band::alpha1, 84, testing_support::random_symmetric(84, gen));
    const RewireConfig cfg;
    const auto layer = rewire_layer(m, areas, cfg);
    EXPECT_TRUE(layer.all_self_loops());
    EdgeSet got;
    for (const auto& e : layer.edges()) {
        if (e.u == e.v) {
            EXPECT_EQ(e.weight, 1.0);
            continue;
        }
        EXPECT_EQ(e.weight, m(e.u, e.v));
        got.emplace_back(e.u, e.v);
    }
    EXPECT_TRUE(subset(structural_edges(areas, 3), got));
    EXPECT_TRUE(subset(functional_edges(m, 0.99), got));
    // every node has degree >= 2 counting the self-loop
    std::vector<int> deg(84, 0);
    for (const auto& e : layer.edges()) {
        ++deg[e.u];
        if (e.u != e.v) ++deg[e.v];
    }
    for (int d : deg) EXPECT_GE(d, 2);
}

TEST(RewireLayer, DegenerateConfig) {
    std::mt19937_64 gen(7);
    const ConnectivityMatrix m(Band::alpha1, 84, testing_support::random_symmetric(84, gen));
    RewireConfig cfg;
    cfg.k = 0;
    cfg.quantile = 1.0;
    const auto layer = rewire_layer(m, default_brodmann_areas(), cfg);
    EXPECT_EQ(layer.edges().size(), 85u);
    EXPECT_EQ(layer.intra_edge_count(), 1u);
}

TEST(RewireLayer, RetentionNearFivePercent) {
    std::mt19937_64 gen(8);
    const auto areas = default_brodmann_areas();
    double total = 0.0;
    for (int t = 0; t < 20; ++t) {
        const ConnectivityMatrix m(Band::beta1, 84, testing_support::random_symmetric(84, gen));
        total += retention_fraction(rewire_layer(m, areas, {}));
    }
    const double mean = total / 20.0;
    EXPECT_GE(mean, 0.03);
    EXPECT_LE(mean, 0.10);
}

TEST(RewireLayer, EquivariantUnderRelabeling) {
    std::mt19937_64 gen(9);
    const std::size_t n = 16;
    const auto areas = random_areas(n, gen);
    const auto w = testing_support::random_symmetric(n, gen);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    // new index perm[i] holds old area i
    std::vector<BrodmannArea> pareas(n);
    std::vector<double> pw(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        pareas[perm[i]] = {perm[i], "A" + std::to_string(perm[i]), areas[i].centroid};
        for (std::size_t j = 0; j < n; ++j) pw[perm[i] * n + perm[j]] = w[i * n + j];
    }
    RewireConfig cfg;
    cfg.quantile = 0.9;
    const auto a = rewire_layer(ConnectivityMatrix(Band::alpha1, n, w), areas, cfg);
    const auto b = rewire_layer(ConnectivityMatrix(Band::alpha1, n, pw), pareas, cfg);
    std::set<std::pair<std::size_t, std::size_t>> mapped, got;
    for (const auto& e : a.edges()) mapped.insert({std::min(perm[e.u], perm[e.v]), std::max(perm[e.u], perm[e.v])});
    for (const auto& e : b.edges()) got.insert({e.u, e.v});
    EXPECT_EQ(mapped, got);
}

TEST(RewirePatient, ThreeLayersAndPurity) {
    const auto cohort = synth_cohort(1, 2);
    const auto& p = cohort.patients[0];
    const auto g = rewire_patient(p, cohort.areas, {});
    EXPECT_EQ(g.node_count(), 252u);
    EXPECT_EQ(g.cross_edges().size(), 252u);
    EXPECT_EQ(g, rewire_patient(p, cohort.areas, {}));

    RewireConfig delta_only;
    delta_only.bands_kept = {Band::delta};
    EXPECT_EQ(rewire_patient(p, cohort.areas, delta_only).node_count(), 84u);

    PatientRecord partial = p;
    partial.matrices.erase(partial.matrices.begin() + 2, partial.matrices.end());
    EXPECT_THROW(rewire_patient(partial, cohort.areas, {}), DataError);
}

TEST(RewireConfig, Validation) {
    RewireConfig c;
    c.quantile = 1.5;
    EXPECT_THROW(c.validate(), ArgumentError);
    c = {};
    c.bands_kept = {};
    EXPECT_THROW(c.validate(), ArgumentError);
    c.bands_kept = {Band::alpha1, Band::alpha1};
    EXPECT_THROW(c.validate(), ArgumentError);
}
