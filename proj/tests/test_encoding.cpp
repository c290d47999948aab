// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "neurograph/dataset.hpp"
#include "neurograph/encoding.hpp"
#include "neurograph/errors.hpp"
#include "neurograph/rewiring.hpp"
#include "support.hpp"

using namespace neurograph;
using testing_support::labels;
using Dense = std::vector<std::vector<double>>;

namespace {

BandLayer cycle4(bool self_loops) {
    std::vector<Edge> e{{0, 1, 1.0}, {1, 2, 1.0}, {2, 3, 1.0}, {0, 3, 1.0}};
    if (self_loops)
        for (std::size_t v = 0; v < 4; ++v) e.push_back({v, v, 1.0});
    return BandLayer(Band::alpha1, labels(4), e);
}

BandLayer random_layer(std::size_t n, double p, std::mt19937_64& gen, Band band = Band::alpha1) {
    auto edges = testing_support::random_connected(n, p, gen);
    for (std::size_t v = 0; v < n; ++v) edges.push_back({v, v, 1.0});
    return BandLayer(band, labels(n), edges);
}

// I - D^-1/2 A D^-1/2 built by hand from the edge list, self-loops dropped.
Dense oracle_laplacian(const BandLayer& layer) {
    const auto n = layer.node_count();
    Dense a(n, std::vector<double>(n, 0.0));
    for (const auto& e : layer.edges())
        if (e.u != e.v) a[e.u][e.v] = a[e.v][e.u] = e.weight;
    std::vector<double> d(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) d[i] += a[i][j];
    Dense l(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (d[i] > 0 && d[j] > 0) l[i][j] = -a[i][j] / std::sqrt(d[i] * d[j]);
        }
        if (d[i] > 0) l[i][i] += 1.0;
    }
    return l;
}

// Cyclic Jacobi eigenvalue iteration for symmetric matrices.
std::vector<double> jacobi_eigenvalues(Dense a) {
    const auto n = a.size();
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += a[i][j] * a[i][j];
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
    std::sort(ev.begin(), ev.end());
    return ev;
}

// Diagonals of explicit powers of D^-1 A (self-loops included).
Dense oracle_rw(const BandLayer& layer, std::size_t steps) {
    const auto n = layer.node_count();
    Dense t(n, std::vector<double>(n, 0.0));
    for (const auto& e : layer.edges()) t[e.u][e.v] = t[e.v][e.u] = e.weight;
    for (auto& row : t) {
        const double d = std::accumulate(row.begin(), row.end(), 0.0);
        for (auto& x : row) x /= d;
    }
    Dense out(n, std::vector<double>(steps));
    Dense p = t;
    for (std::size_t s = 0; s < steps; ++s) {
        if (s) {
            Dense q(n, std::vector<double>(n, 0.0));
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < n; ++k)
                    for (std::size_t j = 0; j < n; ++j) q[i][j] += p[i][k] * t[k][j];
            p = q;
        }
        for (std::size_t i = 0; i < n; ++i) out[i][s] = p[i][i];
    }
    return out;
}

} // namespace

TEST(Laplacian, FourCycleSpectrum) {
    const auto spec = laplacian_spectrum(cycle4(true));
    ASSERT_EQ(spec.values.size(), 4);
    const double expected[] = {0, 1, 1, 2};
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(spec.values(i), expected[i], 1e-12);
    const auto oracle = jacobi_eigenvalues(oracle_laplacian(cycle4(true)));
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(oracle[static_cast<std::size_t>(i)], expected[i], 1e-12);
}

TEST(Laplacian, SingleEdgeClosedForm) {
    const BandLayer layer(Band::alpha1, labels(2), {{0, 1, 0.7}, {0, 0, 1.0}, {1, 1, 1.0}});
    const auto pe = laplacian_pe(layer, 3);
    EXPECT_NEAR(pe(0, 0), 1.0 / std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(pe(1, 0), -1.0 / std::sqrt(2.0), 1e-12);
    EXPECT_EQ(pe(0, 1), 0.0);
    EXPECT_EQ(pe(1, 2), 0.0);
    EXPECT_NEAR(laplacian_spectrum(layer).values(1), 2.0, 1e-12);
}

TEST(Laplacian, IsolatedNodeGivesZeroRow) {
    const BandLayer layer(Band::alpha1, labels(4), {{0, 1, 1.0}, {1, 2, 0.5}, {3, 3, 1.0}});
    const auto l = normalized_laplacian(layer);
    for (int j = 0; j < 4; ++j) EXPECT_EQ(l(3, j), 0.0);
    const auto pe = laplacian_pe(layer, 4);
    EXPECT_TRUE(pe.allFinite());
}

TEST(Laplacian, MatchesJacobiOracleAndResiduals) {
    std::mt19937_64 gen(11);
    for (std::size_t n : {3u, 5u, 8u, 20u, 84u}) {
        for (int t = 0; t < 5; ++t) {
            const auto layer = random_layer(n, 0.3, gen);
            const auto spec = laplacian_spectrum(layer);
            const auto oracle = jacobi_eigenvalues(oracle_laplacian(layer));
            const auto l = normalized_laplacian(layer);
            for (std::size_t i = 0; i < n; ++i) {
                const auto k = static_cast<Eigen::Index>(i);
                EXPECT_NEAR(spec.values(k), oracle[i], 1e-9);
                EXPECT_GE(spec.values(k), -1e-12);
                EXPECT_LE(spec.values(k), 2.0 + 1e-12);
                if (i) EXPECT_LE(spec.values(k - 1), spec.values(k));
                const Eigen::VectorXd r = l * spec.vectors.col(k) - spec.values(k) * spec.vectors.col(k);
                EXPECT_LE(r.norm(), 1e-8);
            }
        }
    }
}

TEST(Laplacian, SignFixAndPadding) {
    std::mt19937_64 gen(12);
    const auto layer = random_layer(6, 0.5, gen);
    const auto pe = laplacian_pe(layer, 9);
    for (Eigen::Index c = 0; c < 5; ++c) {
        Eigen::Index r = 0;
        while (std::abs(pe(r, c)) <= 1e-10) ++r;
        EXPECT_GT(pe(r, c), 0.0);
        EXPECT_NEAR(pe.col(c).norm(), 1.0, 1e-10);
    }
    for (Eigen::Index c = 5; c < 9; ++c) EXPECT_EQ(pe.col(c).norm(), 0.0);
}

TEST(Laplacian, RelabelingPermutesRows) {
    std::mt19937_64 gen(13);
    const std::size_t n = 10;
    const auto base = testing_support::random_connected(n, 0.4, gen);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    std::vector<Edge> moved;
    for (const auto& e : base) moved.push_back({perm[e.u], perm[e.v], e.weight});
    const BandLayer a(Band::alpha1, labels(n), base), b(Band::alpha1, labels(n), moved);
    const auto pa = laplacian_pe(a, 4), pb = laplacian_pe(b, 4);
    for (Eigen::Index c = 0; c < 4; ++c) {
        // each column may flip sign as a whole
        Eigen::Index r = 0;
        pa.col(c).cwiseAbs().maxCoeff(&r);
        const double sign = pa(r, c) * pb(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(r)]), c) >= 0 ? 1.0 : -1.0;
        for (std::size_t v = 0; v < n; ++v) {
            EXPECT_NEAR(pa(static_cast<Eigen::Index>(v), c), sign * pb(static_cast<Eigen::Index>(perm[v]), c), 1e-9);
        }
    }
}

TEST(RandomWalk, SelfLoopOnly) {
    const BandLayer layer(Band::alpha1, labels(1), {{0, 0, 1.0}});
    const auto pe = rw_pe(layer, 5);
    for (int s = 0; s < 5; ++s) EXPECT_EQ(pe(0, s), 1.0);
}

TEST(RandomWalk, FourCycle) {
    const auto pe = rw_pe(cycle4(false), 4);
    for (int v = 0; v < 4; ++v) {
        EXPECT_NEAR(pe(v, 0), 0.0, 1e-15);
        EXPECT_NEAR(pe(v, 1), 0.5, 1e-15);
    }
}

TEST(RandomWalk, ZeroDegreeIsDataError) {
    const BandLayer layer(Band::alpha1, labels(3), {{0, 1, 1.0}});
    EXPECT_THROW(rw_pe(layer, 2), DataError);
}

TEST(RandomWalk, MatchesMatrixPowerOracle) {
    std::mt19937_64 gen(14);
    for (std::size_t n = 1; n <= 8; ++n) {
        for (int t = 0; t < 10; ++t) {
            const auto layer = random_layer(n, 0.4, gen);
            const auto tm = transition_matrix(layer);
            for (Eigen::Index i = 0; i < tm.rows(); ++i) EXPECT_NEAR(tm.row(i).sum(), 1.0, 1e-12);
            const auto pe = rw_pe(layer, 6);
            const auto oracle = oracle_rw(layer, 6);
            for (std::size_t v = 0; v < n; ++v) {
                for (std::size_t s = 0; s < 6; ++s) {
                    const double x = pe(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(s));
                    EXPECT_NEAR(x, oracle[v][s], 1e-10);
                    EXPECT_GE(x, 0.0);
                    EXPECT_LE(x, 1.0);
                }
            }
        }
    }
}

TEST(Features, LayoutAndOneHot) {
    const auto cohort = synth_cohort(1, 4);
    const auto g = assemble_features(rewire_patient(cohort.patients[0], cohort.areas, {}), {});
    ASSERT_EQ(g.feature_dim(), 21u);
    // alpha2 is the second kept layer
    const auto f = g.node_feature(g.global_id(10, 1));
    const double hot[] = {0, 0, 0, 1, 0};
    for (int i = 0; i < 5; ++i) EXPECT_EQ(f[16 + static_cast<std::size_t>(i)], hot[i]);
    for (std::size_t v = 0; v < g.node_count(); ++v) {
        for (double x : g.node_feature(v)) EXPECT_TRUE(std::isfinite(x));
    }
}

TEST(Features, IsomorphicLayersShareEncodings) {
    std::mt19937_64 gen(15);
    const auto base = random_layer(12, 0.3, gen, Band::alpha1);
    const BandLayer twin(Band::beta1, base.labels(), base.edges());
    const auto g = assemble_features(build_multilayer({base, twin}), {});
    for (std::size_t v = 0; v < 12; ++v) {
        const auto a = g.node_feature(g.global_id(v, 0));
        const auto b = g.node_feature(g.global_id(v, 1));
        for (std::size_t c = 0; c < 16; ++c) EXPECT_EQ(a[c], b[c]);
    }
}

TEST(Features, ConfigValidation) {
    EncodingConfig c;
    EXPECT_EQ(c.feature_dim(), 21u);
    c.lap_dim = 0;
    EXPECT_THROW(c.validate(), ArgumentError);
    c = {};
    c.rw_steps = 0;
    EXPECT_THROW(c.validate(), ArgumentError);
}
