// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#include "fgs/error.hpp"
#include "fgs/parallel.hpp"
#include "fgs/voxelize.hpp"
#include "test_util.hpp"

#include <Eigen/LU>
#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace fgs;

namespace {

GaussianScene random_gaussians(std::size_t n, std::size_t f, const Vec3 &lo, const Vec3 &hi, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    GaussianScene s;
    s.feature_dim = f;
    for (std::size_t i = 0; i < n; ++i) {
        FeatureGaussian b;
        b.mean = lo + (hi - lo).cwiseProduct(Vec3(u(rng), u(rng), u(rng)));
        b.scale = Vec3(0.1 + 0.6 * u(rng), 0.1 + 0.6 * u(rng), 0.1 + 0.6 * u(rng));
        b.rotation = fgs::testing::random_quat(rng);
        b.opacity = u(rng);
        b.feature.resize(static_cast<Eigen::Index>(f));
        for (auto &v : b.feature) {
            v = 2.0 * g(rng);
        }
        s.gaussians.push_back(b);
    }
    s.layer_offsets = {n};
    return s;
}

double kernel(const FeatureGaussian &g, const Vec3 &x) {
    const Mat3 inv = covariance3d(g.scale, g.rotation).inverse();
    const Vec3 d = x - g.mean;
    return std::exp(-0.5 * d.dot(inv * d));
}

VecX softmax(const VecX &s) {
    VecX e = (s.array() - s.maxCoeff()).exp();
    return e / e.sum();
}

/// Class probabilities with the bank's own embeddings but none of its code.
VecX probs_of(const VecX &f, const TextBank &bank) {
    VecX s(static_cast<Eigen::Index>(bank.size()));
    for (std::size_t c = 0; c < bank.size(); ++c) {
        s[static_cast<Eigen::Index>(c)] = (bank.entries[c].embeddings * f).maxCoeff();
    }
    return softmax(s);
}

GridSpec cube_grid(int n, double size, const Vec3 &origin) {
    GridSpec g;
    g.origin = origin;
    g.voxel_size = size;
    g.dims = {n, n, n};
    return g;
}

} // namespace

TEST(Grid, IndexingAndLocate) {
    GridSpec g;
    g.origin = Vec3(-1, -2, 0);
    g.voxel_size = 0.5;
    g.dims = {4, 3, 2};
    EXPECT_EQ(g.voxel_count(), 24u);
    for (std::size_t v = 0; v < g.voxel_count(); ++v) {
        const auto c = g.coords(v);
        EXPECT_EQ(g.index(c[0], c[1], c[2]), v);
        std::array<int, 3> ijk{};
        ASSERT_TRUE(g.locate(g.center(v), ijk));
        EXPECT_EQ(ijk, c);
    }
    EXPECT_EQ(g.index(1, 0, 0), 1u);
    EXPECT_EQ(g.index(0, 1, 0), 4u);
    EXPECT_EQ(g.index(0, 0, 1), 12u);
    std::array<int, 3> ijk{};
    EXPECT_FALSE(g.locate(Vec3(5, 0, 0), ijk));
    EXPECT_FALSE(g.locate(Vec3(-1.01, -1, 0.1), ijk));
}

TEST(TextProbs, Fixtures) {
    TextBank bank;
    bank.feature_dim = 3;
    for (int c = 0; c < 3; ++c) {
        TextBank::Entry e;
        e.name = "c" + std::to_string(c);
        e.prompts = {e.name};
        e.embeddings = Vec3::Unit(c).transpose();
        bank.entries.push_back(e);
    }
    const VecX p = text_probs(Vec3(1, 0, -1), bank);
    EXPECT_NEAR(p[0], 0.6652, 5e-5);
    EXPECT_NEAR(p[1], 0.2447, 5e-5);
    EXPECT_NEAR(p[2], 0.0900, 5e-5);
    EXPECT_LT((p - softmax(Vec3(1, 0, -1))).cwiseAbs().maxCoeff(), 1e-15);

    TextBank twin = bank;
    twin.entries[1].embeddings = twin.entries[0].embeddings;
    twin.entries.pop_back();
    const VecX q = text_probs(Vec3(0.3, 0.8, 0.1), twin);
    EXPECT_DOUBLE_EQ(q[0], 0.5);
    EXPECT_DOUBLE_EQ(q[1], 0.5);

    const VecX sat = text_probs(Vec3(0, 80, 0), bank);
    EXPECT_GT(sat[1], 1.0 - 1e-12);
}

TEST(TextProbs, ShiftInvarianceAndArgmax) {
    std::mt19937_64 rng(2);
    TextBank bank = fgs::testing::random_bank(5, 8, rng);
    // Append a shared component to every embedding so f . e gains the same constant.
    TextBank shifted;
    shifted.feature_dim = 9;
    for (auto e : bank.entries) {
        Eigen::MatrixXd m(1, 9);
        m << 0.8 * e.embeddings, 0.6;
        e.embeddings = m;
        shifted.entries.push_back(e);
    }
    VecX f = VecX::Zero(8);
    f[0] = 1.0;
    VecX f9(9);
    f9 << 0.8 * f, 0.0;
    VecX g9 = f9;
    g9[8] = 5.0;
    EXPECT_LT((text_probs(f9, shifted) - text_probs(g9, shifted)).cwiseAbs().maxCoeff(), 1e-9);

    Eigen::Index top = 0;
    const VecX base = text_probs(bank.entries[3].embeddings.row(0).transpose(), bank);
    base.maxCoeff(&top);
    EXPECT_EQ(top, 3);
    for (const double k : {0.1, 0.5, 2.0, 10.0}) {
        Eigen::Index t = 0;
        text_probs(k * bank.entries[3].embeddings.row(0).transpose(), bank).maxCoeff(&t);
        EXPECT_EQ(t, 3);
    }
}

TEST(TextBankTest, Validation) {
    std::mt19937_64 rng(1);
    TextBank bank = fgs::testing::random_bank(3, 4, rng);
    EXPECT_NO_THROW(bank.validate());
    bank.entries[1].embeddings *= 2.0;
    EXPECT_THROW(bank.validate(), InvalidInput);
    bank = fgs::testing::random_bank(3, 4, rng);
    bank.entries[0].prompts.push_back("x");
    EXPECT_THROW(bank.validate(), InvalidInput);
    EXPECT_EQ(bank.find("c2"), 2);
    EXPECT_EQ(bank.empty_index(), -1);
}

TEST(Voxelize, EmptySceneAndSingleCenter) {
    std::mt19937_64 rng(4);
    const TextBank bank = fgs::testing::random_bank(3, 4, rng);
    const GridSpec spec = cube_grid(5, 0.4, Vec3::Zero());
    GaussianScene s;
    s.feature_dim = 4;
    s.layer_offsets = {0};
    const auto empty = voxelize(s, bank, spec);
    for (std::size_t v = 0; v < spec.voxel_count(); ++v) {
        EXPECT_FALSE(empty.occupied(v));
        EXPECT_EQ(empty.occ_mass[v], 0.0);
    }

    FeatureGaussian g;
    g.mean = spec.center(2, 2, 2);
    g.scale = Vec3::Constant(0.2);
    g.opacity = 0.375;
    g.feature = bank.entries[1].embeddings.row(0).transpose() * 5.0;
    s.gaussians = {g};
    s.layer_offsets = {1};
    const auto one = voxelize(s, bank, spec);
    const std::size_t c = spec.index(2, 2, 2);
    EXPECT_EQ(one.occ_mass[c], 0.375);
    EXPECT_EQ(one.labels[c], 1);
}

TEST(Voxelize, MatchesBruteForceExact) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 6; ++trial) {
        const TextBank bank = fgs::testing::random_bank(4, 6, rng);
        const GridSpec spec = cube_grid(16, 0.25, Vec3(-2, -2, -2));
        const auto s = random_gaussians(20, 6, Vec3(-2, -2, -2), Vec3(2, 2, 2), rng);
        VoxelizeOptions opt;
        opt.cutoff = VoxelizeOptions::exact();
        opt.occupancy_threshold = 0.1;
        const auto grid = voxelize(s, bank, spec, opt);
        ASSERT_EQ(grid.class_count, 4u);
        std::vector<VecX> p;
        for (const auto &g : s.gaussians) {
            p.push_back(probs_of(g.feature, bank));
        }
        for (std::size_t v = 0; v < spec.voxel_count(); ++v) {
            const Vec3 x = spec.center(v);
            double vo = 0.0;
            VecX vp = VecX::Zero(4);
            for (std::size_t i = 0; i < s.size(); ++i) {
                const double k = kernel(s.gaussians[i], x);
                vo += k * s.gaussians[i].opacity;
                vp += k * p[i];
            }
            ASSERT_NEAR(grid.occ_mass[v], vo, 1e-6);
            for (int c = 0; c < 4; ++c) {
                ASSERT_NEAR(grid.class_mass[v * 4 + static_cast<std::size_t>(c)], vp[c], 1e-6);
            }
            if (vo >= 0.1 + 1e-6) {
                Eigen::Index best = 0;
                vp.maxCoeff(&best);
                EXPECT_EQ(grid.labels[v], best);
            } else if (vo < 0.1 - 1e-6) {
                EXPECT_FALSE(grid.occupied(v));
            }
        }
    }
}

TEST(Voxelize, CutoffDropsOnlyFarTails) {
    std::mt19937_64 rng(9);
    const TextBank bank = fgs::testing::random_bank(3, 4, rng);
    const GridSpec spec = cube_grid(12, 0.3, Vec3(-1.8, -1.8, -1.8));
    const auto s = random_gaussians(30, 4, Vec3(-1.5, -1.5, -1.5), Vec3(1.5, 1.5, 1.5), rng);
    VoxelizeOptions exact;
    exact.cutoff = VoxelizeOptions::exact();
    const auto a = voxelize(s, bank, spec, exact);
    const auto b = voxelize(s, bank, spec);
    double opacity_sum = 0.0;
    for (const auto &g : s.gaussians) {
        opacity_sum += g.opacity;
    }
    for (std::size_t v = 0; v < spec.voxel_count(); ++v) {
        const double gap = static_cast<double>(a.occ_mass[v]) - static_cast<double>(b.occ_mass[v]);
        EXPECT_GE(gap, -1e-6);
        EXPECT_LE(gap, std::exp(-4.5) * opacity_sum + 1e-6);
    }
}

TEST(Voxelize, EmptyClassAndThreshold) {
    TextBank bank;
    bank.feature_dim = 2;
    bank.entries.push_back({"road", {"road"}, Eigen::RowVector2d(1, 0)});
    bank.entries.push_back({"empty", {"sky"}, Eigen::RowVector2d(0, 1)});
    const GridSpec spec = cube_grid(3, 1.0, Vec3::Zero());
    GaussianScene s;
    s.feature_dim = 2;
    FeatureGaussian g;
    g.mean = spec.center(1, 1, 1);
    g.scale = Vec3::Constant(0.3);
    g.opacity = 0.9;
    g.feature = Vec2(0, 4);
    s.gaussians = {g};
    s.layer_offsets = {1};
    EXPECT_FALSE(voxelize(s, bank, spec).occupied(spec.index(1, 1, 1)));
    s.gaussians[0].feature = Vec2(4, 0);
    EXPECT_EQ(voxelize(s, bank, spec).labels[spec.index(1, 1, 1)], 0);
    VoxelizeOptions high;
    high.occupancy_threshold = 0.95;
    EXPECT_FALSE(voxelize(s, bank, spec, high).occupied(spec.index(1, 1, 1)));
    // Zero mass never counts, even at a zero threshold.
    VoxelizeOptions zero;
    zero.occupancy_threshold = 0.0;
    const auto grid = voxelize(s, bank, spec, zero);
    EXPECT_FALSE(grid.occupied(spec.index(0, 0, 0)));
    // Class-agnostic occupancy with an empty bank.
    const auto agnostic = voxelize(s, TextBank{}, spec);
    EXPECT_EQ(agnostic.labels[spec.index(1, 1, 1)], 0);
}

TEST(Voxelize, IsotropicKernelSymmetry) {
    const GridSpec spec = cube_grid(9, 0.4, Vec3::Zero());
    GaussianScene s;
    s.feature_dim = 1;
    FeatureGaussian g;
    g.mean = spec.center(4, 4, 4);
    g.scale = Vec3::Constant(0.7);
    g.opacity = 0.8;
    g.feature = VecX::Zero(1);
    s.gaussians = {g};
    s.layer_offsets = {1};
    VoxelizeOptions opt;
    opt.cutoff = VoxelizeOptions::exact();
    const auto grid = voxelize(s, TextBank{}, spec, opt);
    for (int i = 0; i < 9; ++i) {
        for (int j = 0; j < 9; ++j) {
            for (int k = 0; k < 9; ++k) {
                const double v = grid.occ_mass[spec.index(i, j, k)];
                const int perms[6][3] = {{i, j, k}, {i, k, j}, {j, i, k}, {j, k, i}, {k, i, j}, {k, j, i}};
                for (const auto &p : perms) {
                    for (int m = 0; m < 8; ++m) {
                        const int a = m & 1 ? 8 - p[0] : p[0];
                        const int b = m & 2 ? 8 - p[1] : p[1];
                        const int c = m & 4 ? 8 - p[2] : p[2];
                        ASSERT_NEAR(grid.occ_mass[spec.index(a, b, c)], v, 1e-9);
                    }
                }
            }
        }
    }
}

TEST(Voxelize, OpacityMonotone) {
    std::mt19937_64 rng(10);
    const GridSpec spec = cube_grid(10, 0.3, Vec3(-1.5, -1.5, -1.5));
    auto s = random_gaussians(15, 2, Vec3(-1, -1, -1), Vec3(1, 1, 1), rng);
    TextBank none;
    const auto before = voxelize(s, none, spec);
    for (auto &g : s.gaussians) {
        g.opacity = std::min(1.0, g.opacity + 0.2);
    }
    const auto after = voxelize(s, none, spec);
    for (std::size_t v = 0; v < spec.voxel_count(); ++v) {
        EXPECT_GE(after.occ_mass[v], before.occ_mass[v]);
    }
}

TEST(QueryPoints, FixturesAndBruteForce) {
    std::mt19937_64 rng(11);
    GaussianScene one;
    one.feature_dim = 3;
    FeatureGaussian g;
    g.mean = Vec3(1, 2, 3);
    g.scale = Vec3(0.2, 0.4, 0.3);
    g.opacity = 0.7;
    g.feature = Vec3(0.5, -1.0, 2.0);
    one.gaussians = {g};
    one.layer_offsets = {1};
    const auto at = query_points(one, {g.mean, g.mean + Vec3(40, 0, 0)});
    EXPECT_EQ(at.occupancy[0], 0.7);
    EXPECT_EQ(Vec3(at.features.row(0).transpose()), g.feature);
    EXPECT_EQ(at.occupancy[1], 0.0);
    EXPECT_TRUE(at.features.row(1).isZero(0.0));

    const auto s = random_gaussians(5, 4, Vec3(-1, -1, -1), Vec3(1, 1, 1), rng);
    std::vector<Vec3> pts;
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (int i = 0; i < 10; ++i) {
        pts.emplace_back(u(rng), u(rng), u(rng));
    }
    const auto q = query_points(s, pts, VoxelizeOptions::exact());
    for (std::size_t p = 0; p < pts.size(); ++p) {
        double po = 0.0;
        VecX pf = VecX::Zero(4);
        for (const auto &b : s.gaussians) {
            const double k = kernel(b, pts[p]);
            po += k * b.opacity;
            pf += k * b.feature;
        }
        EXPECT_NEAR(q.occupancy[p], po, 1e-6);
        EXPECT_LT((q.features.row(static_cast<Eigen::Index>(p)).transpose() - pf).cwiseAbs().maxCoeff(), 1e-6);
    }
    EXPECT_THROW(query_points(s, pts, -1.0), InvalidInput);
}

TEST(Voxelize, ThreadCountDoesNotChangeBits) {
    std::mt19937_64 rng(12);
    const TextBank bank = fgs::testing::random_bank(3, 4, rng);
    const GridSpec spec = cube_grid(14, 0.3, Vec3(-2, -2, -2));
    const auto s = random_gaussians(60, 4, Vec3(-2, -2, -2), Vec3(2, 2, 2), rng);
    const auto keep = num_threads();
    set_num_threads(1);
    const auto a = voxelize(s, bank, spec);
    set_num_threads(3);
    const auto b = voxelize(s, bank, spec);
    set_num_threads(keep);
    EXPECT_TRUE(fgs::testing::same_bytes(a.occ_mass, b.occ_mass));
    EXPECT_TRUE(fgs::testing::same_bytes(a.class_mass, b.class_mass));
    EXPECT_EQ(a.labels, b.labels);
}
