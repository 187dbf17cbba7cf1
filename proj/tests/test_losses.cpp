// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#include "fgs/error.hpp"
#include "fgs/losses.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace fgs;

namespace {

std::vector<std::uint8_t> all_true(std::size_t n) { return std::vector<std::uint8_t>(n, 1); }

/// Smooth RGB texture on the plane z = depth, as a function of metric (X, Y).
Vec3 texture(double x, double y) {
    return Vec3(0.5 + 0.4 * std::sin(0.9 * x + 0.3 * y), 0.5 + 0.4 * std::cos(0.7 * y - 0.2 * x),
                0.5 + 0.3 * std::sin(0.5 * x) * std::cos(0.6 * y));
}

/// Photo of the textured plane z = depth seen by a camera whose center sits
/// at `center` (no rotation).
Plane plane_photo(const Intrinsics &k, int w, int h, double depth, const Vec3 &center) {
    Plane p(h, w, 3);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const double z = depth - center.z();
            const double x = (c - k.cx) / k.fx * z + center.x();
            const double y = (r - k.cy) / k.fy * z + center.y();
            const Vec3 col = texture(x, y);
            for (int ch = 0; ch < 3; ++ch) {
                p.at(r, c, ch) = static_cast<float>(col[ch]);
            }
        }
    }
    return p;
}

} // namespace

TEST(PairwiseSum, MatchesSerialSum) {
    std::vector<double> v(1001);
    std::iota(v.begin(), v.end(), 1.0);
    EXPECT_EQ(pairwise_sum(v), 1001.0 * 1002.0 / 2.0);
    EXPECT_EQ(pairwise_sum({}), 0.0);
}

TEST(L1Depth, Fixtures) {
    const std::vector<double> d{1, 2, 4};
    const std::vector<double> dh{2, 2, 1};
    EXPECT_NEAR(l1_depth(d, dh, all_true(3)), 4.0 / 3.0, 1e-12);
    EXPECT_EQ(l1_depth(d, d, all_true(3)), 0.0);
    const std::vector<double> shifted{1.5, 2.5, 4.5};
    EXPECT_NEAR(l1_depth(d, shifted, all_true(3)), 0.5, 1e-12);
    EXPECT_THROW(l1_depth(d, dh, std::vector<std::uint8_t>(3, 0)), EmptyInput);
    EXPECT_THROW(l1_depth(d, dh, all_true(2)), InvalidInput);
}

TEST(Silog, Fixtures) {
    const double ln2 = std::log(2.0);
    const std::vector<double> d{1.0, 3.0};
    const std::vector<double> dh{2.0, 3.0};
    const double hand = ln2 * ln2 / 2.0 - 0.5 * (ln2 / 2.0) * (ln2 / 2.0);
    EXPECT_NEAR(silog(d, dh, all_true(2)), hand, 1e-12);
    EXPECT_NEAR(silog(d, dh, all_true(2)), 0.375 * ln2 * ln2, 1e-12);
    EXPECT_EQ(silog(d, d, all_true(2)), 0.0);
    const std::vector<double> c{2.5, 7.5};
    EXPECT_NEAR(silog(d, c, all_true(2), 1.0), 0.0, 1e-15);
    EXPECT_THROW(silog(std::vector<double>{0.0}, std::vector<double>{1.0}, all_true(1)), InvalidInput);
}

TEST(Silog, ScaleInvariance) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.5, 50.0);
    std::vector<double> d(64), dh(64);
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = u(rng);
        dh[i] = u(rng);
    }
    for (const double c : {0.5, 2.0, 4.0}) {
        std::vector<double> cd(d), cdh(dh);
        for (std::size_t i = 0; i < d.size(); ++i) {
            cd[i] *= c;
            cdh[i] *= c;
        }
        // Powers of two scale both logs by the same exactly representable shift.
        EXPECT_EQ(silog(cd, cdh, all_true(64), 1.0), silog(d, dh, all_true(64), 1.0));
    }
    std::vector<double> cd(d), cdh(dh);
    for (std::size_t i = 0; i < d.size(); ++i) {
        cd[i] *= 3.7;
        cdh[i] *= 3.7;
    }
    EXPECT_NEAR(silog(cd, cdh, all_true(64), 1.0), silog(d, dh, all_true(64), 1.0), 1e-12);
}

TEST(Photometric, IdenticalFrames) {
    Plane photo(12, 16, 3);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto &v : photo.data) {
        v = static_cast<float>(u(rng));
    }
    const Intrinsics k{14.0, 14.0, 7.5, 5.5};
    std::vector<double> depth(12 * 16);
    for (auto &v : depth) {
        v = 1.0 + 20.0 * u(rng);
    }
    const std::vector<PhotoSource> src{{&photo, k, RigidTransform{}}};
    EXPECT_NEAR(photometric_temporal(photo, k, depth, all_true(depth.size()), src), 0.0, 1e-12);
}

TEST(Photometric, ConstantColorIgnoresDepth) {
    const Plane a(10, 10, 3, 0.4f);
    const Intrinsics k{10.0, 10.0, 4.5, 4.5};
    std::vector<double> depth(100, 3.0);
    RigidTransform move;
    move.translation = Vec3(0.05, 0.0, 0.0);
    const std::vector<PhotoSource> src{{&a, k, move}};
    EXPECT_NEAR(photometric_temporal(a, k, depth, all_true(100), src), 0.0, 1e-12);
    std::fill(depth.begin(), depth.end(), 40.0);
    EXPECT_NEAR(photometric_temporal(a, k, depth, all_true(100), src), 0.0, 1e-12);
}

TEST(Photometric, TrueDepthWarpIsNearZero) {
    const int w = 64;
    const int h = 48;
    const Intrinsics k{60.0, 60.0, 31.5, 23.5};
    const double depth = 6.0;
    const Vec3 src_center(0.3, -0.1, 0.0);
    const Plane target = plane_photo(k, w, h, depth, Vec3::Zero());
    const Plane source = plane_photo(k, w, h, depth, src_center);
    RigidTransform t2s;
    t2s.translation = -src_center;
    const std::vector<double> d(static_cast<std::size_t>(w * h), depth);
    const std::vector<PhotoSource> src{{&source, k, t2s}};
    const double good = photometric_temporal(target, k, d, all_true(d.size()), src);
    EXPECT_LT(good, 1e-3);
    const std::vector<double> wrong(d.size(), 2.0 * depth);
    EXPECT_GT(photometric_temporal(target, k, wrong, all_true(d.size()), src), good);

    // A second source that only adds error does not raise the per-pixel minimum.
    const Plane noise(h, w, 3, 0.9f);
    const std::vector<PhotoSource> two{{&source, k, t2s}, {&noise, k, t2s}};
    EXPECT_LE(photometric_temporal(target, k, d, all_true(d.size()), two), good + 1e-15);
}

TEST(Photometric, NoOverlapThrows) {
    const Plane a(8, 8, 3, 0.5f);
    const Intrinsics k{8.0, 8.0, 3.5, 3.5};
    RigidTransform far;
    far.translation = Vec3(100.0, 0.0, 0.0);
    const std::vector<double> d(64, 2.0);
    EXPECT_THROW(photometric_temporal(a, k, d, all_true(64), {{&a, k, far}}), EmptyInput);
    EXPECT_THROW(photometric_temporal(a, k, d, all_true(64), {}), EmptyInput);
}

TEST(FeatLoss, Fixtures) {
    const std::vector<float> f{1, 2, 0, -1, 3, 1};
    const auto same = feat_loss(f, f, 3, all_true(2));
    EXPECT_NEAR(same.cos_term, 0.0, 1e-12);
    EXPECT_EQ(same.mse_term, 0.0);

    std::vector<float> twice(f);
    for (auto &v : twice) {
        v *= 2.0f;
    }
    const auto dbl = feat_loss(f, twice, 3, all_true(2));
    EXPECT_NEAR(dbl.cos_term, 0.0, 1e-12);
    // Squared norms 5 and 11 spread over 2 pixels x 3 channels.
    EXPECT_NEAR(dbl.mse_term, (5.0 + 11.0) / 6.0, 1e-12);

    const std::vector<float> e1{1, 0, 0, 0, 1, 0};
    const std::vector<float> e2{0, 1, 0, 0, 0, 1};
    EXPECT_NEAR(feat_loss(e1, e2, 3, all_true(2)).cos_term, 1.0, 1e-12);
    const auto none = feat_loss(e1, e2, 3, std::vector<std::uint8_t>(2, 0));
    EXPECT_EQ(none.cos_term, 0.0);
    EXPECT_EQ(none.mse_term, 0.0);
}

TEST(FeatLoss, CosineIgnoresPositiveRescaling) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> s(0.1, 10.0);
    const std::size_t px = 50;
    const std::size_t ch = 8;
    std::vector<float> a(px * ch), b(px * ch);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = static_cast<float>(n(rng));
        b[i] = static_cast<float>(n(rng));
    }
    const double base = feat_loss(a, b, ch, all_true(px)).cos_term;
    for (std::size_t p = 0; p < px; ++p) {
        const float k = static_cast<float>(s(rng));
        for (std::size_t c = 0; c < ch; ++c) {
            b[p * ch + c] *= k;
        }
    }
    EXPECT_NEAR(feat_loss(a, b, ch, all_true(px)).cos_term, base, 1e-7);
}

TEST(Losses, NonNegative) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.1, 30.0);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> d(20), dh(20);
        for (std::size_t i = 0; i < 20; ++i) {
            d[i] = u(rng);
            dh[i] = u(rng);
        }
        EXPECT_GE(l1_depth(d, dh, all_true(20)), 0.0);
        EXPECT_GE(silog(d, dh, all_true(20)), 0.0);
        EXPECT_GE(silog(d, dh, all_true(20), 1.0), 0.0);
        std::vector<float> fa(40), fb(40);
        for (std::size_t i = 0; i < 40; ++i) {
            fa[i] = static_cast<float>(n(rng));
            fb[i] = static_cast<float>(n(rng));
        }
        const auto fl = feat_loss(fa, fb, 4, all_true(10));
        EXPECT_GE(fl.cos_term, 0.0);
        EXPECT_GE(fl.mse_term, 0.0);
    }
}

TEST(TotalLoss, UnitComponentsWithDefaultWeights) {
    const LossWeights w;
    EXPECT_EQ(w.lambda_silog, 0.15);
    EXPECT_EQ(w.lambda_temp, 10.0);
    EXPECT_EQ(w.lambda_mse, 10.0);
    const LossComponents ones{1, 1, 1, 1, 1};
    const auto b = total_loss(ones, w);
    EXPECT_NEAR(b.depth, 11.15, 1e-9);
    EXPECT_NEAR(b.feature, 11.0, 1e-9);
    EXPECT_NEAR(b.total, 22.15, 1e-9);
    EXPECT_EQ(total_loss(LossComponents{}, w).total, 0.0);
    double sum = 0.0;
    for (const auto &[name, v] : b.terms) {
        sum += v;
    }
    EXPECT_NEAR(sum, b.total, 1e-12);
}

TEST(TotalLoss, AffineInEachWeight) {
    const LossComponents c{0.3, 0.7, 0.05, 0.2, 0.01};
    LossWeights w;
    const auto base = total_loss(c, w);
    w.lambda_feat = 2.0;
    const auto doubled = total_loss(c, w);
    EXPECT_NEAR(doubled.total - base.total, base.feature, 1e-12);

    // total(λ) is a straight line in every λ: midpoint equals mean of endpoints.
    auto probe = [&](double LossWeights::*field) {
        LossWeights a, b, m;
        a.*field = 0.5;
        b.*field = 3.5;
        m.*field = 2.0;
        return std::abs(total_loss(c, m).total - 0.5 * (total_loss(c, a).total + total_loss(c, b).total));
    };
    for (auto field : {&LossWeights::lambda_silog, &LossWeights::lambda_temp, &LossWeights::lambda_mse,
                       &LossWeights::lambda_depth, &LossWeights::lambda_feat}) {
        EXPECT_LT(probe(field), 1e-12);
    }
    w.lambda_temp = -1.0;
    EXPECT_THROW(total_loss(c, w), InvalidInput);
}
