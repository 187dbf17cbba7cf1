// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#include "fgs/core.hpp"
#include "fgs/error.hpp"
#include "test_util.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <algorithm>
#include <limits>

using namespace fgs;
using fgs::testing::eigen_rotation;
using fgs::testing::random_quat;

TEST(Quaternion, IdentityAndHalfTurn) {
    EXPECT_TRUE(quat_to_rotmat(Vec4(1, 0, 0, 0)).isApprox(Mat3::Identity(), 1e-15));
    const Mat3 expected = Vec3(-1, -1, 1).asDiagonal();
    EXPECT_TRUE(quat_to_rotmat(Vec4(0, 0, 0, 1)).isApprox(expected, 1e-15));
}

TEST(Quaternion, MatchesEigenAndIsOrthonormal) {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 1000; ++i) {
        const Vec4 q = random_quat(rng);
        const Mat3 r = quat_to_rotmat(q);
        EXPECT_LT((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_LT((r - eigen_rotation(q)).cwiseAbs().maxCoeff(), 1e-12);
        // Basis vectors rotated directly by q v q*.
        const Eigen::Quaterniond qe(q[0], q[1], q[2], q[3]);
        for (int a = 0; a < 3; ++a) {
            const Vec3 e = Vec3::Unit(a);
            EXPECT_LT((r.col(a) - qe * e).norm(), 1e-12);
        }
    }
}

TEST(Quaternion, RenormalizesInput) {
    std::mt19937_64 rng(3);
    const Vec4 q = random_quat(rng);
    EXPECT_LT((quat_to_rotmat(3.5 * q) - quat_to_rotmat(q)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Covariance, AxisAlignedCases) {
    EXPECT_TRUE(covariance3d(Vec3(1, 1, 1), Vec4(1, 0, 0, 0)).isApprox(Mat3::Identity(), 1e-15));
    const Mat3 expected = Vec3(4, 1, 1).asDiagonal();
    EXPECT_TRUE(covariance3d(Vec3(2, 1, 1), Vec4(1, 0, 0, 0)).isApprox(expected, 1e-15));
}

TEST(Covariance, EigenvaluesAreSquaredScales) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 100; ++i) {
        const Mat3 cov = covariance3d(Vec3(2, 1, 0.5), random_quat(rng));
        Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
        const Vec3 ev = es.eigenvalues();
        EXPECT_NEAR(ev[0], 0.25, 1e-12);
        EXPECT_NEAR(ev[1], 1.0, 1e-12);
        EXPECT_NEAR(ev[2], 4.0, 1e-12);
    }
}

TEST(Covariance, QuaternionSignInvariant) {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> s(0.05, 3.0);
    for (int i = 0; i < 200; ++i) {
        const Vec3 scale(s(rng), s(rng), s(rng));
        const Vec4 q = random_quat(rng);
        EXPECT_LE((covariance3d(scale, q) - covariance3d(scale, -q)).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Projection, OpticalAxisAndCameraCenter) {
    const CameraView cam = fgs::testing::simple_camera(64, 48, 100.0);
    const auto p = project_point(Vec3(0, 0, 5), cam);
    ASSERT_TRUE(p.has_value());
    EXPECT_DOUBLE_EQ(p->pixel.x(), cam.intrinsics.cx);
    EXPECT_DOUBLE_EQ(p->pixel.y(), cam.intrinsics.cy);
    EXPECT_DOUBLE_EQ(p->depth, 5.0);
    EXPECT_FALSE(project_point(Vec3::Zero(), cam).has_value());
    EXPECT_FALSE(project_point(Vec3(0, 0, -1), cam).has_value());
}

TEST(Projection, MatchesHomogeneousMatrix) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    CameraView cam;
    cam.width = 200;
    cam.height = 100;
    cam.intrinsics = {180.0, 170.0, 99.5, 49.5};
    cam.camera_to_ego.rotation = eigen_rotation(random_quat(rng));
    cam.camera_to_ego.translation = Vec3(1.0, -2.0, 0.5);

    Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
    t.topLeftCorner<3, 3>() = cam.camera_to_ego.rotation;
    t.topRightCorner<3, 1>() = cam.camera_to_ego.translation;
    Eigen::Matrix<double, 3, 4> k = Eigen::Matrix<double, 3, 4>::Zero();
    k(0, 0) = 180.0;
    k(1, 1) = 170.0;
    k(0, 2) = 99.5;
    k(1, 2) = 49.5;
    k(2, 2) = 1.0;
    const Eigen::Matrix<double, 3, 4> proj = k * t.inverse();

    int checked = 0;
    for (int i = 0; i < 200; ++i) {
        const Vec3 p = cam.camera_to_ego.apply(Vec3(3 * u(rng), 3 * u(rng), 4.0 + 2.0 * u(rng)));
        const Eigen::Vector3d h = proj * p.homogeneous();
        const auto got = project_point(p, cam);
        ASSERT_TRUE(got.has_value());
        EXPECT_NEAR(got->pixel.x(), h.x() / h.z(), 1e-9);
        EXPECT_NEAR(got->pixel.y(), h.y() / h.z(), 1e-9);
        EXPECT_NEAR(got->depth, h.z(), 1e-12);
        ++checked;
    }
    EXPECT_EQ(checked, 200);
}

TEST(Backproject, CenterPixelAndEmpty) {
    CameraView cam = fgs::testing::simple_camera(5, 5, 10.0);
    cam.camera_to_ego.translation = Vec3(1, 2, 3);
    Plane d(5, 5, 1, 0.0f);
    d.at(2, 2) = 7.0f;
    const auto pts = backproject(cam, DepthMap::from_plane(d));
    ASSERT_EQ(pts.size(), 1u);
    EXPECT_TRUE(pts[0].isApprox(Vec3(1, 2, 10), 1e-12));

    const auto none = backproject(cam, DepthMap::from_plane(Plane(5, 5, 1, 0.0f)));
    EXPECT_TRUE(none.empty());
}

TEST(Backproject, RoundTrip) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(1.0, 30.0);
    CameraView cam;
    cam.width = 4;
    cam.height = 4;
    cam.intrinsics = {3.0, 3.5, 1.5, 1.5};
    cam.camera_to_ego.rotation = eigen_rotation(random_quat(rng));
    cam.camera_to_ego.translation = Vec3(-4, 0.3, 2);
    Plane d(4, 4, 1);
    for (auto &v : d.data) {
        v = static_cast<float>(u(rng));
    }
    const DepthMap dm = DepthMap::from_plane(d);
    const auto pts = backproject(cam, dm);
    ASSERT_EQ(pts.size(), 16u);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            const auto p = project_point(pts[static_cast<std::size_t>(y * 4 + x)], cam);
            ASSERT_TRUE(p.has_value());
            EXPECT_LT(std::abs(p->pixel.x() - x), 1e-4);
            EXPECT_LT(std::abs(p->pixel.y() - y), 1e-4);
            EXPECT_LT(std::abs(p->depth - d.at(y, x)), 1e-4);
        }
    }
}

TEST(DepthMapTest, ValidityRule) {
    Plane d(1, 4, 1);
    d.data = {1.0f, 0.0f, -2.0f, std::numeric_limits<float>::quiet_NaN()};
    const DepthMap dm = DepthMap::from_plane(d);
    EXPECT_TRUE(dm.is_valid(0, 0));
    EXPECT_FALSE(dm.is_valid(0, 1));
    EXPECT_FALSE(dm.is_valid(0, 2));
    EXPECT_FALSE(dm.is_valid(0, 3));
    EXPECT_EQ(dm.valid_count(), 1u);
}

TEST(Validation, GaussianInvariants) {
    FeatureGaussian g;
    g.opacity = 0.5;
    g.feature = VecX::Zero(4);
    EXPECT_NO_THROW(validate(g));
    auto bad = g;
    bad.scale.x() = 0.0;
    EXPECT_THROW(validate(bad), InvalidInput);
    bad = g;
    bad.rotation = Vec4(1, 1, 0, 0);
    EXPECT_THROW(validate(bad), InvalidInput);
    bad = g;
    bad.opacity = 1.5;
    EXPECT_THROW(validate(bad), InvalidInput);
    bad = g;
    bad.mean.y() = std::numeric_limits<double>::infinity();
    EXPECT_THROW(validate(bad), InvalidInput);
}

TEST(Validation, SceneOffsets) {
    GaussianScene s;
    s.feature_dim = 2;
    FeatureGaussian g;
    g.opacity = 0.5;
    g.feature = VecX::Zero(2);
    s.gaussians = {g, g, g};
    s.layer_offsets = {2, 3};
    EXPECT_NO_THROW(s.validate());
    s.layer_offsets = {2, 2, 3};
    EXPECT_NO_THROW(s.validate());
    s.layer_offsets = {3, 2};
    EXPECT_THROW(s.validate(), InvalidInput);
    s.layer_offsets = {2};
    EXPECT_THROW(s.validate(), InvalidInput);
    s.layer_offsets = {3};
    s.gaussians[1].feature = VecX::Zero(3);
    EXPECT_THROW(s.validate(), InvalidInput);
}

TEST(Validation, CameraView) {
    CameraView cam = fgs::testing::simple_camera(8, 6, 5.0);
    EXPECT_NO_THROW(cam.validate());
    cam.intrinsics.fx = 0.0;
    EXPECT_THROW(cam.validate(), InvalidInput);
    cam = fgs::testing::simple_camera(8, 6, 5.0);
    cam.camera_to_ego.rotation(0, 1) = 0.1;
    EXPECT_THROW(cam.validate(), InvalidInput);
    cam = fgs::testing::simple_camera(8, 6, 5.0);
    cam.ref_feature = Plane(6, 7, 3);
    EXPECT_THROW(cam.validate(), InvalidInput);
}

TEST(RigidTransformTest, InverseAndComposition) {
    std::mt19937_64 rng(19);
    RigidTransform a{eigen_rotation(random_quat(rng)), Vec3(1, 2, 3)};
    RigidTransform b{eigen_rotation(random_quat(rng)), Vec3(-1, 0, 4)};
    const Vec3 p(0.3, -0.7, 2.0);
    EXPECT_LT((a.inverse().apply(a.apply(p)) - p).norm(), 1e-12);
    EXPECT_LT(((a * b).apply(p) - a.apply(b.apply(p))).norm(), 1e-12);
    EXPECT_LT((a.apply_inverse(a.apply(p)) - p).norm(), 1e-12);
}
