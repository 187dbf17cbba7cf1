// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace fgs {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;

/// Points closer than this along the camera z axis are considered behind the camera.
inline constexpr double kNearPlane = 0.1;

/// Dense row-major image with interleaved channels, stored as f32 to match the
/// on-disk plane format.
struct Plane {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;

    Plane() = default;
    Plane(int h, int w, int c, float fill = 0.0f)
        : height(h), width(w), channels(c),
          data(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c), fill) {}

    std::size_t pixel_count() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
    std::size_t index(int y, int x, int c = 0) const {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
                   static_cast<std::size_t>(channels) +
               static_cast<std::size_t>(c);
    }
    float &at(int y, int x, int c = 0) { return data[index(y, x, c)]; }
    float at(int y, int x, int c = 0) const { return data[index(y, x, c)]; }
    std::span<const float> pixel(int y, int x) const {
        return {data.data() + index(y, x, 0), static_cast<std::size_t>(channels)};
    }
};

/// Reference depth in meters plus a per-pixel validity flag.
struct DepthMap {
    Plane depth;
    std::vector<std::uint8_t> valid;

    /// Pixels with finite, strictly positive depth are valid.
    static DepthMap from_plane(Plane depth);
    bool is_valid(int y, int x) const {
        return valid[static_cast<std::size_t>(y) * static_cast<std::size_t>(depth.width) + static_cast<std::size_t>(x)] != 0;
    }
    std::size_t valid_count() const;
};

/// One anisotropic blob: position, per-axis scale, unit quaternion (w,x,y,z),
/// opacity and a text-aligned feature vector. Everything lives in the ego frame.
struct FeatureGaussian {
    Vec3 mean = Vec3::Zero();
    Vec3 scale = Vec3::Ones();
    Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0);
    double opacity = 0.0;
    VecX feature;
};

/// Throws InvalidInput unless all components are finite, scale > 0,
/// |rotation| = 1 within 1e-6 and opacity lies in [0, 1].
void validate(const FeatureGaussian &g);

struct GaussianScene {
    std::size_t feature_dim = 0;
    std::vector<FeatureGaussian> gaussians;
    /// Cumulative counts per progressive layer; the last entry equals gaussians.size().
    std::vector<std::size_t> layer_offsets;

    std::size_t size() const { return gaussians.size(); }
    std::size_t layer_count() const { return layer_offsets.size(); }
    std::size_t layer_begin(std::size_t layer) const { return layer == 0 ? 0 : layer_offsets[layer - 1]; }
    std::size_t layer_end(std::size_t layer) const { return layer_offsets[layer]; }

    /// Checks the offset structure and every Gaussian.
    void validate() const;
};

struct Intrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
};

/// Rigid transform x_dst = rotation * x_src + translation.
struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3 &p) const { return rotation * p + translation; }
    Vec3 apply_inverse(const Vec3 &p) const { return rotation.transpose() * (p - translation); }
    RigidTransform inverse() const { return {rotation.transpose(), -(rotation.transpose() * translation)}; }
    RigidTransform operator*(const RigidTransform &rhs) const {
        return {rotation * rhs.rotation, rotation * rhs.translation + translation};
    }
};

/// Pinhole camera with a camera-to-ego pose. Pixel centers sit at integer
/// coordinates; camera axes are x right, y down, z forward.
struct CameraView {
    Intrinsics intrinsics;
    RigidTransform camera_to_ego;
    int width = 0;
    int height = 0;
    std::int64_t timestamp = 0;
    std::optional<DepthMap> ref_depth;
    std::optional<Plane> ref_feature;
    std::optional<Plane> photo;

    /// fx, fy > 0, positive image size, orthonormal rotation within 1e-6, and
    /// matching plane sizes.
    void validate() const;
};

struct RenderOutput {
    int width = 0;
    int height = 0;
    std::size_t feature_dim = 0;
    std::vector<double> depth;
    std::vector<double> acc_alpha;
    std::vector<float> feature;
    std::vector<std::uint8_t> valid;

    RenderOutput() = default;
    RenderOutput(int w, int h, std::size_t f)
        : width(w), height(h), feature_dim(f), depth(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0.0),
          acc_alpha(depth.size(), 0.0), feature(depth.size() * f, 0.0f), valid(depth.size(), 0) {}

    std::size_t pixel_count() const { return depth.size(); }
    std::size_t index(int y, int x) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
    }
};

/// Pixel position and camera-z depth of a projected point.
struct Projection {
    Vec2 pixel;
    double depth = 0.0;
};

/// Rotation matrix of a quaternion (w,x,y,z); the quaternion is renormalized.
Mat3 quat_to_rotmat(const Vec4 &q);

/// R S Sᵀ Rᵀ with S = diag(scale).
Mat3 covariance3d(const Vec3 &scale, const Vec4 &rotation);

/// Perspective projection of an ego-frame point. Returns nullopt when the point
/// is at or behind the near plane.
std::optional<Projection> project_point(const Vec3 &p_ego, const CameraView &cam);

/// Ego-frame point seen at pixel (u, v) with camera-z depth `depth`.
Vec3 backproject_pixel(const CameraView &cam, double u, double v, double depth);

/// One ego-frame point per valid pixel of `depth`, row-major pixel order.
std::vector<Vec3> backproject(const CameraView &cam, const DepthMap &depth);

} // namespace fgs
