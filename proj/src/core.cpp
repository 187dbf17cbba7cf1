// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#include "fgs/core.hpp"

#include "fgs/error.hpp"

#include <Eigen/LU>

#include <cmath>
#include <string>

namespace fgs {

DepthMap DepthMap::from_plane(Plane depth) {
    if (depth.channels != 1) {
        throw InvalidInput("depth plane must have exactly one channel");
    }
    DepthMap out;
    out.valid.resize(depth.pixel_count());
    for (std::size_t i = 0; i < out.valid.size(); ++i) {
        const float d = depth.data[i];
        out.valid[i] = std::isfinite(d) && d > 0.0f ? 1 : 0;
    }
    out.depth = std::move(depth);
    return out;
}

std::size_t DepthMap::valid_count() const {
    std::size_t n = 0;
    for (const auto v : valid) {
        n += v != 0 ? 1 : 0;
    }
    return n;
}

void validate(const FeatureGaussian &g) {
    if (!g.mean.allFinite() || !g.scale.allFinite() || !g.rotation.allFinite() || !std::isfinite(g.opacity) ||
        !g.feature.allFinite()) {
        throw InvalidInput("gaussian has non-finite components");
    }
    if ((g.scale.array() <= 0.0).any()) {
        throw InvalidInput("gaussian scale must be strictly positive");
    }
    if (std::abs(g.rotation.norm() - 1.0) > 1e-6) {
        throw InvalidInput("gaussian rotation must be a unit quaternion");
    }
    if (g.opacity < 0.0 || g.opacity > 1.0) {
        throw InvalidInput("gaussian opacity must lie in [0, 1]");
    }
}

void GaussianScene::validate() const {
    // Zero-growth layers (a densification pass that found nothing to add) keep
    // the previous offset, so offsets are only required to be non-decreasing.
    for (std::size_t i = 1; i < layer_offsets.size(); ++i) {
        if (layer_offsets[i] < layer_offsets[i - 1]) {
            throw InvalidInput("layer offsets must be non-decreasing");
        }
    }
    if (!layer_offsets.empty() && layer_offsets.back() != gaussians.size()) {
        throw InvalidInput("last layer offset must equal the gaussian count");
    }
    for (const auto &g : gaussians) {
        if (static_cast<std::size_t>(g.feature.size()) != feature_dim) {
            throw InvalidInput("gaussian feature dimension does not match the scene");
        }
        fgs::validate(g);
    }
}

void CameraView::validate() const {
    if (!(intrinsics.fx > 0.0) || !(intrinsics.fy > 0.0)) {
        throw InvalidInput("focal lengths must be positive");
    }
    if (width <= 0 || height <= 0) {
        throw InvalidInput("image size must be positive");
    }
    const Mat3 &r = camera_to_ego.rotation;
    if (!r.allFinite() || !camera_to_ego.translation.allFinite() ||
        (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 || r.determinant() < 0.0) {
        throw InvalidInput("camera rotation must be orthonormal");
    }
    auto check = [&](const Plane &p, const char *what) {
        if (p.height != height || p.width != width) {
            throw InvalidInput(std::string(what) + " plane size does not match the camera");
        }
    };
    if (ref_depth) {
        check(ref_depth->depth, "depth");
    }
    if (ref_feature) {
        check(*ref_feature, "feature");
    }
    if (photo) {
        check(*photo, "photo");
        if (photo->channels != 3) {
            throw InvalidInput("photo plane must have three channels");
        }
    }
}

Mat3 quat_to_rotmat(const Vec4 &q) {
    const double n = q.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw InvalidInput("quaternion must have a finite non-zero norm");
    }
    const double w = q[0] / n;
    const double x = q[1] / n;
    const double y = q[2] / n;
    const double z = q[3] / n;

    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

Mat3 covariance3d(const Vec3 &scale, const Vec4 &rotation) {
    if (!((scale.array() > 0.0).all())) {
        throw InvalidInput("scale must be strictly positive");
    }
    const Mat3 m = quat_to_rotmat(rotation) * scale.asDiagonal();
    Mat3 cov = m * m.transpose();
    // Symmetrize away rounding so downstream Cholesky/eigen solvers see an exact SPD matrix.
    return 0.5 * (cov + cov.transpose());
}

std::optional<Projection> project_point(const Vec3 &p_ego, const CameraView &cam) {
    const Vec3 p = cam.camera_to_ego.apply_inverse(p_ego);
    if (!(p.z() > kNearPlane)) {
        return std::nullopt;
    }
    const auto &k = cam.intrinsics;
    return Projection{Vec2(k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy), p.z()};
}

Vec3 backproject_pixel(const CameraView &cam, double u, double v, double depth) {
    const auto &k = cam.intrinsics;
    const Vec3 p_cam((u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth);
    return cam.camera_to_ego.apply(p_cam);
}

std::vector<Vec3> backproject(const CameraView &cam, const DepthMap &depth) {
    if (depth.depth.width != cam.width || depth.depth.height != cam.height) {
        throw InvalidInput("depth map size does not match the camera");
    }
    std::vector<Vec3> points;
    points.reserve(depth.valid_count());
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            if (depth.is_valid(y, x)) {
                points.push_back(backproject_pixel(cam, x, y, depth.depth.at(y, x)));
            }
        }
    }
    return points;
}

} // namespace fgs
