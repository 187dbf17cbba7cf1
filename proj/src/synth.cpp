// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#include "fgs/synth.hpp"

#include "fgs/error.hpp"
#include "fgs/parallel.hpp"

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace fgs {
namespace {

using json = nlohmann::json;

constexpr double kEps = 1e-9;
constexpr double kLatticeOpacity = 0.9;

Vec3 plane_axis_v(const Primitive &p) { return p.normal.cross(p.axis_u); }

std::optional<double> hit_box(const Primitive &p, const Vec3 &o, const Vec3 &d) {
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    const Vec3 lo = p.center - p.half_extent;
    const Vec3 hi = p.center + p.half_extent;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-15) {
            if (o[a] < lo[a] || o[a] > hi[a]) {
                return std::nullopt;
            }
            continue;
        }
        double ta = (lo[a] - o[a]) / d[a];
        double tb = (hi[a] - o[a]) / d[a];
        if (ta > tb) {
            std::swap(ta, tb);
        }
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (t0 > t1 || t1 <= 0.0) {
        return std::nullopt;
    }
    return t0 > 0.0 ? t0 : t1;
}

std::optional<double> hit_plane(const Primitive &p, const Vec3 &o, const Vec3 &d) {
    const double denom = p.normal.dot(d);
    if (std::abs(denom) < 1e-15) {
        return std::nullopt;
    }
    const double t = p.normal.dot(p.center - o) / denom;
    if (t <= 0.0) {
        return std::nullopt;
    }
    const Vec3 rel = o + t * d - p.center;
    if (std::abs(rel.dot(p.axis_u)) > p.half_extent.x() + kEps ||
        std::abs(rel.dot(plane_axis_v(p))) > p.half_extent.y() + kEps) {
        return std::nullopt;
    }
    return t;
}

std::optional<double> hit_sphere(const Primitive &p, const Vec3 &o, const Vec3 &d) {
    const Vec3 oc = o - p.center;
    const double r = p.half_extent.x();
    const double b = oc.dot(d);
    const double c = oc.squaredNorm() - r * r;
    const double disc = b * b - c;
    if (disc < 0.0) {
        return std::nullopt;
    }
    const double s = std::sqrt(disc);
    if (-b - s > 0.0) {
        return -b - s;
    }
    if (-b + s > 0.0) {
        return -b + s;
    }
    return std::nullopt;
}

bool inside_solid(const Primitive &p, const Vec3 &x) {
    switch (p.shape) {
    case Shape::Box:
        return ((x - p.center).cwiseAbs() - p.half_extent).maxCoeff() <= kEps;
    case Shape::Sphere:
        return (x - p.center).norm() <= p.half_extent.x() + kEps;
    case Shape::Plane:
        return false;
    }
    return false;
}

/// Plane slab membership: signed distance in (-v/2, v/2] and inside the rectangle.
bool inside_slab(const Primitive &p, const Vec3 &x, double voxel) {
    const Vec3 rel = x - p.center;
    const double dn = rel.dot(p.normal);
    return dn > -0.5 * voxel + kEps && dn <= 0.5 * voxel + kEps &&
           std::abs(rel.dot(p.axis_u)) <= p.half_extent.x() + kEps &&
           std::abs(rel.dot(plane_axis_v(p))) <= p.half_extent.y() + kEps;
}

/// Smoothly varying color pattern on top of a per-class base color.
Vec3 texture(const Vec3 &base, const Vec3 &x) {
    const double m = 0.75 + 0.25 * std::sin(2.1 * x.x() + 0.7 * x.z()) * std::cos(1.7 * x.y() - 0.9 * x.z());
    return (base * m).cwiseMax(0.0).cwiseMin(1.0);
}

const Vec3 kSkyColor(0.6, 0.7, 0.9);

Mat3 camera_rotation(double yaw, double pitch) {
    const Vec3 f(std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw), -std::sin(pitch));
    const Vec3 r(std::sin(yaw), -std::cos(yaw), 0.0);
    const Vec3 d = f.cross(r);
    Mat3 rot;
    rot.col(0) = r;
    rot.col(1) = d;
    rot.col(2) = f;
    return rot;
}

std::vector<CameraView> make_rig(const RigSpec &rig) {
    std::vector<CameraView> views;
    const double deg = std::numbers::pi / 180.0;
    const double f = 0.5 * rig.width / std::tan(0.5 * rig.horizontal_fov_deg * deg);
    for (int frame = 0; frame < rig.frames; ++frame) {
        for (int c = 0; c < rig.camera_count; ++c) {
            CameraView v;
            v.width = rig.width;
            v.height = rig.height;
            v.intrinsics = {f, f, 0.5 * (rig.width - 1), 0.5 * (rig.height - 1)};
            const double yaw = 2.0 * std::numbers::pi * c / rig.camera_count;
            v.camera_to_ego.rotation = camera_rotation(yaw, rig.pitch_deg * deg);
            v.camera_to_ego.translation =
                rig.center + rig.radius * v.camera_to_ego.rotation.col(2) + static_cast<double>(frame) * rig.frame_step;
            v.timestamp = frame;
            views.push_back(std::move(v));
        }
    }
    return views;
}

Vec4 quat_from_frame(const Vec3 &u, const Vec3 &v, const Vec3 &n) {
    Mat3 m;
    m.col(0) = u;
    m.col(1) = v;
    m.col(2) = n;
    const Eigen::Quaterniond q(m);
    Vec4 out(q.w(), q.x(), q.y(), q.z());
    return out / out.norm();
}

/// Lattice Gaussians over a rectangle; flattened along its normal.
void rectangle_lattice(const Vec3 &center, const Vec3 &u, const Vec3 &v, double hu, double hv, double spacing,
                       const VecX &feature, int primitive, GaussianScene &scene, std::vector<int> &owner) {
    const Vec3 n = u.cross(v);
    const int nu = std::max(1, static_cast<int>(std::lround(2.0 * hu / spacing)));
    const int nv = std::max(1, static_cast<int>(std::lround(2.0 * hv / spacing)));
    const double su = 2.0 * hu / nu;
    const double sv = 2.0 * hv / nv;
    const Vec4 rot = quat_from_frame(u, v, n);
    for (int j = 0; j < nv; ++j) {
        for (int i = 0; i < nu; ++i) {
            FeatureGaussian g;
            g.mean = center + u * (-hu + (i + 0.5) * su) + v * (-hv + (j + 0.5) * sv);
            g.scale = Vec3(0.6 * su, 0.6 * sv, 0.1 * std::min(su, sv));
            g.rotation = rot;
            g.opacity = kLatticeOpacity;
            g.feature = feature;
            scene.gaussians.push_back(std::move(g));
            owner.push_back(primitive);
        }
    }
}

void primitive_lattice(const Primitive &p, double spacing, const VecX &feature, int index, GaussianScene &scene,
                       std::vector<int> &owner) {
    switch (p.shape) {
    case Shape::Plane:
        rectangle_lattice(p.center, p.axis_u, plane_axis_v(p), p.half_extent.x(), p.half_extent.y(), spacing, feature,
                          index, scene, owner);
        break;
    case Shape::Box:
        for (int a = 0; a < 3; ++a) {
            const int b = (a + 1) % 3;
            const int c = (a + 2) % 3;
            for (const double sign : {-1.0, 1.0}) {
                Vec3 n = Vec3::Zero();
                n[a] = sign;
                Vec3 u = Vec3::Zero();
                u[b] = 1.0;
                Vec3 v = n.cross(u);
                rectangle_lattice(p.center + n * p.half_extent[a], u, v, p.half_extent[b], p.half_extent[c], spacing,
                                  feature, index, scene, owner);
            }
        }
        break;
    case Shape::Sphere: {
        const double r = p.half_extent.x();
        const int rings = std::max(2, static_cast<int>(std::ceil(std::numbers::pi * r / spacing)));
        for (int i = 0; i < rings; ++i) {
            const double phi = std::numbers::pi * (i + 0.5) / rings;
            const int around = std::max(1, static_cast<int>(std::ceil(2.0 * std::numbers::pi * r * std::sin(phi) / spacing)));
            for (int j = 0; j < around; ++j) {
                const double theta = 2.0 * std::numbers::pi * j / around;
                const Vec3 n(std::sin(phi) * std::cos(theta), std::sin(phi) * std::sin(theta), std::cos(phi));
                Vec3 u = Vec3::UnitZ().cross(n);
                if (u.norm() < 1e-9) {
                    u = Vec3::UnitX();
                }
                u.normalize();
                FeatureGaussian g;
                g.mean = p.center + r * n;
                g.scale = Vec3(0.6 * spacing, 0.6 * spacing, 0.1 * spacing);
                g.rotation = quat_from_frame(u, n.cross(u), n);
                g.opacity = kLatticeOpacity;
                g.feature = feature;
                scene.gaussians.push_back(std::move(g));
                owner.push_back(index);
            }
        }
        break;
    }
    }
}

/// Marks voxels crossed by the segment origin + t·dir, t ∈ [0, t_end],
/// stopping after the first voxel labelled occupied.
void traverse(const GridSpec &grid, const std::vector<std::uint16_t> &labels, const Vec3 &origin, const Vec3 &dir,
              double t_end, std::vector<std::uint8_t> &mask) {
    const Vec3 lo = grid.origin;
    const Vec3 hi = grid.origin + grid.voxel_size * Vec3(grid.dims[0], grid.dims[1], grid.dims[2]);
    double t0 = 0.0, t1 = t_end;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(dir[a]) < 1e-15) {
            if (origin[a] < lo[a] || origin[a] >= hi[a]) {
                return;
            }
            continue;
        }
        double ta = (lo[a] - origin[a]) / dir[a];
        double tb = (hi[a] - origin[a]) / dir[a];
        if (ta > tb) {
            std::swap(ta, tb);
        }
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (t0 > t1) {
        return;
    }
    const Vec3 start = origin + (t0 + 1e-9) * dir;
    std::array<int, 3> ijk{};
    std::array<int, 3> step{};
    Vec3 t_max, t_delta;
    for (int a = 0; a < 3; ++a) {
        const double f = (start[a] - lo[a]) / grid.voxel_size;
        ijk[a] = std::clamp(static_cast<int>(std::floor(f)), 0, grid.dims[a] - 1);
        if (dir[a] > 0.0) {
            step[a] = 1;
            t_max[a] = t0 + ((lo[a] + (ijk[a] + 1) * grid.voxel_size) - start[a]) / dir[a];
            t_delta[a] = grid.voxel_size / dir[a];
        } else if (dir[a] < 0.0) {
            step[a] = -1;
            t_max[a] = t0 + ((lo[a] + ijk[a] * grid.voxel_size) - start[a]) / dir[a];
            t_delta[a] = -grid.voxel_size / dir[a];
        } else {
            step[a] = 0;
            t_max[a] = std::numeric_limits<double>::infinity();
            t_delta[a] = std::numeric_limits<double>::infinity();
        }
    }
    while (true) {
        const std::size_t v = grid.index(ijk[0], ijk[1], ijk[2]);
        mask[v] = 1;
        if (labels[v] != kEmptyLabel) {
            break;
        }
        int a = 0;
        if (t_max[1] < t_max[a]) {
            a = 1;
        }
        if (t_max[2] < t_max[a]) {
            a = 2;
        }
        if (t_max[a] > t1) {
            break;
        }
        ijk[a] += step[a];
        if (ijk[a] < 0 || ijk[a] >= grid.dims[a]) {
            break;
        }
        t_max[a] += t_delta[a];
    }
}

/// Ego-frame unit ray through pixel (x, y).
Vec3 pixel_ray(const CameraView &v, int x, int y) {
    const Vec3 d_cam((x - v.intrinsics.cx) / v.intrinsics.fx, (y - v.intrinsics.cy) / v.intrinsics.fy, 1.0);
    return (v.camera_to_ego.rotation * d_cam).normalized();
}

Vec3 vec3_from_json(const json &j) {
    if (!j.is_array() || j.size() != 3) {
        throw InvalidInput("expected a 3-element array");
    }
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec3_to_json(const Vec3 &v) { return json::array({v.x(), v.y(), v.z()}); }

} // namespace

void SynthSpec::validate() const {
    if (classes.empty()) {
        throw InvalidInput("synthetic scene needs at least one class");
    }
    if (feature_dim < classes.size() + 1) {
        throw InvalidInput("feature width must exceed the class count (one extra slot for 'empty')");
    }
    for (const auto &p : primitives) {
        if (p.class_id < 0 || static_cast<std::size_t>(p.class_id) >= classes.size()) {
            throw InvalidInput("primitive refers to an unknown class");
        }
        if (!p.center.allFinite()) {
            throw InvalidInput("primitive center is not finite");
        }
        switch (p.shape) {
        case Shape::Box:
            if (!(p.half_extent.array() > 0.0).all()) {
                throw InvalidInput("degenerate box");
            }
            break;
        case Shape::Sphere:
            if (!(p.half_extent.x() > 0.0)) {
                throw InvalidInput("degenerate sphere");
            }
            break;
        case Shape::Plane:
            if (!(p.half_extent.x() > 0.0 && p.half_extent.y() > 0.0) || std::abs(p.normal.norm() - 1.0) > 1e-6 ||
                std::abs(p.axis_u.norm() - 1.0) > 1e-6 || std::abs(p.normal.dot(p.axis_u)) > 1e-6) {
                throw InvalidInput("degenerate plane (needs positive extents and orthonormal normal / axis_u)");
            }
            break;
        }
    }
    if (rig.camera_count <= 0 || rig.width <= 0 || rig.height <= 0 || rig.frames <= 0 ||
        !(rig.horizontal_fov_deg > 0.0 && rig.horizontal_fov_deg < 180.0)) {
        throw InvalidInput("bad camera rig");
    }
    if (!(grid.voxel_size > 0.0) || grid.dims[0] <= 0 || grid.dims[1] <= 0 || grid.dims[2] <= 0) {
        throw InvalidInput("bad grid");
    }
    if (!(lattice_spacing > 0.0) || !(depth_noise >= 0.0) || !(pose_noise >= 0.0)) {
        throw InvalidInput("lattice spacing must be positive and noise levels non-negative");
    }
}

Eigen::MatrixXd orthonormal_embeddings(std::size_t count, std::size_t dim, std::uint64_t seed) {
    if (count > dim) {
        throw InvalidInput("cannot draw more orthonormal vectors than the dimension");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        while (true) {
            VecX v(static_cast<Eigen::Index>(dim));
            for (auto &x : v) {
                x = normal(rng);
            }
            for (Eigen::Index q = 0; q < r; ++q) {
                v -= out.row(q).dot(v) * out.row(q).transpose();
            }
            const double n = v.norm();
            if (n > 1e-6) {
                out.row(r) = (v / n).transpose();
                break;
            }
        }
    }
    return out;
}

std::optional<RayHit> trace_ray(const std::vector<Primitive> &primitives, const Vec3 &origin, const Vec3 &direction) {
    std::optional<RayHit> best;
    for (std::size_t i = 0; i < primitives.size(); ++i) {
        const auto &p = primitives[i];
        std::optional<double> t;
        switch (p.shape) {
        case Shape::Box:
            t = hit_box(p, origin, direction);
            break;
        case Shape::Plane:
            t = hit_plane(p, origin, direction);
            break;
        case Shape::Sphere:
            t = hit_sphere(p, origin, direction);
            break;
        }
        if (t && (!best || *t < best->t)) {
            best = RayHit{*t, static_cast<int>(i)};
        }
    }
    return best;
}

SynthScene gen_scene(const SynthSpec &spec) {
    spec.validate();
    SynthScene out;
    out.class_names = spec.classes;

    const std::size_t classes = spec.classes.size();
    const Eigen::MatrixXd emb = orthonormal_embeddings(classes + 1, spec.feature_dim, spec.seed);
    out.bank.feature_dim = spec.feature_dim;
    for (std::size_t c = 0; c <= classes; ++c) {
        TextBank::Entry e;
        e.name = c < classes ? spec.classes[c] : std::string("empty");
        e.prompts = {c < classes ? spec.classes[c] : std::string("sky")};
        e.embeddings = emb.row(static_cast<Eigen::Index>(c));
        out.bank.entries.push_back(std::move(e));
    }
    const VecX sky_feature = emb.row(static_cast<Eigen::Index>(classes)).transpose();

    std::mt19937_64 rng(spec.seed ^ 0x9E3779B97F4A7C15ULL);
    std::uniform_real_distribution<double> unit(0.25, 1.0);
    std::vector<Vec3> base_colors;
    for (std::size_t c = 0; c < classes; ++c) {
        base_colors.emplace_back(unit(rng), unit(rng), unit(rng));
    }

    // Ground-truth Gaussians.
    out.gaussians.feature_dim = spec.feature_dim;
    for (std::size_t i = 0; i < spec.primitives.size(); ++i) {
        const auto &p = spec.primitives[i];
        primitive_lattice(p, spec.lattice_spacing, emb.row(p.class_id).transpose(), static_cast<int>(i), out.gaussians,
                          out.gaussian_primitive);
    }
    out.gaussians.layer_offsets = {out.gaussians.size()};

    // Reference planes by ray casting.
    out.views = make_rig(spec.rig);
    for (auto &v : out.views) {
        Plane depth(v.height, v.width, 1, 0.0f);
        Plane feat(v.height, v.width, static_cast<int>(spec.feature_dim), 0.0f);
        Plane photo(v.height, v.width, 3, 0.0f);
        const Vec3 forward = v.camera_to_ego.rotation.col(2);
        parallel_for(static_cast<std::size_t>(v.height), [&](std::size_t b, std::size_t e) {
            for (std::size_t yy = b; yy < e; ++yy) {
                const int y = static_cast<int>(yy);
                for (int x = 0; x < v.width; ++x) {
                    const Vec3 dir = pixel_ray(v, x, y);
                    const auto hit = trace_ray(spec.primitives, v.camera_to_ego.translation, dir);
                    VecX f = sky_feature;
                    Vec3 color = kSkyColor;
                    if (hit && hit->t * dir.dot(forward) > kNearPlane) {
                        const auto &p = spec.primitives[static_cast<std::size_t>(hit->primitive)];
                        depth.at(y, x) = static_cast<float>(hit->t * dir.dot(forward));
                        f = emb.row(p.class_id).transpose();
                        color = texture(base_colors[static_cast<std::size_t>(p.class_id)],
                                        v.camera_to_ego.translation + hit->t * dir);
                    }
                    for (std::size_t c = 0; c < spec.feature_dim; ++c) {
                        feat.at(y, x, static_cast<int>(c)) = static_cast<float>(f[static_cast<Eigen::Index>(c)]);
                    }
                    for (int c = 0; c < 3; ++c) {
                        photo.at(y, x, c) = static_cast<float>(color[c]);
                    }
                }
            }
        });
        v.ref_depth = DepthMap::from_plane(std::move(depth));
        v.ref_feature = std::move(feat);
        v.photo = std::move(photo);
    }

    // Ground-truth occupancy.
    out.gt = VoxelGrid::empty(spec.grid);
    out.gt.class_count = classes;
    for (std::size_t vx = 0; vx < spec.grid.voxel_count(); ++vx) {
        const Vec3 c = spec.grid.center(vx);
        int label = -1;
        for (const auto &p : spec.primitives) {
            if (inside_solid(p, c)) {
                label = p.class_id;
                break;
            }
        }
        if (label < 0) {
            for (const auto &p : spec.primitives) {
                if (p.shape == Shape::Plane && inside_slab(p, c, spec.grid.voxel_size)) {
                    label = p.class_id;
                    break;
                }
            }
        }
        if (label >= 0) {
            out.gt.labels[vx] = static_cast<std::uint16_t>(label);
            out.gt.occ_mass[vx] = 1.0;
        }
    }

    // Camera visibility: every pixel ray up to its hit voxel or the first
    // occupied voxel, whichever comes first.
    out.visible.assign(spec.grid.voxel_count(), 0);
    for (const auto &v : out.views) {
        const Vec3 forward = v.camera_to_ego.rotation.col(2);
        for (int y = 0; y < v.height; ++y) {
            for (int x = 0; x < v.width; ++x) {
                const Vec3 dir = pixel_ray(v, x, y);
                const Vec3 &o = v.camera_to_ego.translation;
                const float z = v.ref_depth->depth.at(y, x);
                const double t_end = z > 0.0f ? z / dir.dot(forward) : std::numeric_limits<double>::infinity();
                traverse(spec.grid, out.gt.labels, o, dir, t_end, out.visible);
            }
        }
    }

    // Sensor noise, applied after the exact references are fixed.
    if (spec.depth_noise > 0.0) {
        std::mt19937_64 noise_rng(spec.seed + 1);
        std::normal_distribution<double> noise(0.0, spec.depth_noise);
        for (auto &v : out.views) {
            auto &d = v.ref_depth->depth.data;
            for (std::size_t i = 0; i < d.size(); ++i) {
                if (v.ref_depth->valid[i]) {
                    d[i] = static_cast<float>(std::max(kNearPlane * 2.0, d[i] + noise(noise_rng)));
                }
            }
        }
    }
    if (spec.pose_noise > 0.0) {
        out.views = perturb_poses(out.views, spec.pose_noise, spec.seed + 2);
    }
    return out;
}

GaussianScene drop_primitive(const GaussianScene &scene, const std::vector<int> &gaussian_primitive, int primitive) {
    if (gaussian_primitive.size() != scene.size()) {
        throw InvalidInput("primitive tags do not match the scene");
    }
    GaussianScene out;
    out.feature_dim = scene.feature_dim;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (gaussian_primitive[i] != primitive) {
            out.gaussians.push_back(scene.gaussians[i]);
        }
    }
    out.layer_offsets = {out.gaussians.size()};
    return out;
}

std::vector<CameraView> perturb_poses(const std::vector<CameraView> &views, double std_dev, std::uint64_t seed) {
    if (!(std_dev >= 0.0)) {
        throw InvalidInput("pose noise must be non-negative");
    }
    std::vector<CameraView> out = views;
    if (std_dev == 0.0) {
        return out;
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, std_dev);
    for (auto &v : out) {
        for (int a = 0; a < 3; ++a) {
            v.camera_to_ego.translation[a] += noise(rng);
        }
    }
    return out;
}

SynthSpec benchmark_spec(std::uint64_t seed, int width, int height) {
    SynthSpec s;
    s.seed = seed;
    s.feature_dim = 16;
    s.classes = {"driveable_surface", "car", "building", "vegetation", "barrier"};
    s.rig.width = width;
    s.rig.height = height;
    s.grid.voxel_size = 0.4;
    s.grid.origin = Vec3(-8.2, -8.2, -0.2);
    s.grid.dims = {41, 41, 9};

    Primitive ground;
    ground.shape = Shape::Plane;
    ground.center = Vec3::Zero();
    ground.half_extent = Vec3(8.2, 8.2, 0.0);
    ground.class_id = 0;

    // Boxes whose faces lie on voxel-center planes.
    std::mt19937_64 rng(seed);
    auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    const double v = s.grid.voxel_size;
    auto center_of = [&](int i, int axis) { return s.grid.origin[axis] + (i + 0.5) * v; };
    std::vector<std::array<int, 6>> placed; // i0, i1, j0, j1, k0, k1
    const int boxes = 6;
    int attempts = 0;
    while (static_cast<int>(placed.size()) < boxes && attempts < 10000) {
        ++attempts;
        const int len_x = uniform_int(3, 9);
        const int len_y = uniform_int(3, 9);
        const int i0 = uniform_int(1, s.grid.dims[0] - 2 - len_x);
        const int j0 = uniform_int(1, s.grid.dims[1] - 2 - len_y);
        const int i1 = i0 + len_x;
        const int j1 = j0 + len_y;
        const int k1 = uniform_int(3, s.grid.dims[2] - 2);
        // Keep the rig surroundings free and leave gaps between boxes.
        const double x0 = center_of(i0, 0), x1 = center_of(i1, 0);
        const double y0 = center_of(j0, 1), y1 = center_of(j1, 1);
        if (x1 > -3.0 && x0 < 3.0 && y1 > -3.0 && y0 < 3.0) {
            continue;
        }
        bool clash = false;
        for (const auto &b : placed) {
            if (i0 <= b[1] + 2 && b[0] <= i1 + 2 && j0 <= b[3] + 2 && b[2] <= j1 + 2) {
                clash = true;
                break;
            }
        }
        if (clash) {
            continue;
        }
        placed.push_back({i0, i1, j0, j1, 0, k1});
    }
    s.primitives.push_back(ground);
    for (std::size_t b = 0; b < placed.size(); ++b) {
        const auto &p = placed[b];
        Primitive box;
        box.shape = Shape::Box;
        const Vec3 lo(center_of(p[0], 0), center_of(p[2], 1), center_of(p[4], 2));
        const Vec3 hi(center_of(p[1], 0), center_of(p[3], 1), center_of(p[5], 2));
        box.center = 0.5 * (lo + hi);
        box.half_extent = 0.5 * (hi - lo);
        box.class_id = 1 + static_cast<int>(b % 4);
        s.primitives.push_back(box);
    }
    return s;
}

SynthSpec street_spec(std::uint64_t seed, int width, int height) {
    SynthSpec s = benchmark_spec(seed, width, height);
    s.primitives.front().half_extent = Vec3(60.0, 60.0, 0.0);
    std::mt19937_64 rng(seed + 0x5eed);
    std::uniform_real_distribution<double> radius(10.0, 40.0);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> half(0.5, 2.0);
    const int building = 2;
    for (int i = 0; i < 60; ++i) {
        const double r = radius(rng);
        const double a = angle(rng);
        Primitive box;
        box.shape = Shape::Box;
        box.center = Vec3(r * std::cos(a), r * std::sin(a), 2.0);
        const double hx = half(rng);
        box.half_extent = Vec3(hx, half(rng), 2.0);
        box.class_id = building;
        s.primitives.push_back(box);
    }
    return s;
}

SynthSpec missing_wall_spec(std::uint64_t seed, int width, int height) {
    SynthSpec s;
    s.seed = seed;
    s.feature_dim = 8;
    s.classes = {"ground", "wall"};
    s.rig.camera_count = 1;
    s.rig.width = width;
    s.rig.height = height;
    s.rig.pitch_deg = 5.0;
    s.grid.voxel_size = 0.4;
    s.grid.origin = Vec3(-0.2, -8.2, -0.2);
    s.grid.dims = {41, 41, 9};

    Primitive ground;
    ground.shape = Shape::Plane;
    ground.half_extent = Vec3(20.0, 20.0, 0.0);
    ground.class_id = 0;
    s.primitives.push_back(ground);

    Primitive wall;
    wall.shape = Shape::Box;
    wall.center = Vec3(8.0, 0.0, 1.2);
    wall.half_extent = Vec3(0.2, 3.2, 1.2);
    wall.class_id = 1;
    s.primitives.push_back(wall);
    return s;
}

LidarScan lidar_scan(const SynthSpec &spec, const SynthScene &scene, const LidarSpec &lidar) {
    LidarScan out;
    const double deg = std::numbers::pi / 180.0;
    for (const double elev : lidar.elevations_deg) {
        for (int a = 0; a < lidar.azimuth_steps; ++a) {
            const double az = 2.0 * std::numbers::pi * (a + 0.5) / lidar.azimuth_steps;
            const Vec3 dir(std::cos(elev * deg) * std::cos(az), std::cos(elev * deg) * std::sin(az), std::sin(elev * deg));
            const auto hit = trace_ray(spec.primitives, lidar.origin, dir);
            if (!hit) {
                continue;
            }
            const Vec3 p = lidar.origin + hit->t * dir;
            std::array<int, 3> ijk{};
            if (!spec.grid.locate(p, ijk)) {
                continue;
            }
            out.points.push_back(p);
            out.labels.push_back(static_cast<std::uint16_t>(spec.primitives[static_cast<std::size_t>(hit->primitive)].class_id));
            std::uint8_t seen = 0;
            for (const auto &v : scene.views) {
                const auto proj = project_point(p, v);
                if (!proj) {
                    continue;
                }
                const int x = static_cast<int>(std::lround(proj->pixel.x()));
                const int y = static_cast<int>(std::lround(proj->pixel.y()));
                if (x < 0 || y < 0 || x >= v.width || y >= v.height || !v.ref_depth->is_valid(y, x)) {
                    continue;
                }
                if (proj->depth <= v.ref_depth->depth.at(y, x) + 0.05) {
                    seen = 1;
                    break;
                }
            }
            out.visible.push_back(seen);
        }
    }
    return out;
}

std::pair<GaussianScene, CameraView> random_scene(const RandomSceneSpec &spec) {
    if (spec.width <= 0 || spec.height <= 0 || !(spec.depth_min > kNearPlane) || !(spec.depth_max > spec.depth_min) ||
        !(spec.scale_min > 0.0) || !(spec.scale_max >= spec.scale_min)) {
        throw InvalidInput("bad random scene parameters");
    }
    CameraView cam;
    cam.width = spec.width;
    cam.height = spec.height;
    const double f = 0.8 * std::max(spec.width, spec.height);
    cam.intrinsics = {f, f, 0.5 * (spec.width - 1), 0.5 * (spec.height - 1)};

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    GaussianScene scene;
    scene.feature_dim = spec.feature_dim;
    for (std::size_t i = 0; i < spec.count; ++i) {
        FeatureGaussian g;
        const double px = (-0.1 + 1.2 * u01(rng)) * spec.width;
        const double py = (-0.1 + 1.2 * u01(rng)) * spec.height;
        const double z = spec.depth_min + (spec.depth_max - spec.depth_min) * u01(rng);
        g.mean = backproject_pixel(cam, px, py, z);
        for (int a = 0; a < 3; ++a) {
            g.scale[a] = spec.scale_min + (spec.scale_max - spec.scale_min) * u01(rng);
        }
        Vec4 q(normal(rng), normal(rng), normal(rng), normal(rng));
        g.rotation = q / q.norm();
        g.opacity = 0.05 + 0.95 * u01(rng);
        g.feature.resize(static_cast<Eigen::Index>(spec.feature_dim));
        for (auto &x : g.feature) {
            x = normal(rng);
        }
        scene.gaussians.push_back(std::move(g));
    }
    scene.layer_offsets = {scene.size()};
    return {std::move(scene), std::move(cam)};
}

SynthSpec synth_spec_from_json(const std::string &text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception &e) {
        throw InvalidInput(std::string("synth spec is not valid JSON: ") + e.what());
    }
    try {
        if (j.value("preset", std::string()) == "benchmark") {
            return benchmark_spec(j.value("seed", std::uint64_t{0}), j.value("width", 320), j.value("height", 180));
        }
        if (j.value("preset", std::string()) == "street") {
            return street_spec(j.value("seed", std::uint64_t{0}), j.value("width", 320), j.value("height", 180));
        }
        if (j.value("preset", std::string()) == "missing_wall") {
            return missing_wall_spec(j.value("seed", std::uint64_t{0}), j.value("width", 160), j.value("height", 96));
        }
        SynthSpec s;
        s.seed = j.value("seed", std::uint64_t{0});
        s.feature_dim = j.value("feature_dim", std::size_t{16});
        s.classes = j.at("classes").get<std::vector<std::string>>();
        for (const auto &p : j.at("primitives")) {
            Primitive prim;
            const auto shape = p.at("shape").get<std::string>();
            if (shape == "box") {
                prim.shape = Shape::Box;
            } else if (shape == "plane") {
                prim.shape = Shape::Plane;
            } else if (shape == "sphere") {
                prim.shape = Shape::Sphere;
            } else {
                throw InvalidInput("unknown primitive shape '" + shape + "'");
            }
            prim.center = vec3_from_json(p.at("center"));
            if (p.contains("half_extent")) {
                prim.half_extent = vec3_from_json(p.at("half_extent"));
            }
            if (p.contains("radius")) {
                prim.half_extent = Vec3::Constant(p.at("radius").get<double>());
            }
            if (p.contains("normal")) {
                prim.normal = vec3_from_json(p.at("normal"));
            }
            if (p.contains("axis_u")) {
                prim.axis_u = vec3_from_json(p.at("axis_u"));
            }
            const auto &cls = p.at("class");
            if (cls.is_string()) {
                const auto it = std::find(s.classes.begin(), s.classes.end(), cls.get<std::string>());
                if (it == s.classes.end()) {
                    throw InvalidInput("primitive uses undeclared class '" + cls.get<std::string>() + "'");
                }
                prim.class_id = static_cast<int>(it - s.classes.begin());
            } else {
                prim.class_id = cls.get<int>();
            }
            s.primitives.push_back(prim);
        }
        if (j.contains("rig")) {
            const auto &r = j.at("rig");
            s.rig.camera_count = r.value("camera_count", s.rig.camera_count);
            if (r.contains("center")) {
                s.rig.center = vec3_from_json(r.at("center"));
            }
            s.rig.radius = r.value("radius", s.rig.radius);
            s.rig.pitch_deg = r.value("pitch_deg", s.rig.pitch_deg);
            s.rig.horizontal_fov_deg = r.value("horizontal_fov_deg", s.rig.horizontal_fov_deg);
            s.rig.width = r.value("width", s.rig.width);
            s.rig.height = r.value("height", s.rig.height);
            s.rig.frames = r.value("frames", s.rig.frames);
            if (r.contains("frame_step")) {
                s.rig.frame_step = vec3_from_json(r.at("frame_step"));
            }
        }
        if (j.contains("grid")) {
            const auto &g = j.at("grid");
            s.grid.origin = vec3_from_json(g.at("origin"));
            s.grid.voxel_size = g.value("voxel_size", 0.4);
            s.grid.dims = g.at("dims").get<std::array<int, 3>>();
        }
        s.lattice_spacing = j.value("lattice_spacing", s.lattice_spacing);
        s.depth_noise = j.value("depth_noise", s.depth_noise);
        s.pose_noise = j.value("pose_noise", s.pose_noise);
        s.validate();
        return s;
    } catch (const json::exception &e) {
        throw InvalidInput(std::string("bad synth spec: ") + e.what());
    }
}

std::string synth_spec_to_json(const SynthSpec &s) {
    json j;
    j["seed"] = s.seed;
    j["feature_dim"] = s.feature_dim;
    j["classes"] = s.classes;
    j["primitives"] = json::array();
    for (const auto &p : s.primitives) {
        json pj;
        pj["shape"] = p.shape == Shape::Box ? "box" : p.shape == Shape::Plane ? "plane" : "sphere";
        pj["center"] = vec3_to_json(p.center);
        pj["half_extent"] = vec3_to_json(p.half_extent);
        if (p.shape == Shape::Plane) {
            pj["normal"] = vec3_to_json(p.normal);
            pj["axis_u"] = vec3_to_json(p.axis_u);
        }
        pj["class"] = s.classes[static_cast<std::size_t>(p.class_id)];
        j["primitives"].push_back(pj);
    }
    j["rig"] = {{"camera_count", s.rig.camera_count},
                {"center", vec3_to_json(s.rig.center)},
                {"radius", s.rig.radius},
                {"pitch_deg", s.rig.pitch_deg},
                {"horizontal_fov_deg", s.rig.horizontal_fov_deg},
                {"width", s.rig.width},
                {"height", s.rig.height},
                {"frames", s.rig.frames},
                {"frame_step", vec3_to_json(s.rig.frame_step)}};
    j["grid"] = {{"origin", vec3_to_json(s.grid.origin)}, {"voxel_size", s.grid.voxel_size}, {"dims", s.grid.dims}};
    j["lattice_spacing"] = s.lattice_spacing;
    j["depth_noise"] = s.depth_noise;
    j["pose_noise"] = s.pose_noise;
    return j.dump(2);
}

} // namespace fgs
