// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fgs/core.hpp"
#include "fgs/voxelize.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace fgs {

enum class Shape { Box, Plane, Sphere };

/// One analytic primitive. Boxes are axis-aligned solids spanning
/// center ± half_extent. Planes are two-sided rectangles through `center`
/// with unit `normal`, spanning ± half_extent.x along `axis_u` and
/// ± half_extent.y along normal × axis_u. Spheres use half_extent.x as radius.
struct Primitive {
    Shape shape = Shape::Box;
    Vec3 center = Vec3::Zero();
    Vec3 half_extent = Vec3::Ones();
    Vec3 normal = Vec3::UnitZ();
    Vec3 axis_u = Vec3::UnitX();
    int class_id = 0;
};

/// Cameras share one optical center and fan out in yaw around +z.
struct RigSpec {
    int camera_count = 6;
    Vec3 center = Vec3(0.0, 0.0, 1.5);
    /// Cameras sit this far from `center` along their viewing direction.
    double radius = 0.0;
    double pitch_deg = 10.0;
    double horizontal_fov_deg = 70.0;
    int width = 320;
    int height = 180;
    /// Frames > 1 repeat the rig, shifted by frame_step per timestamp.
    int frames = 1;
    Vec3 frame_step = Vec3(0.5, 0.0, 0.0);
};

struct SynthSpec {
    std::uint64_t seed = 0;
    std::size_t feature_dim = 16;
    std::vector<std::string> classes;
    std::vector<Primitive> primitives;
    RigSpec rig;
    GridSpec grid;
    /// Spacing of the ground-truth Gaussian surface lattice (meters).
    double lattice_spacing = 0.2;
    double depth_noise = 0.0;
    double pose_noise = 0.0;

    /// Throws InvalidInput for degenerate primitives or bad sizes.
    void validate() const;
};

struct SynthScene {
    std::vector<std::string> class_names;
    /// One entry per class, in class order, plus a trailing "empty" entry.
    TextBank bank;
    /// Ground-truth Gaussians on the primitive surfaces, features set to the
    /// class embeddings.
    GaussianScene gaussians;
    /// Primitive index of every ground-truth Gaussian.
    std::vector<int> gaussian_primitive;
    /// Views with reference depth (camera z), feature and photo planes.
    std::vector<CameraView> views;
    /// Voxels whose center lies inside a solid or within the one-voxel slab
    /// of a plane carry that primitive's class.
    VoxelGrid gt;
    /// Voxels crossed by a camera ray up to and including the hit voxel or
    /// the first occupied voxel.
    std::vector<std::uint8_t> visible;
};

/// Orthonormal rows (count x dim) drawn by Gram-Schmidt from a seeded
/// Gaussian matrix.
Eigen::MatrixXd orthonormal_embeddings(std::size_t count, std::size_t dim, std::uint64_t seed);

/// Nearest ray hit: distance along the unit direction and primitive index.
struct RayHit {
    double t = 0.0;
    int primitive = -1;
};
std::optional<RayHit> trace_ray(const std::vector<Primitive> &primitives, const Vec3 &origin, const Vec3 &direction);

SynthScene gen_scene(const SynthSpec &spec);

/// Copy of `scene` without the Gaussians that belong to `primitive`.
GaussianScene drop_primitive(const GaussianScene &scene, const std::vector<int> &gaussian_primitive, int primitive);

/// Adds zero-mean normal noise of `std_dev` to every camera translation.
std::vector<CameraView> perturb_poses(const std::vector<CameraView> &views, double std_dev, std::uint64_t seed);

/// Voxel-aligned street-like fixture: a ground plane and a few labelled boxes
/// around a six-camera surround rig.
SynthSpec benchmark_spec(std::uint64_t seed, int width = 320, int height = 180);

/// The benchmark block inside a 120 m ground plane with 60 buildings
/// scattered 10 to 40 m out, beyond the grid. Far surfaces are sparse in the
/// base layer, so densification keeps finding work.
SynthSpec street_spec(std::uint64_t seed, int width = 320, int height = 180);

/// Ground plane plus one wall standing in front of camera 0. The wall is
/// primitive 1.
SynthSpec missing_wall_spec(std::uint64_t seed, int width = 160, int height = 96);

struct LidarSpec {
    Vec3 origin = Vec3(0.0, 0.0, 1.8);
    int azimuth_steps = 360;
    std::vector<double> elevations_deg{-24.0, -20.0, -16.0, -12.0, -9.0, -6.0, -4.0, -2.0, 0.0, 2.0};
};

struct LidarScan {
    std::vector<Vec3> points;
    std::vector<std::uint16_t> labels;
    /// Point seen unoccluded by at least one camera.
    std::vector<std::uint8_t> visible;
};

/// Returns of a spinning scanner, restricted to hits inside the grid.
LidarScan lidar_scan(const SynthSpec &spec, const SynthScene &scene, const LidarSpec &lidar = {});

/// Random Gaussians inside the frustum of an identity-pose camera.
struct RandomSceneSpec {
    std::size_t count = 100;
    std::size_t feature_dim = 16;
    int width = 128;
    int height = 128;
    std::uint64_t seed = 0;
    double depth_min = 2.0;
    double depth_max = 20.0;
    double scale_min = 0.05;
    double scale_max = 0.5;
};
std::pair<GaussianScene, CameraView> random_scene(const RandomSceneSpec &spec);

/// JSON round trip for SynthSpec (used by the command-line tool).
SynthSpec synth_spec_from_json(const std::string &text);
std::string synth_spec_to_json(const SynthSpec &spec);

} // namespace fgs
