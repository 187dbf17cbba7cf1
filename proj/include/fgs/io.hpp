// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fgs/core.hpp"
#include "fgs/voxelize.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace fgs::io {

// Scene: "FGSC", u32 version=1, u32 N, u32 F, u32 layer_count, u32 offsets[layer_count],
// then N records of f32 mu[3], s[3], r[4], sigma, f[F]. Little-endian throughout.
void write_scene(const std::filesystem::path &path, const GaussianScene &scene);
GaussianScene read_scene(const std::filesystem::path &path);

// Plane: "PLNE", u32 height, u32 width, u32 channels, then f32 data row-major
// with interleaved channels. Invalid depth is stored as 0.
void write_plane(const std::filesystem::path &path, const Plane &plane);
Plane read_plane(const std::filesystem::path &path);

/// Writes `<stem>_depth.plne` etc. next to rig.json for every optional plane
/// and a JSON document referencing them by relative path.
void write_rig(const std::filesystem::path &path, const std::vector<CameraView> &views);
std::vector<CameraView> read_rig(const std::filesystem::path &path);

/// Min/max-normalized 8-bit grayscale preview; invalid pixels are black.
void write_depth_pgm(const std::filesystem::path &path, const std::vector<double> &depth,
                     const std::vector<std::uint8_t> &valid, int width, int height);
/// Same normalization through a blue-to-red ramp.
void write_depth_ppm(const std::filesystem::path &path, const std::vector<double> &depth,
                     const std::vector<std::uint8_t> &valid, int width, int height);

/// Render output as PLNE planes: depth (invalid = 0) and feature (F channels).
Plane depth_plane(const RenderOutput &out);
Plane feature_plane(const RenderOutput &out);

// Voxel grid: "VOXG", u32 dims[3], f32 origin[3], f32 voxel_size,
// f32 occ_mass[V], u16 label[V] (0xFFFF = empty), x-fastest order.
void write_grid(const std::filesystem::path &path, const VoxelGrid &grid);
VoxelGrid read_grid(const std::filesystem::path &path);

// Points: "PNTS", u32 count, u32 channels=3, f32 xyz[count]; or whitespace
// separated "x y z" lines. The reader dispatches on the magic.
void write_points(const std::filesystem::path &path, const std::vector<Vec3> &points);
void write_points_text(const std::filesystem::path &path, const std::vector<Vec3> &points);
std::vector<Vec3> read_points(const std::filesystem::path &path);

/// JSON array of {"class", "prompts", "embedding_path"}; embedding files are
/// PLNE planes with one row per prompt and F channels.
TextBank read_bank(const std::filesystem::path &path);
void write_bank(const std::filesystem::path &path, const TextBank &bank);

} // namespace fgs::io
