// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fgs/core.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace fgs {

inline constexpr std::uint16_t kEmptyLabel = 0xFFFF;

/// Regular grid; `origin` is the minimum corner and voxel (i,j,k) has its
/// center at origin + (ijk + 0.5) * voxel_size. Linear index is x-fastest.
struct GridSpec {
    Vec3 origin = Vec3::Zero();
    double voxel_size = 0.4;
    std::array<int, 3> dims{0, 0, 0};

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(dims[2]);
    }
    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * static_cast<std::size_t>(dims[1]) + static_cast<std::size_t>(j)) *
                   static_cast<std::size_t>(dims[0]) +
               static_cast<std::size_t>(i);
    }
    std::array<int, 3> coords(std::size_t linear) const {
        const auto dx = static_cast<std::size_t>(dims[0]);
        const auto dy = static_cast<std::size_t>(dims[1]);
        return {static_cast<int>(linear % dx), static_cast<int>((linear / dx) % dy), static_cast<int>(linear / (dx * dy))};
    }
    Vec3 center(int i, int j, int k) const {
        return origin + voxel_size * Vec3(i + 0.5, j + 0.5, k + 0.5);
    }
    Vec3 center(std::size_t linear) const {
        const auto c = coords(linear);
        return center(c[0], c[1], c[2]);
    }
    /// Voxel containing p, or false when p lies outside the grid.
    bool locate(const Vec3 &p, std::array<int, 3> &ijk) const;
    bool operator==(const GridSpec &) const = default;
};

/// Per-voxel occupancy mass and semantic payload.
struct VoxelGrid {
    GridSpec spec;
    std::vector<double> occ_mass;
    std::vector<std::uint16_t> labels;
    /// Class-probability mass per voxel (voxel-major, class_count entries each);
    /// empty when the grid was loaded from disk.
    std::vector<double> class_mass;
    std::size_t class_count = 0;

    static VoxelGrid empty(const GridSpec &spec);
    bool occupied(std::size_t v) const { return labels[v] != kEmptyLabel; }
};

/// Ordered prompt table. Each class owns one embedding row per prompt; rows
/// are unit-norm. A class named "empty" competes in the softmax but maps to
/// unoccupied space when it wins.
struct TextBank {
    struct Entry {
        std::string name;
        std::vector<std::string> prompts;
        Eigen::MatrixXd embeddings; // prompts x feature_dim
    };
    enum class PromptReduce { Max, Mean };

    std::size_t feature_dim = 0;
    std::vector<Entry> entries;
    PromptReduce reduce = PromptReduce::Max;

    std::size_t size() const { return entries.size(); }
    /// Index of the "empty" class, or -1.
    int empty_index() const;
    int find(const std::string &name) const;
    /// Throws InvalidInput on missing prompts, dimension mismatch or non-unit rows.
    void validate() const;
    /// Per-class similarity of f against the bank (max or mean over prompts).
    VecX similarities(const VecX &f) const;
};

/// Softmax over class similarities f . f_text.
VecX text_probs(const VecX &f, const TextBank &bank);

struct VoxelizeOptions {
    double occupancy_threshold = 0.1;
    /// Mahalanobis distance beyond which a Gaussian is ignored; infinity disables it.
    double cutoff = 3.0;
    bool keep_class_mass = true;

    static constexpr double exact() { return std::numeric_limits<double>::infinity(); }
};

/// Accumulates exp(-0.5 d^T Σ^-1 d) weighted opacity (occupancy) and text
/// probability (semantics) of every Gaussian into every voxel center.
VoxelGrid voxelize(const GaussianScene &scene, const TextBank &bank, const GridSpec &spec,
                   const VoxelizeOptions &options = {});

struct PointQuery {
    std::vector<double> occupancy;  // P_o per point
    Eigen::MatrixXd features;       // points x feature_dim, P_f per point
};

/// Same kernel as voxelize evaluated at arbitrary points (LiDAR returns).
PointQuery query_points(const GaussianScene &scene, const std::vector<Vec3> &points, double cutoff = 3.0);

} // namespace fgs
