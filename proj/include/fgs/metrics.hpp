// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fgs/voxelize.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace fgs {

struct MiouResult {
    /// IoU per class; nullopt for ignored classes and classes absent from both grids.
    std::vector<std::optional<double>> iou;
    double miou = 0.0;
    std::size_t evaluated = 0;
};

/// Semantic IoU between label grids. Voxels whose ground-truth label is in
/// `ignore`, or whose visibility flag is 0, are skipped. `class_count` 0 means
/// one past the largest label seen.
MiouResult eval_miou(const VoxelGrid &pred, const VoxelGrid &gt, std::size_t class_count = 0,
                     const std::set<std::uint16_t> &ignore = {}, const std::vector<std::uint8_t> *visible = nullptr);

/// All-point interpolated average precision of one ranking (descending score,
/// ties broken by index). Returns nullopt when there are no positives.
std::optional<double> average_precision(const std::vector<double> &scores, const std::vector<std::uint8_t> &positive);

struct MapResult {
    std::vector<std::optional<double>> ap;
    std::vector<std::optional<double>> ap_visible;
    double map = 0.0;
    double map_visible = 0.0;
    std::vector<std::string> warnings;
};

/// scores and positives are points x queries. Queries without positives are
/// left out of the mean and reported in `warnings`. With no visibility mask,
/// the visible figures equal the full ones.
MapResult eval_map(const Eigen::MatrixXd &scores, const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> &positive,
                   const std::vector<std::uint8_t> *visible = nullptr);

} // namespace fgs
