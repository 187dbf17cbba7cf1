// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fgs/core.hpp"
#include "fgs/rasterizer.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace fgs {

enum class SelectMode {
    /// rendered - reference > gamma
    Signed,
    /// |rendered - reference| > gamma
    Absolute,
};

struct DensifyConfig {
    /// Depth-residual threshold in meters (half the 0.4 m occupancy voxel).
    double gamma = 0.2;
    std::size_t base_count = 4000;
    std::vector<std::size_t> layer_budgets{1000, 1000};
    /// Isotropic scale of freshly placed Gaussians.
    double init_scale = 0.2;
    double init_opacity = 0.5;
    /// Every component of a new Gaussian's feature starts at this value.
    double init_feature = 0.0;
    SelectMode select_mode = SelectMode::Signed;
    RasterSettings raster;

    void validate() const;
};

/// Greedy max-min subset. The first pick is index 0; each further pick
/// maximizes the distance to the picked set, ties going to the lowest index.
std::vector<std::size_t> fps(std::span<const Vec3> points, std::size_t k);

/// Pseudo point cloud of all views' reference depth, thinned to base_count
/// points by FPS and turned into a single-layer scene.
GaussianScene base_init(const std::vector<CameraView> &views, const DensifyConfig &cfg, std::size_t feature_dim);

/// Linear pixel indices where the rendered depth exceeds the reference by more
/// than gamma (or differs by more than gamma in absolute mode). Invalid
/// rendered pixels count as an infinite residual; invalid reference pixels are
/// never selected.
std::vector<std::size_t> select_under_represented(const RenderOutput &rendered, const DepthMap &reference,
                                                  double gamma, SelectMode mode = SelectMode::Signed);

struct DensifyReport {
    std::vector<std::size_t> selected_pixels_per_view;
    std::size_t added_count = 0;
    /// Mean |rendered - reference| over the selected pixels that render
    /// valid, before and after the new Gaussians are added.
    double residual_before = 0.0;
    double residual_after = 0.0;
    std::size_t residual_pixels_before = 0;
    std::size_t residual_pixels_after = 0;
};

/// Adds progressive layer `layer` (>= 1, the scene must hold exactly `layer`
/// layers) with at most cfg.layer_budgets[layer - 1] Gaussians placed on the
/// reference-depth points of under-represented pixels, pooled over all views.
/// Pre-existing Gaussians are copied unchanged; an empty selection appends a
/// zero-growth layer.
GaussianScene densify_layer(const GaussianScene &scene, const std::vector<CameraView> &views, const DensifyConfig &cfg,
                            std::size_t layer, DensifyReport *report = nullptr);

} // namespace fgs
