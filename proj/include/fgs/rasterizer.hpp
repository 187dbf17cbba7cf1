// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fgs/core.hpp"

#include <cstddef>
#include <optional>

namespace fgs {

/// Screen-space footprint of one Gaussian.
struct Projected2D {
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Identity();
    double z_cam = 0.0;
    double opacity = 0.0;
    std::size_t source_index = 0;
};

struct RasterSettings {
    /// Isotropic dilation added to every screen covariance, px^2.
    double low_pass = 0.3;
    /// Off-axis limit of the projection Jacobian, in image half-extents.
    double jacobian_clamp = 1.3;
    double alpha_max = 0.99;
    double alpha_min = 1.0 / 255.0;
    /// Blending stops once transmittance drops below this value.
    double transmittance_stop = 1e-7;
    /// Denominator below which expected depth is undefined.
    double min_accumulation = 1e-6;
    int tile_size = 16;
};

/// Perspective (EWA) projection of a Gaussian. Returns nullopt when the center
/// is behind the near plane or the 3-sigma footprint misses the image.
std::optional<Projected2D> project_gaussian(const FeatureGaussian &g, const CameraView &cam,
                                            std::size_t source_index = 0, const RasterSettings &settings = {});

/// min(alpha_max, opacity * exp(-0.5 dᵀ cov2d⁻¹ d)), or 0 below alpha_min.
/// Throws NumericalDegeneracy for a singular covariance.
double alpha_at(const Projected2D &p, const Vec2 &pixel, const RasterSettings &settings = {});

/// Tile-based front-to-back blending of expected depth, accumulated alpha and
/// (unnormalized) feature.
RenderOutput render(const GaussianScene &scene, const CameraView &cam, const RasterSettings &settings = {});

/// Reference renderer: every pixel against every projected Gaussian in global
/// depth order, no tiling and no early termination.
RenderOutput render_oracle(const GaussianScene &scene, const CameraView &cam, const RasterSettings &settings = {});

} // namespace fgs
