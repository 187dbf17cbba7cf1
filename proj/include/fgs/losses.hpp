// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fgs/core.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fgs {

/// Pairwise (tree) summation; the result does not depend on thread layout.
double pairwise_sum(std::span<const double> values);

/// Mean |D - D̂| over masked pixels. Throws EmptyInput when the mask is empty.
double l1_depth(std::span<const double> reference, std::span<const double> rendered,
                std::span<const std::uint8_t> mask);

/// Scale-invariant log loss mean(g²) - λ_var·mean(g)², g = ln D̂ - ln D.
double silog(std::span<const double> reference, std::span<const double> rendered, std::span<const std::uint8_t> mask,
             double lambda_var = 0.5);

/// One source frame for the temporal photometric term.
struct PhotoSource {
    const Plane *photo = nullptr;
    Intrinsics intrinsics;
    /// Maps target-camera coordinates to source-camera coordinates.
    RigidTransform target_to_source;
};

/// Per-pixel minimum over sources of 0.85·(1 - SSIM)/2 + 0.15·L1 between the
/// target photo and each source warped through the rendered depth, averaged
/// over pixels whose 3x3 neighbourhood warps inside the source.
double photometric_temporal(const Plane &target_photo, const Intrinsics &target_intrinsics,
                            std::span<const double> rendered_depth, std::span<const std::uint8_t> depth_valid,
                            const std::vector<PhotoSource> &sources);

struct FeatureLoss {
    double cos_term = 0.0;
    double mse_term = 0.0;
};

/// cos_term = mean(1 - cos(F, F̂)) over masked pixels where both are non-zero;
/// mse_term = mean squared error over masked pixels and channels.
FeatureLoss feat_loss(std::span<const float> reference, std::span<const float> rendered, std::size_t channels,
                      std::span<const std::uint8_t> mask);

struct LossWeights {
    double lambda_silog = 0.15;
    double lambda_temp = 10.0;
    double lambda_mse = 10.0;
    double lambda_depth = 1.0;
    double lambda_feat = 1.0;

    void validate() const;
};

struct LossComponents {
    double l1 = 0.0;
    double silog = 0.0;
    double temporal = 0.0;
    double cos = 0.0;
    double mse = 0.0;
};

struct LossBreakdown {
    double depth = 0.0;
    double feature = 0.0;
    double total = 0.0;
    /// Every weighted term by name, e.g. "silog" -> λ_depth·λ_SILog·L_SILog.
    std::map<std::string, double> terms;
};

/// L_depth = L1 + λ_SILog·SILog + λ_temp·temp, L_feat = cos + λ_mse·mse,
/// total = λ_depth·L_depth + λ_feat·L_feat.
LossBreakdown total_loss(const LossComponents &c, const LossWeights &w = {});

} // namespace fgs
