// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fgs/core.hpp"
#include "fgs/mlp.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace fgs {

/// Learned maps of the feature-sampling stage. Hidden layers are ReLU, the
/// final layer linear; the output maps below are applied on top.
struct DecodeHeads {
    /// query (D) -> 3n, squashed by tanh into unit-cube offsets.
    AffineStack offset_head;
    /// query (D) -> n*V or n aggregation logits; absent means uniform mean.
    AffineStack weights_head;
    /// aggregated feature (F) -> F.
    AffineStack feat_head;
    /// aggregated feature (F) -> 3 (offset) + 3 (scale) + 4 (quaternion) + 1 (opacity).
    AffineStack geo_head;

    int sample_count = 16;
    /// |Δμ| per axis is bounded by this many meters.
    double max_displacement = 2.0;
    double min_scale = 0.01;

    static constexpr int kGeoOutputs = 11;

    /// Seeded random weights for a query width D and feature width F.
    static DecodeHeads seeded(int query_dim, int feature_dim, std::uint64_t seed, int sample_count = 16,
                              int hidden = 0);
    /// Heads that copy the aggregated feature, keep μ fixed and emit the given
    /// isotropic scale and opacity. Offsets spread over the unit cube by `spread`.
    static DecodeHeads passthrough(int query_dim, int feature_dim, double scale, double opacity,
                                   int sample_count = 16, double spread = 0.5);

    /// Throws InvalidInput when the head shapes disagree.
    void validate(int query_dim, int feature_dim) const;

    void store(TensorFile &file) const;
    static DecodeHeads load(const TensorFile &file);
};

/// n unit offsets, each component tanh(affine(query)), row per offset.
std::vector<Vec3> gen_offsets(const VecX &query, const DecodeHeads &heads);

struct SampleSet {
    std::vector<Vec3> offsets;
    std::vector<Vec3> points;
};

/// μ + R(r)·(s ⊙ offset) for every offset.
SampleSet place_samples(const FeatureGaussian &g, const std::vector<Vec3> &offsets);

/// Bilinearly interpolated features of every sample point in every view.
struct SampledFeatures {
    std::size_t point_count = 0;
    std::size_t view_count = 0;
    std::size_t feature_dim = 0;
    std::vector<float> values;         // point-major, then view, then channel
    std::vector<std::uint8_t> valid;   // point-major, then view

    std::size_t pair(std::size_t point, std::size_t view) const { return point * view_count + view; }
    std::size_t valid_pairs() const;
};

/// Projects each sample into each view; samples behind the near plane or
/// outside [0, W-1] x [0, H-1] (pixel centers) are invalid.
SampledFeatures sample_features(const SampleSet &samples, const std::vector<CameraView> &views);

/// Softmax-weighted mean over valid (point, view) pairs with logits from
/// weights_head(query), or the uniform mean when no head is given. Returns
/// nullopt when no pair is valid.
std::optional<VecX> aggregate(const SampledFeatures &features, const AffineStack *weights_head, const VecX &query);

/// Decodes the aggregated feature into an updated Gaussian (μ residual, absolute
/// scale, rotation, opacity and feature). Throws NumericalDegeneracy on
/// non-finite head outputs.
FeatureGaussian decode_update(const VecX &aggregated, const DecodeHeads &heads, const FeatureGaussian &previous);

/// Sampling, aggregation and decoding for Gaussians [begin, end) of `scene`
/// using per-Gaussian queries (rows of `queries`). Gaussians without any valid
/// sample keep their previous state. Returns the number of Gaussians updated.
std::size_t refine_range(GaussianScene &scene, std::size_t begin, std::size_t end, const Eigen::MatrixXd &queries,
                         const std::vector<CameraView> &views, const DecodeHeads &heads);

} // namespace fgs
