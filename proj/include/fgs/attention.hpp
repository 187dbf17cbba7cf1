// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fgs/core.hpp"
#include "fgs/mlp.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

namespace fgs {

/// Finite stand-in for -inf: adding it to any logit keeps the logit finite and
/// its softmax weight exactly zero.
inline constexpr double kMaskedLogit = std::numeric_limits<double>::lowest();

/// Asymmetric mask over x_total queries of which the first x_prev are
/// inherited: inherited rows never see new columns, new rows see everything.
struct AsaMask {
    std::size_t x_prev = 0;
    std::size_t x_total = 0;

    bool blocked(std::size_t row, std::size_t col) const { return row < x_prev && col >= x_prev; }
    std::size_t blocked_count() const { return x_prev * (x_total - x_prev); }
    /// Dense x_total x x_total matrix with entries 0 or kMaskedLogit.
    Eigen::MatrixXd dense() const;
};

AsaMask build_mask(std::size_t x_prev, std::size_t x_total);

/// Fixed sinusoidal encoding of a 3D position: for each axis, dim/6 sin/cos
/// pairs over a geometric frequency ladder from 2π/100 m to 2π/1 m.
/// `dim` must be a positive multiple of 6.
VecX positional_encoding(const Vec3 &mu, int dim);

/// Multi-head projections for the asymmetric self-attention. Token rows are
/// multiplied from the left: Q = X W_q.
struct AsaWeights {
    int heads = 8;
    Eigen::MatrixXd wq, wk, wv, wo;

    int dim() const { return static_cast<int>(wq.rows()); }
    static AsaWeights seeded(int dim, int heads, std::uint64_t seed);
    /// Throws InvalidInput on shape errors and NumericalDegeneracy on non-finite entries.
    void validate() const;

    void store(TensorFile &file) const;
    static bool present(const TensorFile &file) { return file.contains("asa.wq"); }
    static AsaWeights load(const TensorFile &file);
};

/// q_asa = softmax((q+PE) W_q ((q+PE) W_k)ᵀ / √(D/h) + M) (q W_v), heads
/// concatenated and projected by W_o. Queries are rows; positions one per row.
Eigen::MatrixXd asa_forward(const Eigen::MatrixXd &queries, const std::vector<Vec3> &positions,
                            const AsaWeights &weights, const AsaMask &mask);

/// Softmax attention matrix of one head (x_total x x_total). Meant for
/// inspection on small inputs.
Eigen::MatrixXd asa_attention(const Eigen::MatrixXd &queries, const std::vector<Vec3> &positions,
                              const AsaWeights &weights, const AsaMask &mask, int head);

} // namespace fgs
