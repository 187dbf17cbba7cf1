// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#include "fgs/attention.hpp"

#include "fgs/error.hpp"
#include "fgs/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace fgs {
namespace {

constexpr double kLongestWavelength = 100.0;
constexpr double kShortestWavelength = 1.0;
// Row block processed at once; fixed so results do not depend on the worker count.
constexpr Eigen::Index kRowBlock = 128;

int encoding_width(int dim) { return dim - dim % 6; }

/// Rows of q + PE(μ), with the encoding zero-padded up to the query width.
Eigen::MatrixXd add_encoding(const Eigen::MatrixXd &queries, const std::vector<Vec3> &positions) {
    const int dim = static_cast<int>(queries.cols());
    const int pe_dim = encoding_width(dim);
    Eigen::MatrixXd x = queries;
    if (pe_dim == 0) {
        return x;
    }
    for (Eigen::Index i = 0; i < queries.rows(); ++i) {
        x.row(i).head(pe_dim) += positional_encoding(positions[static_cast<std::size_t>(i)], pe_dim).transpose();
    }
    return x;
}

void check_inputs(const Eigen::MatrixXd &queries, const std::vector<Vec3> &positions, const AsaWeights &weights,
                  const AsaMask &mask) {
    weights.validate();
    if (queries.cols() != weights.dim()) {
        throw InvalidInput("query width does not match the attention weights");
    }
    if (static_cast<std::size_t>(queries.rows()) != mask.x_total || positions.size() != mask.x_total) {
        throw InvalidInput("queries, positions and mask disagree on the token count");
    }
}

/// Softmax weights of one head for token rows [r0, r0 + rows), stored
/// transposed (keys x rows) so every softmax runs over contiguous memory.
Eigen::MatrixXd head_probabilities_t(const Eigen::MatrixXd &q_h, const Eigen::MatrixXd &k_h, Eigen::Index r0,
                                     Eigen::Index rows, const AsaMask &mask, double inv_sqrt_dh) {
    Eigen::MatrixXd logits = (k_h * q_h.middleRows(r0, rows).transpose()) * inv_sqrt_dh;
    const auto total = static_cast<Eigen::Index>(mask.x_total);
    for (Eigen::Index r = 0; r < rows; ++r) {
        double *col = logits.col(r).data();
        if (static_cast<std::size_t>(r0 + r) < mask.x_prev) {
            for (Eigen::Index c = static_cast<Eigen::Index>(mask.x_prev); c < total; ++c) {
                col[c] += kMaskedLogit;
            }
        }
        double max_logit = col[0];
        for (Eigen::Index c = 1; c < total; ++c) {
            max_logit = std::max(max_logit, col[c]);
        }
        double sum = 0.0;
        for (Eigen::Index c = 0; c < total; ++c) {
            col[c] = std::exp(col[c] - max_logit);
            sum += col[c];
        }
        const double inv = 1.0 / sum;
        for (Eigen::Index c = 0; c < total; ++c) {
            col[c] *= inv;
        }
    }
    return logits;
}

} // namespace

Eigen::MatrixXd AsaMask::dense() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(x_total), static_cast<Eigen::Index>(x_total));
    for (std::size_t i = 0; i < x_prev; ++i) {
        for (std::size_t j = x_prev; j < x_total; ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = kMaskedLogit;
        }
    }
    return m;
}

AsaMask build_mask(std::size_t x_prev, std::size_t x_total) {
    if (x_prev > x_total) {
        throw InvalidInput("inherited query count exceeds the total");
    }
    return {x_prev, x_total};
}

VecX positional_encoding(const Vec3 &mu, int dim) {
    if (dim <= 0 || dim % 6 != 0) {
        throw InvalidInput("positional encoding width must be a positive multiple of 6");
    }
    const int pairs = dim / 6;
    const double base = 2.0 * std::numbers::pi / kLongestWavelength;
    const double ratio =
        pairs > 1 ? std::pow(kLongestWavelength / kShortestWavelength, 1.0 / (pairs - 1)) : 1.0;
    VecX pe(dim);
    for (int axis = 0; axis < 3; ++axis) {
        double freq = base;
        for (int k = 0; k < pairs; ++k) {
            const double phase = freq * mu[axis];
            pe[axis * 2 * pairs + 2 * k] = std::sin(phase);
            pe[axis * 2 * pairs + 2 * k + 1] = std::cos(phase);
            freq *= ratio;
        }
    }
    return pe;
}

AsaWeights AsaWeights::seeded(int dim, int heads, std::uint64_t seed) {
    if (dim <= 0 || heads <= 0 || dim % heads != 0) {
        throw InvalidInput("attention width must be a positive multiple of the head count");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
    auto draw = [&] {
        Eigen::MatrixXd m(dim, dim);
        for (Eigen::Index r = 0; r < dim; ++r) {
            for (Eigen::Index c = 0; c < dim; ++c) {
                m(r, c) = dist(rng);
            }
        }
        return m;
    };
    AsaWeights w;
    w.heads = heads;
    w.wq = draw();
    w.wk = draw();
    w.wv = draw();
    w.wo = draw();
    return w;
}

void AsaWeights::validate() const {
    const auto d = wq.rows();
    for (const auto *m : {&wq, &wk, &wv, &wo}) {
        if (m->rows() != d || m->cols() != d) {
            throw InvalidInput("attention projections must be square and equally sized");
        }
        if (!m->allFinite()) {
            throw NumericalDegeneracy("attention weights contain non-finite values");
        }
    }
    if (heads <= 0 || d % heads != 0) {
        throw InvalidInput("attention width must be a positive multiple of the head count");
    }
}

void AsaWeights::store(TensorFile &file) const {
    file.put("asa.wq", wq);
    file.put("asa.wk", wk);
    file.put("asa.wv", wv);
    file.put("asa.wo", wo);
    file.put("asa.heads", Eigen::MatrixXd::Constant(1, 1, heads));
}

AsaWeights AsaWeights::load(const TensorFile &file) {
    AsaWeights w;
    w.wq = file.get("asa.wq");
    w.wk = file.get("asa.wk");
    w.wv = file.get("asa.wv");
    w.wo = file.get("asa.wo");
    w.heads = file.contains("asa.heads") ? static_cast<int>(std::lround(file.get("asa.heads")(0, 0))) : 8;
    w.validate();
    return w;
}

Eigen::MatrixXd asa_forward(const Eigen::MatrixXd &queries, const std::vector<Vec3> &positions,
                            const AsaWeights &weights, const AsaMask &mask) {
    check_inputs(queries, positions, weights, mask);
    const Eigen::Index n = queries.rows();
    const Eigen::Index d = queries.cols();
    if (n == 0) {
        return Eigen::MatrixXd(0, d);
    }
    const Eigen::Index dh = d / weights.heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    const Eigen::MatrixXd x = add_encoding(queries, positions);
    const Eigen::MatrixXd q = x * weights.wq;
    const Eigen::MatrixXd k = x * weights.wk;
    const Eigen::MatrixXd v = queries * weights.wv;

    // Per-head copies so every block multiplies contiguous operands of fixed shape.
    std::vector<Eigen::MatrixXd> q_heads, k_heads, v_heads;
    for (int h = 0; h < weights.heads; ++h) {
        q_heads.emplace_back(q.middleCols(h * dh, dh));
        k_heads.emplace_back(k.middleCols(h * dh, dh));
        v_heads.emplace_back(v.middleCols(h * dh, dh));
    }

    Eigen::MatrixXd concat(n, d);
    const auto blocks = static_cast<std::size_t>((n + kRowBlock - 1) / kRowBlock);
    parallel_for(blocks * static_cast<std::size_t>(weights.heads), [&](std::size_t b, std::size_t e) {
        for (std::size_t job = b; job < e; ++job) {
            const auto h = static_cast<Eigen::Index>(job % static_cast<std::size_t>(weights.heads));
            const auto r0 = static_cast<Eigen::Index>(job / static_cast<std::size_t>(weights.heads)) * kRowBlock;
            const Eigen::Index rows = std::min(kRowBlock, n - r0);
            const Eigen::MatrixXd p_t = head_probabilities_t(q_heads[h], k_heads[h], r0, rows, mask, inv_sqrt_dh);
            concat.block(r0, h * dh, rows, dh).noalias() = p_t.transpose() * v_heads[h];
        }
    });
    return concat * weights.wo;
}

Eigen::MatrixXd asa_attention(const Eigen::MatrixXd &queries, const std::vector<Vec3> &positions,
                              const AsaWeights &weights, const AsaMask &mask, int head) {
    check_inputs(queries, positions, weights, mask);
    if (head < 0 || head >= weights.heads) {
        throw InvalidInput("head index out of range");
    }
    const Eigen::Index dh = queries.cols() / weights.heads;
    const Eigen::MatrixXd x = add_encoding(queries, positions);
    const Eigen::MatrixXd q_h = (x * weights.wq).middleCols(head * dh, dh);
    const Eigen::MatrixXd k_h = (x * weights.wk).middleCols(head * dh, dh);
    return head_probabilities_t(q_h, k_h, 0, queries.rows(), mask, 1.0 / std::sqrt(static_cast<double>(dh)))
        .transpose();
}

} // namespace fgs
