// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#include "fgs/metrics.hpp"

#include "fgs/error.hpp"

#include <algorithm>
#include <numeric>

namespace fgs {

MiouResult eval_miou(const VoxelGrid &pred, const VoxelGrid &gt, std::size_t class_count,
                     const std::set<std::uint16_t> &ignore, const std::vector<std::uint8_t> *visible) {
    if (!(pred.spec == gt.spec) || pred.labels.size() != gt.labels.size()) {
        throw InvalidInput("predicted and ground-truth grids differ");
    }
    if (visible != nullptr && visible->size() != gt.labels.size()) {
        throw InvalidInput("visibility mask does not match the grid");
    }
    if (class_count == 0) {
        for (const auto *g : {&pred, &gt}) {
            for (const auto l : g->labels) {
                if (l != kEmptyLabel) {
                    class_count = std::max<std::size_t>(class_count, std::size_t{l} + 1);
                }
            }
        }
    }
    std::vector<std::size_t> tp(class_count, 0), fp(class_count, 0), fn(class_count, 0);
    for (std::size_t v = 0; v < gt.labels.size(); ++v) {
        if (visible != nullptr && !(*visible)[v]) {
            continue;
        }
        const auto g = gt.labels[v];
        const auto p = pred.labels[v];
        if (ignore.contains(g)) {
            continue;
        }
        if (g == p) {
            if (g < class_count) {
                ++tp[g];
            }
            continue;
        }
        if (g < class_count) {
            ++fn[g];
        }
        if (p < class_count) {
            ++fp[p];
        }
    }
    MiouResult out;
    out.iou.assign(class_count, std::nullopt);
    double sum = 0.0;
    for (std::size_t c = 0; c < class_count; ++c) {
        const std::size_t denom = tp[c] + fp[c] + fn[c];
        if (ignore.contains(static_cast<std::uint16_t>(c)) || denom == 0) {
            continue;
        }
        const double iou = static_cast<double>(tp[c]) / static_cast<double>(denom);
        out.iou[c] = iou;
        sum += iou;
        ++out.evaluated;
    }
    out.miou = out.evaluated > 0 ? sum / static_cast<double>(out.evaluated) : 0.0;
    return out;
}

std::optional<double> average_precision(const std::vector<double> &scores, const std::vector<std::uint8_t> &positive) {
    if (scores.size() != positive.size()) {
        throw InvalidInput("scores and labels differ in length");
    }
    const auto total_pos = static_cast<std::size_t>(std::count_if(positive.begin(), positive.end(), [](auto p) { return p != 0; }));
    if (total_pos == 0) {
        return std::nullopt;
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    std::vector<double> precision, recall;
    precision.reserve(order.size());
    recall.reserve(order.size());
    std::size_t hits = 0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (positive[order[rank]]) {
            ++hits;
        }
        precision.push_back(static_cast<double>(hits) / static_cast<double>(rank + 1));
        recall.push_back(static_cast<double>(hits) / static_cast<double>(total_pos));
    }
    // Precision envelope: best precision at any recall at least as large.
    for (std::size_t i = precision.size(); i-- > 1;) {
        precision[i - 1] = std::max(precision[i - 1], precision[i]);
    }
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < recall.size(); ++i) {
        if (recall[i] > prev_recall) {
            ap += (recall[i] - prev_recall) * precision[i];
            prev_recall = recall[i];
        }
    }
    return ap;
}

MapResult eval_map(const Eigen::MatrixXd &scores,
                   const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> &positive,
                   const std::vector<std::uint8_t> *visible) {
    if (scores.rows() != positive.rows() || scores.cols() != positive.cols()) {
        throw InvalidInput("score and label matrices differ in shape");
    }
    if (visible != nullptr && visible->size() != static_cast<std::size_t>(scores.rows())) {
        throw InvalidInput("visibility mask does not match the point count");
    }
    MapResult out;
    double sum = 0.0, sum_v = 0.0;
    std::size_t n = 0, n_v = 0;
    for (Eigen::Index q = 0; q < scores.cols(); ++q) {
        std::vector<double> s, s_v;
        std::vector<std::uint8_t> p, p_v;
        for (Eigen::Index i = 0; i < scores.rows(); ++i) {
            s.push_back(scores(i, q));
            p.push_back(positive(i, q) != 0);
            if (visible == nullptr || (*visible)[static_cast<std::size_t>(i)]) {
                s_v.push_back(scores(i, q));
                p_v.push_back(positive(i, q) != 0);
            }
        }
        const auto ap = average_precision(s, p);
        const auto ap_v = visible == nullptr ? ap : average_precision(s_v, p_v);
        out.ap.push_back(ap);
        out.ap_visible.push_back(ap_v);
        if (ap) {
            sum += *ap;
            ++n;
        } else {
            out.warnings.push_back("query " + std::to_string(q) + " has no positive points; skipped");
        }
        if (ap_v) {
            sum_v += *ap_v;
            ++n_v;
        } else if (ap) {
            out.warnings.push_back("query " + std::to_string(q) + " has no visible positive points; skipped for mAP(v)");
        }
    }
    out.map = n > 0 ? sum / static_cast<double>(n) : 0.0;
    out.map_visible = n_v > 0 ? sum_v / static_cast<double>(n_v) : 0.0;
    return out;
}

} // namespace fgs
