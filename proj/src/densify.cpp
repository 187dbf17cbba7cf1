// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#include "fgs/densify.hpp"

#include "fgs/error.hpp"
#include "fgs/parallel.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace fgs {
namespace {

FeatureGaussian fresh_gaussian(const Vec3 &mean, const DensifyConfig &cfg, std::size_t feature_dim) {
    FeatureGaussian g;
    g.mean = mean;
    g.scale = Vec3::Constant(cfg.init_scale);
    g.rotation = Vec4(1.0, 0.0, 0.0, 0.0);
    g.opacity = cfg.init_opacity;
    g.feature = VecX::Constant(static_cast<Eigen::Index>(feature_dim), cfg.init_feature);
    return g;
}

double mean_abs_residual(const RenderOutput &rendered, const DepthMap &ref, const std::vector<std::size_t> &pixels,
                         std::size_t &count) {
    double sum = 0.0;
    count = 0;
    for (const auto p : pixels) {
        if (rendered.valid[p]) {
            sum += std::abs(rendered.depth[p] - static_cast<double>(ref.depth.data[p]));
            ++count;
        }
    }
    return count ? sum / static_cast<double>(count) : 0.0;
}

} // namespace

void DensifyConfig::validate() const {
    if (!(gamma > 0.0)) {
        throw InvalidInput("gamma must be positive");
    }
    if (base_count == 0) {
        throw InvalidInput("base count must be positive");
    }
    for (const auto b : layer_budgets) {
        if (b == 0) {
            throw InvalidInput("layer budgets must be positive");
        }
    }
    if (!(init_scale > 0.0) || !(init_opacity >= 0.0 && init_opacity <= 1.0)) {
        throw InvalidInput("initial scale must be positive and opacity within [0, 1]");
    }
}

std::vector<std::size_t> fps(std::span<const Vec3> points, std::size_t k) {
    if (k > points.size()) {
        throw InvalidInput("cannot pick " + std::to_string(k) + " points out of " + std::to_string(points.size()));
    }
    std::vector<std::size_t> picked;
    if (k == 0) {
        return picked;
    }
    picked.reserve(k);
    std::vector<double> min_d2(points.size(), std::numeric_limits<double>::infinity());
    std::size_t current = 0;
    picked.push_back(current);
    // Picked points are parked below every real distance so duplicates of a
    // picked point are still eligible but the point itself is not.
    min_d2[current] = -1.0;
    for (std::size_t it = 1; it < k; ++it) {
        const Vec3 c = points[current];
        double best = -0.5;
        std::size_t best_idx = 0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const double dx = points[i].x() - c.x();
            const double dy = points[i].y() - c.y();
            const double dz = points[i].z() - c.z();
            const double d2 = dx * dx + dy * dy + dz * dz;
            if (d2 < min_d2[i]) {
                min_d2[i] = d2;
            }
            // Strict comparison keeps the lowest index on ties.
            if (min_d2[i] > best) {
                best = min_d2[i];
                best_idx = i;
            }
        }
        current = best_idx;
        picked.push_back(current);
        min_d2[current] = -1.0;
    }
    return picked;
}

GaussianScene base_init(const std::vector<CameraView> &views, const DensifyConfig &cfg, std::size_t feature_dim) {
    cfg.validate();
    std::vector<Vec3> cloud;
    for (const auto &v : views) {
        if (!v.ref_depth) {
            throw InvalidInput("base initialization needs a reference depth map in every view");
        }
        const auto pts = backproject(v, *v.ref_depth);
        cloud.insert(cloud.end(), pts.begin(), pts.end());
    }
    if (cloud.size() < cfg.base_count) {
        throw InsufficientPoints("only " + std::to_string(cloud.size()) + " valid depth pixels for " +
                                 std::to_string(cfg.base_count) + " base gaussians");
    }
    GaussianScene scene;
    scene.feature_dim = feature_dim;
    for (const auto idx : fps(cloud, cfg.base_count)) {
        scene.gaussians.push_back(fresh_gaussian(cloud[idx], cfg, feature_dim));
    }
    scene.layer_offsets.push_back(scene.gaussians.size());
    return scene;
}

std::vector<std::size_t> select_under_represented(const RenderOutput &rendered, const DepthMap &reference, double gamma,
                                                  SelectMode mode) {
    if (rendered.width != reference.depth.width || rendered.height != reference.depth.height) {
        throw InvalidInput("rendered and reference depth sizes differ");
    }
    std::vector<std::size_t> selected;
    for (std::size_t p = 0; p < rendered.pixel_count(); ++p) {
        if (!reference.valid[p]) {
            continue;
        }
        if (!rendered.valid[p]) {
            selected.push_back(p);
            continue;
        }
        double residual = rendered.depth[p] - static_cast<double>(reference.depth.data[p]);
        if (mode == SelectMode::Absolute) {
            residual = std::abs(residual);
        }
        if (residual > gamma) {
            selected.push_back(p);
        }
    }
    return selected;
}

GaussianScene densify_layer(const GaussianScene &scene, const std::vector<CameraView> &views, const DensifyConfig &cfg,
                            std::size_t layer, DensifyReport *report) {
    cfg.validate();
    if (layer == 0 || scene.layer_count() != layer) {
        throw InvalidInput("densify_layer(" + std::to_string(layer) + ") needs a scene with exactly that many layers");
    }
    if (cfg.layer_budgets.empty()) {
        throw InvalidInput("no layer budgets configured");
    }
    const std::size_t budget = cfg.layer_budgets[std::min(layer - 1, cfg.layer_budgets.size() - 1)];
    for (const auto &v : views) {
        if (!v.ref_depth) {
            throw InvalidInput("densification needs a reference depth map in every view");
        }
    }

    std::vector<RenderOutput> before(views.size());
    std::vector<std::vector<std::size_t>> selected(views.size());
    parallel_for(views.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            before[i] = render(scene, views[i], cfg.raster);
            selected[i] = select_under_represented(before[i], *views[i].ref_depth, cfg.gamma, cfg.select_mode);
        }
    });

    std::vector<Vec3> pool;
    for (std::size_t i = 0; i < views.size(); ++i) {
        const auto &v = views[i];
        for (const auto p : selected[i]) {
            const int x = static_cast<int>(p % static_cast<std::size_t>(v.width));
            const int y = static_cast<int>(p / static_cast<std::size_t>(v.width));
            pool.push_back(backproject_pixel(v, x, y, v.ref_depth->depth.data[p]));
        }
    }

    GaussianScene out = scene;
    const std::size_t take = std::min(budget, pool.size());
    for (const auto idx : fps(pool, take)) {
        out.gaussians.push_back(fresh_gaussian(pool[idx], cfg, scene.feature_dim));
    }
    out.layer_offsets.push_back(out.gaussians.size());

    if (report) {
        report->selected_pixels_per_view.clear();
        for (const auto &s : selected) {
            report->selected_pixels_per_view.push_back(s.size());
        }
        report->added_count = take;
        double sum_before = 0.0;
        double sum_after = 0.0;
        std::size_t n_before = 0;
        std::size_t n_after = 0;
        for (std::size_t i = 0; i < views.size(); ++i) {
            std::size_t c = 0;
            sum_before += mean_abs_residual(before[i], *views[i].ref_depth, selected[i], c) * static_cast<double>(c);
            n_before += c;
            const RenderOutput after = take ? render(out, views[i], cfg.raster) : before[i];
            sum_after += mean_abs_residual(after, *views[i].ref_depth, selected[i], c) * static_cast<double>(c);
            n_after += c;
        }
        report->residual_before = n_before ? sum_before / static_cast<double>(n_before) : 0.0;
        report->residual_after = n_after ? sum_after / static_cast<double>(n_after) : 0.0;
        report->residual_pixels_before = n_before;
        report->residual_pixels_after = n_after;
    }
    return out;
}

} // namespace fgs
