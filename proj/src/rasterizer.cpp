// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#include "fgs/rasterizer.hpp"

#include "fgs/error.hpp"
#include "fgs/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace fgs {
namespace {

/// Inverse screen covariance packed as (a, b, c) for q = a dx² + 2 b dx dy + c dy².
struct Conic {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
};

Conic conic_of(const Mat2 &cov) {
    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    if (!(det > 0.0) || !std::isfinite(det)) {
        throw NumericalDegeneracy("screen-space covariance is singular");
    }
    const double inv = 1.0 / det;
    return {cov(1, 1) * inv, -0.5 * (cov(0, 1) + cov(1, 0)) * inv, cov(0, 0) * inv};
}

inline double splat_alpha(const Conic &k, double opacity, double dx, double dy, const RasterSettings &s) {
    const double q = k.a * dx * dx + 2.0 * k.b * dx * dy + k.c * dy * dy;
    const double alpha = std::min(s.alpha_max, opacity * std::exp(-0.5 * q));
    return alpha < s.alpha_min ? 0.0 : alpha;
}

struct Splat {
    Vec2 mean;
    Conic conic;
    double z = 0.0;
    double opacity = 0.0;
    const VecX *feature = nullptr;
    std::size_t source = 0;
    // Inclusive pixel bounds of the region where alpha can be non-zero.
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
};

std::vector<Splat> project_scene(const GaussianScene &scene, const CameraView &cam, const RasterSettings &s) {
    std::vector<Splat> splats;
    splats.reserve(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const auto &g = scene.gaussians[i];
        const auto p = project_gaussian(g, cam, i, s);
        if (!p || !(p->opacity >= s.alpha_min)) {
            continue;
        }
        Splat sp;
        sp.mean = p->mean2d;
        sp.conic = conic_of(p->cov2d);
        sp.z = p->z_cam;
        sp.opacity = p->opacity;
        sp.feature = &g.feature;
        sp.source = i;

        // alpha >= alpha_min  <=>  q <= 2 ln(opacity / alpha_min); take the union with
        // the 3-sigma ellipse and pad by a pixel so no contributing pixel is lost.
        const double q_max = std::max(9.0, 2.0 * std::log(p->opacity / s.alpha_min));
        const double rx = std::sqrt(q_max * p->cov2d(0, 0)) + 1.0;
        const double ry = std::sqrt(q_max * p->cov2d(1, 1)) + 1.0;
        sp.x0 = static_cast<int>(std::max(0.0, std::floor(sp.mean.x() - rx)));
        sp.x1 = static_cast<int>(std::min(cam.width - 1.0, std::ceil(sp.mean.x() + rx)));
        sp.y0 = static_cast<int>(std::max(0.0, std::floor(sp.mean.y() - ry)));
        sp.y1 = static_cast<int>(std::min(cam.height - 1.0, std::ceil(sp.mean.y() + ry)));
        if (sp.x0 > sp.x1 || sp.y0 > sp.y1) {
            continue;
        }
        splats.push_back(sp);
    }
    // Global depth order, ties by scene index.
    std::sort(splats.begin(), splats.end(), [](const Splat &l, const Splat &r) {
        return l.z < r.z || (l.z == r.z && l.source < r.source);
    });
    return splats;
}

/// Front-to-back blend of one pixel over `order` (indices into splats).
template <bool EarlyStop, typename Order>
void blend_pixel(int x, int y, const std::vector<Splat> &splats, const Order &order, const RasterSettings &s,
                 std::vector<double> &feat, RenderOutput &out) {
    std::fill(feat.begin(), feat.end(), 0.0);
    double transmittance = 1.0;
    double depth_num = 0.0;
    double weight_sum = 0.0;
    double z_lo = std::numeric_limits<double>::infinity();
    double z_hi = -z_lo;
    const std::size_t f_dim = feat.size();

    for (const auto idx : order) {
        const Splat &sp = splats[idx];
        if (x < sp.x0 || x > sp.x1 || y < sp.y0 || y > sp.y1) {
            continue;
        }
        const double alpha = splat_alpha(sp.conic, sp.opacity, x - sp.mean.x(), y - sp.mean.y(), s);
        if (alpha == 0.0) {
            continue;
        }
        const double w = alpha * transmittance;
        depth_num += sp.z * w;
        weight_sum += w;
        z_lo = std::min(z_lo, sp.z);
        z_hi = std::max(z_hi, sp.z);
        const double *f = sp.feature->data();
        for (std::size_t c = 0; c < f_dim; ++c) {
            feat[c] += f[c] * w;
        }
        transmittance *= 1.0 - alpha;
        if constexpr (EarlyStop) {
            if (transmittance < s.transmittance_stop) {
                break;
            }
        }
    }

    const std::size_t pix = out.index(y, x);
    out.acc_alpha[pix] = weight_sum;
    if (weight_sum >= s.min_accumulation) {
        out.valid[pix] = 1;
        // A convex combination of the contributing depths; the clamp only removes rounding.
        out.depth[pix] = std::clamp(depth_num / weight_sum, z_lo, z_hi);
    }
    float *dst = out.feature.data() + pix * f_dim;
    for (std::size_t c = 0; c < f_dim; ++c) {
        dst[c] = static_cast<float>(feat[c]);
    }
}

struct IndexRange {
    std::size_t first;
    std::size_t last;
    struct iterator {
        std::size_t v;
        std::size_t operator*() const { return v; }
        iterator &operator++() {
            ++v;
            return *this;
        }
        bool operator!=(const iterator &o) const { return v != o.v; }
    };
    iterator begin() const { return {first}; }
    iterator end() const { return {last}; }
};

void check_inputs(const GaussianScene &scene, const CameraView &cam) {
    cam.validate();
    for (const auto &g : scene.gaussians) {
        if (static_cast<std::size_t>(g.feature.size()) != scene.feature_dim) {
            throw InvalidInput("gaussian feature dimension does not match the scene");
        }
    }
}

} // namespace

std::optional<Projected2D> project_gaussian(const FeatureGaussian &g, const CameraView &cam, std::size_t source_index,
                                            const RasterSettings &settings) {
    const Mat3 w = cam.camera_to_ego.rotation.transpose();
    const Vec3 p = w * (g.mean - cam.camera_to_ego.translation);
    if (!(p.z() > kNearPlane)) {
        return std::nullopt;
    }
    const auto &k = cam.intrinsics;
    const double inv_z = 1.0 / p.z();

    // Linearize at a point no further off-axis than jacobian_clamp times the
    // image half-extent, so blobs far outside the view keep a sane footprint.
    const double lim_x = settings.jacobian_clamp * std::max(k.cx + 0.5, cam.width - 0.5 - k.cx) / k.fx;
    const double lim_y = settings.jacobian_clamp * std::max(k.cy + 0.5, cam.height - 0.5 - k.cy) / k.fy;
    const double tx = std::clamp(p.x() * inv_z, -lim_x, lim_x);
    const double ty = std::clamp(p.y() * inv_z, -lim_y, lim_y);
    Eigen::Matrix<double, 2, 3> jac;
    jac << k.fx * inv_z, 0.0, -k.fx * tx * inv_z,
           0.0, k.fy * inv_z, -k.fy * ty * inv_z;
    const Mat3 cov_cam = w * covariance3d(g.scale, g.rotation) * w.transpose();
    Mat2 cov2d = jac * cov_cam * jac.transpose();
    cov2d = 0.5 * (cov2d + cov2d.transpose());
    cov2d.diagonal().array() += settings.low_pass;

    Projected2D out;
    out.mean2d = Vec2(k.fx * p.x() * inv_z + k.cx, k.fy * p.y() * inv_z + k.cy);
    out.cov2d = cov2d;
    out.z_cam = p.z();
    out.opacity = g.opacity;
    out.source_index = source_index;

    const double rx = 3.0 * std::sqrt(cov2d(0, 0));
    const double ry = 3.0 * std::sqrt(cov2d(1, 1));
    if (!std::isfinite(rx) || !std::isfinite(ry) || out.mean2d.x() + rx < 0.0 || out.mean2d.x() - rx > cam.width - 1.0 ||
        out.mean2d.y() + ry < 0.0 || out.mean2d.y() - ry > cam.height - 1.0) {
        return std::nullopt;
    }
    return out;
}

double alpha_at(const Projected2D &p, const Vec2 &pixel, const RasterSettings &settings) {
    const Conic k = conic_of(p.cov2d);
    const Vec2 d = pixel - p.mean2d;
    return splat_alpha(k, p.opacity, d.x(), d.y(), settings);
}

RenderOutput render(const GaussianScene &scene, const CameraView &cam, const RasterSettings &settings) {
    check_inputs(scene, cam);
    RenderOutput out(cam.width, cam.height, scene.feature_dim);
    const auto splats = project_scene(scene, cam, settings);

    const int ts = settings.tile_size;
    const int tiles_x = (cam.width + ts - 1) / ts;
    const int tiles_y = (cam.height + ts - 1) / ts;
    const auto tile_count = static_cast<std::size_t>(tiles_x) * static_cast<std::size_t>(tiles_y);

    // CSR binning; filling in sorted order keeps every tile list depth-sorted.
    std::vector<std::size_t> tile_start(tile_count + 1, 0);
    auto for_each_tile = [&](const Splat &sp, auto &&fn) {
        for (int ty = sp.y0 / ts; ty <= sp.y1 / ts; ++ty) {
            for (int tx = sp.x0 / ts; tx <= sp.x1 / ts; ++tx) {
                fn(static_cast<std::size_t>(ty) * static_cast<std::size_t>(tiles_x) + static_cast<std::size_t>(tx));
            }
        }
    };
    for (const auto &sp : splats) {
        for_each_tile(sp, [&](std::size_t t) { ++tile_start[t + 1]; });
    }
    std::partial_sum(tile_start.begin(), tile_start.end(), tile_start.begin());
    std::vector<std::size_t> tile_entries(tile_start.back());
    std::vector<std::size_t> cursor(tile_start.begin(), tile_start.end() - 1);
    for (std::size_t i = 0; i < splats.size(); ++i) {
        for_each_tile(splats[i], [&](std::size_t t) { tile_entries[cursor[t]++] = i; });
    }

    parallel_for(tile_count, [&](std::size_t begin, std::size_t end) {
        std::vector<double> feat(scene.feature_dim);
        for (std::size_t t = begin; t < end; ++t) {
            const int tx = static_cast<int>(t % static_cast<std::size_t>(tiles_x));
            const int ty = static_cast<int>(t / static_cast<std::size_t>(tiles_x));
            const std::span<const std::size_t> order(tile_entries.data() + tile_start[t], tile_start[t + 1] - tile_start[t]);
            for (int y = ty * ts; y < std::min(cam.height, (ty + 1) * ts); ++y) {
                for (int x = tx * ts; x < std::min(cam.width, (tx + 1) * ts); ++x) {
                    blend_pixel<true>(x, y, splats, order, settings, feat, out);
                }
            }
        }
    });
    return out;
}

RenderOutput render_oracle(const GaussianScene &scene, const CameraView &cam, const RasterSettings &settings) {
    check_inputs(scene, cam);
    RenderOutput out(cam.width, cam.height, scene.feature_dim);
    auto splats = project_scene(scene, cam, settings);
    // The oracle ignores the binning bounds and tests every pixel.
    for (auto &sp : splats) {
        sp.x0 = 0;
        sp.x1 = cam.width - 1;
        sp.y0 = 0;
        sp.y1 = cam.height - 1;
    }
    const IndexRange all{0, splats.size()};
    parallel_for(static_cast<std::size_t>(cam.height), [&](std::size_t begin, std::size_t end) {
        std::vector<double> feat(scene.feature_dim);
        for (std::size_t y = begin; y < end; ++y) {
            for (int x = 0; x < cam.width; ++x) {
                blend_pixel<false>(x, static_cast<int>(y), splats, all, settings, feat, out);
            }
        }
    });
    return out;
}

} // namespace fgs
