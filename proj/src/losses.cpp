// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#include "fgs/losses.hpp"

#include "fgs/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fgs {
namespace {

void check_sizes(std::size_t a, std::size_t b, std::size_t m) {
    if (a != b || a != m) {
        throw InvalidInput("loss inputs differ in size");
    }
}

constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;
constexpr double kSsimWeight = 0.85;

int reflect(int i, int n) {
    if (n == 1) {
        return 0;
    }
    if (i < 0) {
        return -i;
    }
    if (i >= n) {
        return 2 * (n - 1) - i;
    }
    return i;
}

/// Per-pixel photometric error between x and y (both H x W x 3) using a 3x3
/// reflect-padded SSIM window, averaged over channels.
std::vector<double> photometric_error(const Plane &x, const Plane &y) {
    const int h = x.height;
    const int w = x.width;
    std::vector<double> err(x.pixel_count(), 0.0);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double ssim_sum = 0.0;
            double l1_sum = 0.0;
            for (int ch = 0; ch < 3; ++ch) {
                double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
                for (int dr = -1; dr <= 1; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int rr = reflect(r + dr, h);
                        const int cc = reflect(c + dc, w);
                        const double a = x.at(rr, cc, ch);
                        const double b = y.at(rr, cc, ch);
                        mx += a;
                        my += b;
                        sxx += a * a;
                        syy += b * b;
                        sxy += a * b;
                    }
                }
                mx /= 9.0;
                my /= 9.0;
                const double vx = sxx / 9.0 - mx * mx;
                const double vy = syy / 9.0 - my * my;
                const double cxy = sxy / 9.0 - mx * my;
                const double ssim = ((2.0 * mx * my + kSsimC1) * (2.0 * cxy + kSsimC2)) /
                                    ((mx * mx + my * my + kSsimC1) * (vx + vy + kSsimC2));
                ssim_sum += std::clamp((1.0 - ssim) / 2.0, 0.0, 1.0);
                l1_sum += std::abs(static_cast<double>(x.at(r, c, ch)) - static_cast<double>(y.at(r, c, ch)));
            }
            err[x.index(r, c) / 3] = kSsimWeight * ssim_sum / 3.0 + (1.0 - kSsimWeight) * l1_sum / 3.0;
        }
    }
    return err;
}

} // namespace

double pairwise_sum(std::span<const double> values) {
    if (values.size() <= 8) {
        double s = 0.0;
        for (const double v : values) {
            s += v;
        }
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

double l1_depth(std::span<const double> reference, std::span<const double> rendered,
                std::span<const std::uint8_t> mask) {
    check_sizes(reference.size(), rendered.size(), mask.size());
    std::vector<double> terms;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) {
            terms.push_back(std::abs(reference[i] - rendered[i]));
        }
    }
    if (terms.empty()) {
        throw EmptyInput("L1 depth loss has no valid pixels");
    }
    return pairwise_sum(terms) / static_cast<double>(terms.size());
}

double silog(std::span<const double> reference, std::span<const double> rendered, std::span<const std::uint8_t> mask,
             double lambda_var) {
    check_sizes(reference.size(), rendered.size(), mask.size());
    std::vector<double> g;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) {
            continue;
        }
        if (!(reference[i] > 0.0) || !(rendered[i] > 0.0)) {
            throw InvalidInput("SILog needs strictly positive depths");
        }
        // ln(D̂/D): a common power-of-two factor cancels exactly in the ratio.
        g.push_back(std::log(rendered[i] / reference[i]));
    }
    if (g.empty()) {
        throw EmptyInput("SILog loss has no valid pixels");
    }
    std::vector<double> g2(g.size());
    std::transform(g.begin(), g.end(), g2.begin(), [](double v) { return v * v; });
    const double n = static_cast<double>(g.size());
    const double mean_g = pairwise_sum(g) / n;
    const double mean_g2 = pairwise_sum(g2) / n;
    // For λ_var <= 1 this is non-negative up to rounding.
    return std::max(0.0, mean_g2 - lambda_var * mean_g * mean_g);
}

double photometric_temporal(const Plane &target_photo, const Intrinsics &k, std::span<const double> rendered_depth,
                            std::span<const std::uint8_t> depth_valid, const std::vector<PhotoSource> &sources) {
    const int h = target_photo.height;
    const int w = target_photo.width;
    if (target_photo.channels != 3 || rendered_depth.size() != target_photo.pixel_count() ||
        depth_valid.size() != rendered_depth.size()) {
        throw InvalidInput("photometric loss inputs differ in size");
    }
    if (sources.empty()) {
        throw EmptyInput("photometric loss needs at least one source frame");
    }

    std::vector<double> best(target_photo.pixel_count(), std::numeric_limits<double>::infinity());
    for (const auto &src : sources) {
        const Plane &sp = *src.photo;
        if (sp.channels != 3) {
            throw InvalidInput("source photo must have three channels");
        }
        Plane warped(h, w, 3, 0.0f);
        std::vector<std::uint8_t> ok(target_photo.pixel_count(), 0);
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                const std::size_t i = static_cast<std::size_t>(r) * static_cast<std::size_t>(w) + static_cast<std::size_t>(c);
                if (!depth_valid[i]) {
                    continue;
                }
                const double d = rendered_depth[i];
                const Vec3 p_t((c - k.cx) / k.fx * d, (r - k.cy) / k.fy * d, d);
                const Vec3 p_s = src.target_to_source.apply(p_t);
                if (!(p_s.z() > kNearPlane)) {
                    continue;
                }
                const double u = src.intrinsics.fx * p_s.x() / p_s.z() + src.intrinsics.cx;
                const double v = src.intrinsics.fy * p_s.y() / p_s.z() + src.intrinsics.cy;
                if (!(u >= 0.0 && u <= sp.width - 1.0 && v >= 0.0 && v <= sp.height - 1.0)) {
                    continue;
                }
                const int x0 = std::min(static_cast<int>(std::floor(u)), std::max(0, sp.width - 2));
                const int y0 = std::min(static_cast<int>(std::floor(v)), std::max(0, sp.height - 2));
                const int x1 = std::min(x0 + 1, sp.width - 1);
                const int y1 = std::min(y0 + 1, sp.height - 1);
                const double tx = u - x0;
                const double ty = v - y0;
                for (int ch = 0; ch < 3; ++ch) {
                    warped.at(r, c, ch) = static_cast<float>(
                        (1.0 - tx) * (1.0 - ty) * sp.at(y0, x0, ch) + tx * (1.0 - ty) * sp.at(y0, x1, ch) +
                        (1.0 - tx) * ty * sp.at(y1, x0, ch) + tx * ty * sp.at(y1, x1, ch));
                }
                ok[i] = 1;
            }
        }
        const auto err = photometric_error(target_photo, warped);
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                bool neighbourhood_ok = true;
                for (int dr = -1; dr <= 1 && neighbourhood_ok; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        const std::size_t j = static_cast<std::size_t>(reflect(r + dr, h)) * static_cast<std::size_t>(w) +
                                              static_cast<std::size_t>(reflect(c + dc, w));
                        if (!ok[j]) {
                            neighbourhood_ok = false;
                            break;
                        }
                    }
                }
                const std::size_t i = static_cast<std::size_t>(r) * static_cast<std::size_t>(w) + static_cast<std::size_t>(c);
                if (neighbourhood_ok) {
                    best[i] = std::min(best[i], err[i]);
                }
            }
        }
    }

    std::vector<double> terms;
    for (const double b : best) {
        if (std::isfinite(b)) {
            terms.push_back(b);
        }
    }
    if (terms.empty()) {
        throw EmptyInput("no pixel overlaps any source frame after warping");
    }
    return pairwise_sum(terms) / static_cast<double>(terms.size());
}

FeatureLoss feat_loss(std::span<const float> reference, std::span<const float> rendered, std::size_t channels,
                      std::span<const std::uint8_t> mask) {
    if (channels == 0 || reference.size() != rendered.size() || reference.size() != mask.size() * channels) {
        throw InvalidInput("feature loss inputs differ in size");
    }
    std::vector<double> cos_terms;
    std::vector<double> sq_terms;
    for (std::size_t p = 0; p < mask.size(); ++p) {
        if (!mask[p]) {
            continue;
        }
        double dot = 0.0, na = 0.0, nb = 0.0, sq = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
            const double a = reference[p * channels + c];
            const double b = rendered[p * channels + c];
            dot += a * b;
            na += a * a;
            nb += b * b;
            sq += (a - b) * (a - b);
        }
        sq_terms.push_back(sq);
        if (na > 0.0 && nb > 0.0) {
            cos_terms.push_back(1.0 - dot / (std::sqrt(na) * std::sqrt(nb)));
        }
    }
    FeatureLoss out;
    if (!cos_terms.empty()) {
        out.cos_term = std::max(0.0, pairwise_sum(cos_terms) / static_cast<double>(cos_terms.size()));
    }
    if (!sq_terms.empty()) {
        out.mse_term = pairwise_sum(sq_terms) / static_cast<double>(sq_terms.size() * channels);
    }
    return out;
}

void LossWeights::validate() const {
    for (const double v : {lambda_silog, lambda_temp, lambda_mse, lambda_depth, lambda_feat}) {
        if (!(v >= 0.0)) {
            throw InvalidInput("loss weights must be non-negative");
        }
    }
}

LossBreakdown total_loss(const LossComponents &c, const LossWeights &w) {
    w.validate();
    LossBreakdown out;
    out.depth = c.l1 + w.lambda_silog * c.silog + w.lambda_temp * c.temporal;
    out.feature = c.cos + w.lambda_mse * c.mse;
    out.total = w.lambda_depth * out.depth + w.lambda_feat * out.feature;
    out.terms = {
        {"l1", w.lambda_depth * c.l1},
        {"silog", w.lambda_depth * w.lambda_silog * c.silog},
        {"temporal", w.lambda_depth * w.lambda_temp * c.temporal},
        {"cos", w.lambda_feat * c.cos},
        {"mse", w.lambda_feat * w.lambda_mse * c.mse},
    };
    return out;
}

} // namespace fgs
