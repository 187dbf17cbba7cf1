// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#include "fgs/sampling.hpp"

#include "fgs/error.hpp"
#include "fgs/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

namespace fgs {
namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double inverse_softplus(double y) { return y + std::log(-std::expm1(-y)); }

double logistic(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

std::vector<int> layer_sizes(int in, int hidden, int out) {
    if (hidden > 0) {
        return {in, hidden, out};
    }
    return {in, out};
}

Eigen::MatrixXd scalar(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }

} // namespace

DecodeHeads DecodeHeads::seeded(int query_dim, int feature_dim, std::uint64_t seed, int sample_count, int hidden) {
    DecodeHeads h;
    h.sample_count = sample_count;
    h.offset_head = AffineStack::seeded(layer_sizes(query_dim, hidden, 3 * sample_count), seed * 4 + 1);
    h.weights_head = AffineStack::seeded(layer_sizes(query_dim, hidden, sample_count), seed * 4 + 2);
    h.feat_head = AffineStack::seeded(layer_sizes(feature_dim, hidden, feature_dim), seed * 4 + 3);
    h.geo_head = AffineStack::seeded(layer_sizes(feature_dim, hidden, kGeoOutputs), seed * 4 + 4);
    return h;
}

DecodeHeads DecodeHeads::passthrough(int query_dim, int feature_dim, double scale, double opacity, int sample_count,
                                     double spread) {
    if (!(scale > 0.0) || !(opacity > 0.0 && opacity < 1.0) || !(spread >= 0.0 && spread < 1.0)) {
        throw InvalidInput("passthrough heads need scale > 0, opacity in (0,1) and spread in [0,1)");
    }
    DecodeHeads h;
    h.sample_count = sample_count;
    if (!(scale > h.min_scale)) {
        throw InvalidInput("passthrough scale must exceed the minimum scale");
    }

    // Cube corners at full and half spread, cycling for larger sample counts.
    h.offset_head = AffineStack::zeros({query_dim, 3 * sample_count});
    auto &offset_bias = h.offset_head.layers().back().bias;
    for (int j = 0; j < sample_count; ++j) {
        const double radius = (j / 8) % 2 == 0 ? spread : 0.5 * spread;
        for (int a = 0; a < 3; ++a) {
            const double sign = (j >> a) & 1 ? 1.0 : -1.0;
            offset_bias[3 * j + a] = std::atanh(sign * radius);
        }
    }

    h.feat_head = AffineStack::zeros({feature_dim, feature_dim});
    h.feat_head.layers().back().weight.setIdentity();

    h.geo_head = AffineStack::zeros({feature_dim, kGeoOutputs});
    auto &geo_bias = h.geo_head.layers().back().bias;
    for (int a = 0; a < 3; ++a) {
        geo_bias[3 + a] = inverse_softplus(scale - h.min_scale);
    }
    geo_bias[6] = 1.0;
    geo_bias[10] = std::log(opacity / (1.0 - opacity));
    return h;
}

void DecodeHeads::validate(int query_dim, int feature_dim) const {
    if (sample_count <= 0) {
        throw InvalidInput("sample count must be positive");
    }
    if (offset_head.input_dim() != query_dim || offset_head.output_dim() != 3 * sample_count) {
        throw InvalidInput("offset head must map the query width to 3 * sample_count");
    }
    if (!weights_head.empty() && weights_head.input_dim() != query_dim) {
        throw InvalidInput("weights head must take the query width");
    }
    if (feat_head.input_dim() != feature_dim || feat_head.output_dim() != feature_dim) {
        throw InvalidInput("feature head must map F to F");
    }
    if (geo_head.input_dim() != feature_dim || geo_head.output_dim() != kGeoOutputs) {
        throw InvalidInput("geometry head must map F to 11 outputs");
    }
}

void DecodeHeads::store(TensorFile &file) const {
    offset_head.store(file, "offset");
    weights_head.store(file, "weights");
    feat_head.store(file, "feat");
    geo_head.store(file, "geo");
    file.put("meta.sample_count", scalar(sample_count));
    file.put("meta.max_displacement", scalar(max_displacement));
    file.put("meta.min_scale", scalar(min_scale));
}

DecodeHeads DecodeHeads::load(const TensorFile &file) {
    DecodeHeads h;
    h.offset_head = AffineStack::load(file, "offset");
    h.weights_head = AffineStack::load(file, "weights");
    h.feat_head = AffineStack::load(file, "feat");
    h.geo_head = AffineStack::load(file, "geo");
    if (file.contains("meta.sample_count")) {
        h.sample_count = static_cast<int>(std::lround(file.get("meta.sample_count")(0, 0)));
    } else {
        h.sample_count = h.offset_head.output_dim() / 3;
    }
    if (file.contains("meta.max_displacement")) {
        h.max_displacement = file.get("meta.max_displacement")(0, 0);
    }
    if (file.contains("meta.min_scale")) {
        h.min_scale = file.get("meta.min_scale")(0, 0);
    }
    if (h.offset_head.empty() || h.feat_head.empty() || h.geo_head.empty()) {
        throw InvalidInput("weight file lacks offset, feat or geo head");
    }
    return h;
}

std::vector<Vec3> gen_offsets(const VecX &query, const DecodeHeads &heads) {
    const VecX raw = heads.offset_head.forward(query);
    if (raw.size() != 3 * heads.sample_count) {
        throw InvalidInput("offset head output does not match 3 * sample_count");
    }
    std::vector<Vec3> offsets(static_cast<std::size_t>(heads.sample_count));
    for (int j = 0; j < heads.sample_count; ++j) {
        offsets[static_cast<std::size_t>(j)] = Vec3(std::tanh(raw[3 * j]), std::tanh(raw[3 * j + 1]), std::tanh(raw[3 * j + 2]));
    }
    return offsets;
}

SampleSet place_samples(const FeatureGaussian &g, const std::vector<Vec3> &offsets) {
    const Mat3 rot = quat_to_rotmat(g.rotation);
    SampleSet set;
    set.offsets = offsets;
    set.points.reserve(offsets.size());
    for (const auto &o : offsets) {
        set.points.push_back(g.mean + rot * g.scale.cwiseProduct(o));
    }
    return set;
}

std::size_t SampledFeatures::valid_pairs() const {
    return static_cast<std::size_t>(std::count_if(valid.begin(), valid.end(), [](std::uint8_t v) { return v != 0; }));
}

SampledFeatures sample_features(const SampleSet &samples, const std::vector<CameraView> &views) {
    SampledFeatures out;
    out.point_count = samples.points.size();
    out.view_count = views.size();
    for (const auto &v : views) {
        if (!v.ref_feature) {
            throw InvalidInput("feature sampling needs a feature plane in every view");
        }
        const auto c = static_cast<std::size_t>(v.ref_feature->channels);
        if (out.feature_dim != 0 && out.feature_dim != c) {
            throw InvalidInput("feature planes disagree on the channel count");
        }
        out.feature_dim = c;
    }
    out.values.assign(out.point_count * out.view_count * out.feature_dim, 0.0f);
    out.valid.assign(out.point_count * out.view_count, 0);

    for (std::size_t p = 0; p < out.point_count; ++p) {
        for (std::size_t vi = 0; vi < views.size(); ++vi) {
            const auto &view = views[vi];
            const auto proj = project_point(samples.points[p], view);
            if (!proj) {
                continue;
            }
            const double u = proj->pixel.x();
            const double v = proj->pixel.y();
            if (!(u >= 0.0 && u <= view.width - 1.0 && v >= 0.0 && v <= view.height - 1.0)) {
                continue;
            }
            const int x0 = std::min(static_cast<int>(std::floor(u)), std::max(0, view.width - 2));
            const int y0 = std::min(static_cast<int>(std::floor(v)), std::max(0, view.height - 2));
            const int x1 = std::min(x0 + 1, view.width - 1);
            const int y1 = std::min(y0 + 1, view.height - 1);
            const double tx = u - x0;
            const double ty = v - y0;
            const Plane &plane = *view.ref_feature;
            const std::size_t pr = out.pair(p, vi);
            float *dst = out.values.data() + pr * out.feature_dim;
            for (std::size_t c = 0; c < out.feature_dim; ++c) {
                const int ci = static_cast<int>(c);
                const double value = (1.0 - tx) * (1.0 - ty) * plane.at(y0, x0, ci) + tx * (1.0 - ty) * plane.at(y0, x1, ci) +
                                     (1.0 - tx) * ty * plane.at(y1, x0, ci) + tx * ty * plane.at(y1, x1, ci);
                dst[c] = static_cast<float>(value);
            }
            out.valid[pr] = 1;
        }
    }
    return out;
}

std::optional<VecX> aggregate(const SampledFeatures &features, const AffineStack *weights_head, const VecX &query) {
    const std::size_t pairs = features.point_count * features.view_count;
    std::vector<double> weights(pairs, 0.0);
    bool any = false;
    for (std::size_t i = 0; i < pairs; ++i) {
        any = any || features.valid[i] != 0;
    }
    if (!any) {
        return std::nullopt;
    }

    if (weights_head && !weights_head->empty()) {
        const VecX logits = weights_head->forward(query);
        const auto n = static_cast<Eigen::Index>(features.point_count);
        const auto nv = static_cast<Eigen::Index>(pairs);
        if (logits.size() != nv && logits.size() != n) {
            throw InvalidInput("weights head output must have one logit per sample or per (sample, view) pair");
        }
        auto logit = [&](std::size_t pr) {
            return logits.size() == nv ? logits[static_cast<Eigen::Index>(pr)]
                                       : logits[static_cast<Eigen::Index>(pr / features.view_count)];
        };
        double max_logit = -std::numeric_limits<double>::infinity();
        for (std::size_t pr = 0; pr < pairs; ++pr) {
            if (features.valid[pr]) {
                max_logit = std::max(max_logit, logit(pr));
            }
        }
        double norm = 0.0;
        for (std::size_t pr = 0; pr < pairs; ++pr) {
            if (features.valid[pr]) {
                weights[pr] = std::exp(logit(pr) - max_logit);
                norm += weights[pr];
            }
        }
        for (auto &w : weights) {
            w /= norm;
        }
    } else {
        const double w = 1.0 / static_cast<double>(features.valid_pairs());
        for (std::size_t pr = 0; pr < pairs; ++pr) {
            if (features.valid[pr]) {
                weights[pr] = w;
            }
        }
    }

    VecX out = VecX::Zero(static_cast<Eigen::Index>(features.feature_dim));
    for (std::size_t pr = 0; pr < pairs; ++pr) {
        if (!features.valid[pr]) {
            continue;
        }
        const float *f = features.values.data() + pr * features.feature_dim;
        for (std::size_t c = 0; c < features.feature_dim; ++c) {
            out[static_cast<Eigen::Index>(c)] += weights[pr] * static_cast<double>(f[c]);
        }
    }
    return out;
}

FeatureGaussian decode_update(const VecX &aggregated, const DecodeHeads &heads, const FeatureGaussian &previous) {
    const VecX feat = heads.feat_head.forward(aggregated);
    const VecX geo = heads.geo_head.forward(aggregated);
    if (geo.size() != DecodeHeads::kGeoOutputs) {
        throw InvalidInput("geometry head must emit 11 values");
    }
    if (!feat.allFinite() || !geo.allFinite()) {
        throw NumericalDegeneracy("decode heads produced non-finite output");
    }

    FeatureGaussian g;
    for (int a = 0; a < 3; ++a) {
        g.mean[a] = previous.mean[a] + heads.max_displacement * std::tanh(geo[a]);
        g.scale[a] = softplus(geo[3 + a]) + heads.min_scale;
    }
    const Vec4 q = geo.segment<4>(6);
    const double n = q.norm();
    g.rotation = n > 1e-12 && std::isfinite(n) ? Vec4(q / n) : Vec4(1.0, 0.0, 0.0, 0.0);
    g.opacity = logistic(geo[10]);
    g.feature = feat;
    if (!g.mean.allFinite() || !g.scale.allFinite()) {
        throw NumericalDegeneracy("decoded gaussian is not finite");
    }
    return g;
}

std::size_t refine_range(GaussianScene &scene, std::size_t begin, std::size_t end, const Eigen::MatrixXd &queries,
                         const std::vector<CameraView> &views, const DecodeHeads &heads) {
    if (end > scene.size() || begin > end) {
        throw InvalidInput("refine range lies outside the scene");
    }
    if (static_cast<std::size_t>(queries.rows()) != scene.size()) {
        throw InvalidInput("one query row per gaussian is required");
    }
    heads.validate(static_cast<int>(queries.cols()), static_cast<int>(scene.feature_dim));

    std::atomic<std::size_t> updated{0};
    parallel_for(end - begin, [&](std::size_t b, std::size_t e) {
        std::size_t local = 0;
        for (std::size_t k = begin + b; k < begin + e; ++k) {
            FeatureGaussian &g = scene.gaussians[k];
            const VecX query = queries.row(static_cast<Eigen::Index>(k)).transpose();
            const SampleSet samples = place_samples(g, gen_offsets(query, heads));
            const SampledFeatures sampled = sample_features(samples, views);
            const auto fa = aggregate(sampled, heads.weights_head.empty() ? nullptr : &heads.weights_head, query);
            if (!fa) {
                continue;
            }
            g = decode_update(*fa, heads, g);
            ++local;
        }
        updated += local;
    }, 16);
    return updated.load();
}

} // namespace fgs
