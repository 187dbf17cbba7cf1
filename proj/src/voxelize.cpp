// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#include "fgs/voxelize.hpp"

#include "fgs/error.hpp"
#include "fgs/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace fgs {
namespace {

/// Gaussian data the kernel needs, precomputed once per call.
struct Kernel {
    Vec3 mean;
    Mat3 precision; // Σ⁻¹
    Vec3 half_extent; // cutoff · sqrt(diag Σ)
};

std::vector<Kernel> prepare(const GaussianScene &scene, double cutoff) {
    std::vector<Kernel> out;
    out.reserve(scene.size());
    for (const auto &g : scene.gaussians) {
        const Mat3 r = quat_to_rotmat(g.rotation);
        if (!(g.scale.array() > 0.0).all()) {
            throw InvalidInput("Gaussian scale must be positive");
        }
        const Vec3 inv_s2 = g.scale.array().square().inverse();
        Kernel k;
        k.mean = g.mean;
        k.precision = r * inv_s2.asDiagonal() * r.transpose();
        k.precision = 0.5 * (k.precision + k.precision.transpose()).eval();
        const Mat3 cov = covariance3d(g.scale, g.rotation);
        k.half_extent = cutoff * cov.diagonal().cwiseSqrt();
        out.push_back(k);
    }
    return out;
}

/// exp(-½ dᵀΣ⁻¹d), or 0 beyond the cutoff.
double weight(const Kernel &k, const Vec3 &x, double cutoff_sq) {
    const Vec3 d = x - k.mean;
    const double m2 = d.dot(k.precision * d);
    if (m2 > cutoff_sq) {
        return 0.0;
    }
    return std::exp(-0.5 * m2);
}

/// For every cell of `spec`, the Gaussians whose cutoff box contains the cell
/// center (or, with `boxes`, overlaps the cell), ascending by index.
struct CandidateLists {
    std::vector<std::size_t> offsets;
    std::vector<std::uint32_t> items;

    std::span<const std::uint32_t> at(std::size_t cell) const {
        return {items.data() + offsets[cell], offsets[cell + 1] - offsets[cell]};
    }
};

/// Inclusive index range of cells along one axis touched by [lo, hi].
bool axis_range(double lo, double hi, double origin, double size, int dim, bool centers, int &a, int &b) {
    double fa, fb;
    if (centers) {
        fa = std::ceil((lo - origin) / size - 0.5);
        fb = std::floor((hi - origin) / size - 0.5);
    } else {
        fa = std::floor((lo - origin) / size);
        fb = std::floor((hi - origin) / size);
    }
    fa = std::max(fa, 0.0);
    fb = std::min(fb, static_cast<double>(dim - 1));
    if (!(fa <= fb)) {
        return false;
    }
    a = static_cast<int>(fa);
    b = static_cast<int>(fb);
    return true;
}

CandidateLists build_candidates(const std::vector<Kernel> &kernels, const GridSpec &spec, bool centers) {
    CandidateLists lists;
    const std::size_t cells = spec.voxel_count();
    lists.offsets.assign(cells + 1, 0);
    auto visit = [&](auto &&fn) {
        for (std::size_t g = 0; g < kernels.size(); ++g) {
            const Vec3 lo = kernels[g].mean - kernels[g].half_extent;
            const Vec3 hi = kernels[g].mean + kernels[g].half_extent;
            std::array<int, 3> a{}, b{};
            bool any = true;
            for (int ax = 0; ax < 3 && any; ++ax) {
                any = axis_range(lo[ax], hi[ax], spec.origin[ax], spec.voxel_size, spec.dims[ax], centers, a[ax], b[ax]);
            }
            if (!any) {
                continue;
            }
            for (int k = a[2]; k <= b[2]; ++k) {
                for (int j = a[1]; j <= b[1]; ++j) {
                    for (int i = a[0]; i <= b[0]; ++i) {
                        fn(spec.index(i, j, k), g);
                    }
                }
            }
        }
    };
    visit([&](std::size_t cell, std::size_t) { ++lists.offsets[cell + 1]; });
    for (std::size_t c = 0; c < cells; ++c) {
        lists.offsets[c + 1] += lists.offsets[c];
    }
    lists.items.resize(lists.offsets[cells]);
    std::vector<std::size_t> cursor(lists.offsets.begin(), lists.offsets.end() - 1);
    visit([&](std::size_t cell, std::size_t g) { lists.items[cursor[cell]++] = static_cast<std::uint32_t>(g); });
    return lists;
}

void validate_spec(const GridSpec &spec) {
    if (!(spec.voxel_size > 0.0) || !std::isfinite(spec.voxel_size) || !spec.origin.allFinite()) {
        throw InvalidInput("grid needs a finite origin and a positive voxel size");
    }
    for (const int d : spec.dims) {
        if (d <= 0) {
            throw InvalidInput("grid dimensions must be positive");
        }
    }
}

void validate_cutoff(double cutoff) {
    if (!(cutoff > 0.0)) {
        throw InvalidInput("cutoff must be positive (infinity disables it)");
    }
}

} // namespace

bool GridSpec::locate(const Vec3 &p, std::array<int, 3> &ijk) const {
    for (int a = 0; a < 3; ++a) {
        const double f = std::floor((p[a] - origin[a]) / voxel_size);
        if (!(f >= 0.0 && f < dims[a])) {
            return false;
        }
        ijk[a] = static_cast<int>(f);
    }
    return true;
}

VoxelGrid VoxelGrid::empty(const GridSpec &spec) {
    VoxelGrid g;
    g.spec = spec;
    g.occ_mass.assign(spec.voxel_count(), 0.0);
    g.labels.assign(spec.voxel_count(), kEmptyLabel);
    return g;
}

int TextBank::empty_index() const { return find("empty"); }

int TextBank::find(const std::string &name) const {
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].name == name) {
            return static_cast<int>(i);
        }
    }
    return -1;
}

void TextBank::validate() const {
    if (entries.size() >= kEmptyLabel) {
        throw InvalidInput("too many classes in the text bank");
    }
    for (const auto &e : entries) {
        if (e.embeddings.rows() == 0 || static_cast<std::size_t>(e.embeddings.rows()) != e.prompts.size()) {
            throw InvalidInput("class '" + e.name + "' needs one embedding per prompt");
        }
        if (static_cast<std::size_t>(e.embeddings.cols()) != feature_dim) {
            throw InvalidInput("class '" + e.name + "' has the wrong embedding width");
        }
        for (Eigen::Index r = 0; r < e.embeddings.rows(); ++r) {
            if (std::abs(e.embeddings.row(r).norm() - 1.0) > 1e-6) {
                throw InvalidInput("class '" + e.name + "' has a non-unit embedding");
            }
        }
    }
}

VecX TextBank::similarities(const VecX &f) const {
    if (static_cast<std::size_t>(f.size()) != feature_dim) {
        throw InvalidInput("feature width does not match the text bank");
    }
    VecX s(static_cast<Eigen::Index>(entries.size()));
    for (std::size_t c = 0; c < entries.size(); ++c) {
        const VecX dots = entries[c].embeddings * f;
        s[static_cast<Eigen::Index>(c)] = reduce == PromptReduce::Max ? dots.maxCoeff() : dots.mean();
    }
    return s;
}

VecX text_probs(const VecX &f, const TextBank &bank) {
    if (bank.entries.empty()) {
        throw InvalidInput("text bank is empty");
    }
    VecX s = bank.similarities(f);
    s.array() -= s.maxCoeff();
    s = s.array().exp();
    return s / s.sum();
}

VoxelGrid voxelize(const GaussianScene &scene, const TextBank &bank, const GridSpec &spec,
                   const VoxelizeOptions &options) {
    validate_spec(spec);
    validate_cutoff(options.cutoff);
    if (!(options.occupancy_threshold >= 0.0)) {
        throw InvalidInput("occupancy threshold must be non-negative");
    }
    if (!bank.entries.empty() && bank.feature_dim != scene.feature_dim) {
        throw InvalidInput("scene and text bank feature widths differ");
    }
    VoxelGrid grid = VoxelGrid::empty(spec);
    const std::size_t classes = bank.size();
    grid.class_count = classes;
    const std::size_t voxels = spec.voxel_count();
    if (options.keep_class_mass) {
        grid.class_mass.assign(voxels * classes, 0.0);
    }
    if (scene.gaussians.empty()) {
        return grid;
    }

    const bool exact = std::isinf(options.cutoff);
    const double cutoff_sq = options.cutoff * options.cutoff;
    const auto kernels = prepare(scene, exact ? 0.0 : options.cutoff);
    Eigen::MatrixXd probs(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(scene.size()));
    if (classes > 0) {
        parallel_for(scene.size(), [&](std::size_t b, std::size_t e) {
            for (std::size_t g = b; g < e; ++g) {
                probs.col(static_cast<Eigen::Index>(g)) = text_probs(scene.gaussians[g].feature, bank);
            }
        });
    }
    CandidateLists lists;
    if (!exact) {
        lists = build_candidates(kernels, spec, true);
    }
    const int empty_class = bank.empty_index();

    parallel_for(voxels, [&](std::size_t b, std::size_t e) {
        VecX vp(static_cast<Eigen::Index>(classes));
        for (std::size_t v = b; v < e; ++v) {
            const Vec3 x = spec.center(v);
            double vo = 0.0;
            vp.setZero();
            auto accumulate = [&](std::size_t g) {
                const double w = weight(kernels[g], x, cutoff_sq);
                if (w == 0.0) {
                    return;
                }
                vo += w * scene.gaussians[g].opacity;
                if (classes > 0) {
                    vp += w * probs.col(static_cast<Eigen::Index>(g));
                }
            };
            if (exact) {
                for (std::size_t g = 0; g < kernels.size(); ++g) {
                    accumulate(g);
                }
            } else {
                for (const auto g : lists.at(v)) {
                    accumulate(g);
                }
            }
            grid.occ_mass[v] = vo;
            if (options.keep_class_mass) {
                for (std::size_t c = 0; c < classes; ++c) {
                    grid.class_mass[v * classes + c] = vp[static_cast<Eigen::Index>(c)];
                }
            }
            if (vo >= options.occupancy_threshold && vo > 0.0) {
                if (classes == 0) {
                    grid.labels[v] = 0;
                    continue;
                }
                Eigen::Index best = 0;
                for (Eigen::Index c = 1; c < vp.size(); ++c) {
                    if (vp[c] > vp[best]) {
                        best = c;
                    }
                }
                if (best != empty_class) {
                    grid.labels[v] = static_cast<std::uint16_t>(best);
                }
            }
        }
    });
    return grid;
}

PointQuery query_points(const GaussianScene &scene, const std::vector<Vec3> &points, double cutoff) {
    validate_cutoff(cutoff);
    PointQuery out;
    out.occupancy.assign(points.size(), 0.0);
    out.features = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(points.size()),
                                         static_cast<Eigen::Index>(scene.feature_dim));
    if (scene.gaussians.empty() || points.empty()) {
        return out;
    }
    for (const auto &p : points) {
        if (!p.allFinite()) {
            throw InvalidInput("query point is not finite");
        }
    }
    const bool exact = std::isinf(cutoff);
    const double cutoff_sq = cutoff * cutoff;
    const auto kernels = prepare(scene, exact ? 0.0 : cutoff);

    // Coarse bucket grid over the query points.
    GridSpec buckets;
    CandidateLists lists;
    if (!exact) {
        Vec3 lo = points.front(), hi = points.front();
        for (const auto &p : points) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        const Vec3 extent = hi - lo;
        buckets.voxel_size = std::max({1.0, extent.maxCoeff() / 128.0});
        buckets.origin = lo;
        for (int a = 0; a < 3; ++a) {
            buckets.dims[a] = static_cast<int>(std::floor(extent[a] / buckets.voxel_size)) + 1;
        }
        lists = build_candidates(kernels, buckets, false);
    }

    parallel_for(points.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const Vec3 &p = points[i];
            auto accumulate = [&](std::size_t g) {
                const double w = weight(kernels[g], p, cutoff_sq);
                if (w == 0.0) {
                    return;
                }
                out.occupancy[i] += w * scene.gaussians[g].opacity;
                out.features.row(static_cast<Eigen::Index>(i)) += w * scene.gaussians[g].feature.transpose();
            };
            if (exact) {
                for (std::size_t g = 0; g < kernels.size(); ++g) {
                    accumulate(g);
                }
                continue;
            }
            std::array<int, 3> ijk{};
            for (int a = 0; a < 3; ++a) {
                ijk[a] = std::clamp(static_cast<int>(std::floor((p[a] - buckets.origin[a]) / buckets.voxel_size)), 0,
                                    buckets.dims[a] - 1);
            }
            for (const auto g : lists.at(buckets.index(ijk[0], ijk[1], ijk[2]))) {
                accumulate(g);
            }
        }
    });
    return out;
}

} // namespace fgs
