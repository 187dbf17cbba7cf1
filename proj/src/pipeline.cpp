// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#include "fgs/pipeline.hpp"

#include "fgs/error.hpp"
#include "fgs/io.hpp"
#include "fgs/metrics.hpp"
#include "fgs/mlp.hpp"
#include "fgs/parallel.hpp"
#include "fgs/rasterizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

namespace fgs {
namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

const std::set<std::string> kStageNames{"init", "refine", "densify", "voxelize", "eval"};

/// Re-raises the active fgs error with `stage` prepended, keeping its type.
[[noreturn]] void rethrow_with_stage(const std::string &stage) {
    const std::string prefix = "stage '" + stage + "': ";
    try {
        throw;
    } catch (const InsufficientPoints &e) {
        throw InsufficientPoints(prefix + e.what());
    } catch (const EmptyInput &e) {
        throw EmptyInput(prefix + e.what());
    } catch (const InvalidInput &e) {
        throw InvalidInput(prefix + e.what());
    } catch (const NumericalDegeneracy &e) {
        throw NumericalDegeneracy(prefix + e.what());
    } catch (const IoError &e) {
        throw IoError(prefix + e.what());
    }
}

std::vector<Vec3> positions(const GaussianScene &scene) {
    std::vector<Vec3> out;
    out.reserve(scene.size());
    for (const auto &g : scene.gaussians) {
        out.push_back(g.mean);
    }
    return out;
}

struct Models {
    DecodeHeads heads;
    AsaWeights asa;
};

Models make_models(const PipelineConfig &cfg, std::size_t feature_dim) {
    Models m;
    const int f = static_cast<int>(feature_dim);
    if (!cfg.weights_path.empty()) {
        const TensorFile file = TensorFile::load(cfg.weights_path);
        m.heads = DecodeHeads::load(file);
        m.asa = AsaWeights::present(file) ? AsaWeights::load(file)
                                          : AsaWeights::seeded(cfg.query_dim, cfg.heads, cfg.seed + 1);
    } else {
        m.heads = cfg.passthrough ? DecodeHeads::passthrough(cfg.query_dim, f, cfg.refine_scale, cfg.refine_opacity,
                                                             cfg.sample_count, cfg.sample_spread)
                                  : DecodeHeads::seeded(cfg.query_dim, f, cfg.seed, cfg.sample_count);
        m.asa = AsaWeights::seeded(cfg.query_dim, cfg.heads, cfg.seed + 1);
    }
    m.heads.validate(m.asa.dim(), f);
    return m;
}

double depth_abs_rel(const GaussianScene &scene, const std::vector<CameraView> &views, const RasterSettings &raster,
                     std::size_t &pixels) {
    double sum = 0.0;
    pixels = 0;
    for (const auto &v : views) {
        if (!v.ref_depth) {
            continue;
        }
        const RenderOutput r = render(scene, v, raster);
        for (std::size_t p = 0; p < r.pixel_count(); ++p) {
            if (r.valid[p] && v.ref_depth->valid[p]) {
                const double ref = v.ref_depth->depth.data[p];
                sum += std::abs(r.depth[p] - ref) / ref;
                ++pixels;
            }
        }
    }
    return pixels > 0 ? sum / static_cast<double>(pixels) : 0.0;
}

template <typename F>
double median_ms(int repeats, F &&fn) {
    std::vector<double> times;
    for (int i = 0; i < std::max(1, repeats); ++i) {
        const auto t0 = Clock::now();
        fn();
        times.push_back(ms_since(t0));
    }
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
}

} // namespace

void PipelineConfig::validate() const {
    for (const auto &s : stages) {
        if (!kStageNames.contains(s)) {
            throw InvalidInput("unknown pipeline stage '" + s + "'");
        }
    }
    densify.validate();
    if (query_dim <= 0 || heads <= 0 || query_dim % heads != 0) {
        throw InvalidInput("query width must be a positive multiple of the head count");
    }
    if (!std::isfinite(query_init)) {
        throw InvalidInput("query init must be finite");
    }
    if (sample_count <= 0) {
        throw InvalidInput("sample count must be positive");
    }
}

PipelineConfig pipeline_config_from_json(const json &j, PipelineConfig cfg) {
    try {
        if (j.contains("stages")) {
            cfg.stages = j.at("stages").get<std::vector<std::string>>();
        }
        cfg.query_dim = j.value("query_dim", cfg.query_dim);
        cfg.heads = j.value("heads", cfg.heads);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.query_init = j.value("query_init", cfg.query_init);
        cfg.weights_path = j.value("weights", cfg.weights_path);
        cfg.passthrough = j.value("passthrough", cfg.passthrough);
        cfg.refine_scale = j.value("refine_scale", cfg.refine_scale);
        cfg.refine_opacity = j.value("refine_opacity", cfg.refine_opacity);
        cfg.sample_count = j.value("sample_count", cfg.sample_count);
        cfg.sample_spread = j.value("sample_spread", cfg.sample_spread);
        if (j.contains("output_dir")) {
            cfg.output_dir = j.at("output_dir").get<std::string>();
        }
        if (j.contains("densify")) {
            const auto &d = j.at("densify");
            cfg.densify.gamma = d.value("gamma", cfg.densify.gamma);
            cfg.densify.base_count = d.value("base_count", cfg.densify.base_count);
            if (d.contains("layer_budgets")) {
                cfg.densify.layer_budgets = d.at("layer_budgets").get<std::vector<std::size_t>>();
            }
            cfg.densify.init_scale = d.value("init_scale", cfg.densify.init_scale);
            cfg.densify.init_opacity = d.value("init_opacity", cfg.densify.init_opacity);
            cfg.densify.init_feature = d.value("init_feature", cfg.densify.init_feature);
            const auto mode = d.value("select_mode", std::string("signed"));
            if (mode != "signed" && mode != "absolute") {
                throw InvalidInput("select_mode must be 'signed' or 'absolute'");
            }
            cfg.densify.select_mode = mode == "signed" ? SelectMode::Signed : SelectMode::Absolute;
        }
        if (j.contains("voxelize")) {
            const auto &v = j.at("voxelize");
            cfg.voxelize.occupancy_threshold = v.value("occupancy_threshold", cfg.voxelize.occupancy_threshold);
            if (v.contains("cutoff")) {
                cfg.voxelize.cutoff =
                    v.at("cutoff").is_null() ? VoxelizeOptions::exact() : v.at("cutoff").get<double>();
            }
        }
    } catch (const json::exception &e) {
        throw InvalidInput(std::string("bad pipeline config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

json pipeline_config_to_json(const PipelineConfig &cfg) {
    json j;
    j["stages"] = cfg.stages;
    j["query_dim"] = cfg.query_dim;
    j["heads"] = cfg.heads;
    j["seed"] = cfg.seed;
    j["query_init"] = cfg.query_init;
    j["weights"] = cfg.weights_path;
    j["passthrough"] = cfg.passthrough;
    j["refine_scale"] = cfg.refine_scale;
    j["refine_opacity"] = cfg.refine_opacity;
    j["sample_count"] = cfg.sample_count;
    j["sample_spread"] = cfg.sample_spread;
    j["densify"] = {{"gamma", cfg.densify.gamma},
                    {"base_count", cfg.densify.base_count},
                    {"layer_budgets", cfg.densify.layer_budgets},
                    {"init_scale", cfg.densify.init_scale},
                    {"init_opacity", cfg.densify.init_opacity},
                    {"init_feature", cfg.densify.init_feature},
                    {"select_mode", cfg.densify.select_mode == SelectMode::Signed ? "signed" : "absolute"}};
    j["voxelize"] = {{"occupancy_threshold", cfg.voxelize.occupancy_threshold},
                     {"cutoff", std::isinf(cfg.voxelize.cutoff) ? json(nullptr) : json(cfg.voxelize.cutoff)}};
    return j;
}

PipelineInputs inputs_from_synth(const SynthSpec &spec, const SynthScene &scene) {
    PipelineInputs in;
    in.views = scene.views;
    in.bank = scene.bank;
    in.grid = spec.grid;
    in.gt = scene.gt;
    in.gt_visible = scene.visible;
    in.lidar = lidar_scan(spec, scene);
    return in;
}

RetrievalScores retrieval_scores(const GaussianScene &scene, const TextBank &bank, const LidarScan &lidar) {
    const PointQuery pq = query_points(scene, lidar.points);
    RetrievalScores out;
    const int empty = bank.empty_index();
    std::vector<std::size_t> classes;
    for (std::size_t c = 0; c < bank.size(); ++c) {
        if (static_cast<int>(c) != empty) {
            classes.push_back(c);
            out.queries.push_back(bank.entries[c].name);
        }
    }
    const auto n = static_cast<Eigen::Index>(lidar.points.size());
    const auto q = static_cast<Eigen::Index>(classes.size());
    out.scores = Eigen::MatrixXd::Zero(n, q);
    out.positive.setZero(n, q);
    for (Eigen::Index i = 0; i < n; ++i) {
        const VecX f = pq.features.row(i).transpose();
        const double norm = f.norm();
        for (Eigen::Index k = 0; k < q; ++k) {
            const auto c = classes[static_cast<std::size_t>(k)];
            if (norm > 0.0) {
                out.scores(i, k) = (bank.entries[c].embeddings * f).maxCoeff() / norm;
            }
            out.positive(i, k) = lidar.labels[static_cast<std::size_t>(i)] == c ? 1 : 0;
        }
    }
    return out;
}

PipelineResult run_pipeline(const PipelineConfig &cfg, const PipelineInputs &inputs) {
    cfg.validate();
    PipelineResult result;
    json &report = result.report;
    report["config"] = pipeline_config_to_json(cfg);
    report["stages"] = json::array();
    report["layers"] = json::array();
    report["densify"] = json::array();

    std::optional<GaussianScene> scene = inputs.scene;
    Eigen::MatrixXd queries;
    std::optional<Models> models;
    std::optional<VoxelGrid> grid;
    const std::size_t feature_dim = !inputs.views.empty() && inputs.views.front().ref_feature
                                        ? static_cast<std::size_t>(inputs.views.front().ref_feature->channels)
                                        : inputs.bank.feature_dim;
    if (scene) {
        queries = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(scene->size()), cfg.query_dim, cfg.query_init);
    }
    auto need_scene = [&](const std::string &stage) {
        if (!scene) {
            throw InvalidInput("stage '" + stage + "' needs a scene; run init first");
        }
    };

    for (const auto &stage : cfg.stages) {
        json entry{{"stage", stage}};
        const auto t0 = Clock::now();
        try {
            if (stage == "init") {
                scene = base_init(inputs.views, cfg.densify, feature_dim);
                queries =
                    Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(scene->size()), cfg.query_dim, cfg.query_init);
                entry["count"] = scene->size();
            } else if (stage == "refine") {
                need_scene(stage);
                if (!models) {
                    models = make_models(cfg, scene->feature_dim);
                    if (models->asa.dim() != cfg.query_dim) {
                        queries = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(scene->size()), models->asa.dim(),
                                                            cfg.query_init);
                    }
                }
                const std::size_t layer = scene->layer_count() - 1;
                const std::size_t x_prev = scene->layer_begin(layer);
                const auto ta = Clock::now();
                queries = asa_forward(queries, positions(*scene), models->asa, build_mask(x_prev, scene->size()));
                const double asa_ms = ms_since(ta);
                const auto tr = Clock::now();
                const std::size_t updated = refine_range(*scene, 0, scene->size(), queries, inputs.views, models->heads);
                const double refine_ms = ms_since(tr);
                entry["layer"] = layer;
                entry["count"] = scene->size();
                entry["updated"] = updated;
                report["layers"].push_back({{"layer", layer},
                                            {"count", scene->size()},
                                            {"inherited", x_prev},
                                            {"updated", updated},
                                            {"asa_ms", asa_ms},
                                            {"refine_ms", refine_ms},
                                            {"layer_ms", asa_ms + refine_ms}});
            } else if (stage == "densify") {
                need_scene(stage);
                DensifyReport dr;
                const std::size_t layer = scene->layer_count();
                scene = densify_layer(*scene, inputs.views, cfg.densify, layer, &dr);
                const auto old_rows = queries.rows();
                queries.conservativeResize(static_cast<Eigen::Index>(scene->size()), Eigen::NoChange);
                queries.bottomRows(queries.rows() - old_rows).setConstant(cfg.query_init);
                entry["layer"] = layer;
                entry["added_count"] = dr.added_count;
                entry["count"] = scene->size();
                report["densify"].push_back({{"layer", layer},
                                             {"added_count", dr.added_count},
                                             {"selected_pixels_per_view", dr.selected_pixels_per_view},
                                             {"residual_before", dr.residual_before},
                                             {"residual_after", dr.residual_after},
                                             {"residual_pixels_before", dr.residual_pixels_before},
                                             {"residual_pixels_after", dr.residual_pixels_after}});
            } else if (stage == "voxelize") {
                need_scene(stage);
                grid = voxelize(*scene, inputs.bank, inputs.grid, cfg.voxelize);
                entry["occupied"] = static_cast<std::size_t>(
                    std::count_if(grid->labels.begin(), grid->labels.end(), [](auto l) { return l != kEmptyLabel; }));
            } else if (stage == "eval") {
                need_scene(stage);
                json metrics;
                std::size_t pixels = 0;
                metrics["depth_abs_rel"] = depth_abs_rel(*scene, inputs.views, cfg.densify.raster, pixels);
                metrics["depth_pixels"] = pixels;
                if (grid && inputs.gt) {
                    std::set<std::uint16_t> ignore;
                    const int empty = inputs.bank.empty_index();
                    if (empty >= 0) {
                        ignore.insert(static_cast<std::uint16_t>(empty));
                    }
                    const std::size_t classes = inputs.gt->class_count > 0 ? inputs.gt->class_count : 0;
                    const auto all = eval_miou(*grid, *inputs.gt, classes, ignore);
                    metrics["miou_all"] = all.miou;
                    if (inputs.gt_visible) {
                        const auto vis = eval_miou(*grid, *inputs.gt, classes, ignore, &*inputs.gt_visible);
                        metrics["miou"] = vis.miou;
                        json per_class = json::array();
                        for (const auto &v : vis.iou) {
                            per_class.push_back(v ? json(*v) : json(nullptr));
                        }
                        metrics["iou_per_class"] = per_class;
                    } else {
                        metrics["miou"] = all.miou;
                    }
                }
                if (inputs.lidar && !inputs.lidar->points.empty()) {
                    const auto rs = retrieval_scores(*scene, inputs.bank, *inputs.lidar);
                    const auto mr = eval_map(rs.scores, rs.positive, &inputs.lidar->visible);
                    metrics["map"] = mr.map;
                    metrics["map_visible"] = mr.map_visible;
                    metrics["lidar_points"] = inputs.lidar->points.size();
                    metrics["warnings"] = mr.warnings;
                }
                report["metrics"] = metrics;
            }
        } catch (const Error &) {
            rethrow_with_stage(stage);
        }
        entry["ms"] = ms_since(t0);
        report["stages"].push_back(entry);
    }

    if (scene) {
        result.scene = std::move(*scene);
        report["gaussian_count"] = result.scene.size();
        report["layer_offsets"] = result.scene.layer_offsets;
    }
    result.grid = std::move(grid);

    if (!cfg.output_dir.empty()) {
        std::filesystem::create_directories(cfg.output_dir);
        if (!result.scene.gaussians.empty() || !result.scene.layer_offsets.empty()) {
            io::write_scene(cfg.output_dir / "scene.fgs", result.scene);
        }
        if (result.grid) {
            io::write_grid(cfg.output_dir / "grid.voxg", *result.grid);
        }
        std::ofstream out(cfg.output_dir / "report.json");
        if (!out) {
            throw IoError("cannot write " + (cfg.output_dir / "report.json").string());
        }
        out << report.dump(2) << "\n";
    }
    return result;
}

json bench(const BenchConfig &cfg) {
    json out;
    out["threads"] = num_threads();

    RandomSceneSpec rs;
    rs.count = cfg.gaussians;
    rs.feature_dim = cfg.feature_dim;
    rs.width = cfg.width;
    rs.height = cfg.height;
    rs.seed = cfg.seed;
    const auto [scene, cam] = random_scene(rs);
    const double tiled = median_ms(cfg.repeats, [&] { (void)render(scene, cam); });
    const double oracle = median_ms(cfg.oracle_repeats, [&] { (void)render_oracle(scene, cam); });
    out["render"] = {{"gaussians", cfg.gaussians},
                     {"width", cfg.width},
                     {"height", cfg.height},
                     {"tiled_ms", tiled},
                     {"oracle_ms", oracle},
                     {"speedup", oracle / tiled}};

    std::mt19937_64 rng(cfg.seed + 7);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    GridSpec grid;
    grid.voxel_size = 0.4;
    grid.dims = {cfg.voxel_dims, cfg.voxel_dims, cfg.voxel_dims};
    const double extent = cfg.voxel_dims * grid.voxel_size;
    GaussianScene vs;
    vs.feature_dim = 4;
    for (std::size_t i = 0; i < cfg.voxel_gaussians; ++i) {
        FeatureGaussian g;
        g.mean = Vec3(u01(rng), u01(rng), u01(rng)) * extent;
        g.scale = Vec3(0.2 + u01(rng), 0.2 + u01(rng), 0.2 + u01(rng));
        g.opacity = u01(rng);
        g.feature = VecX::Zero(4);
        g.feature[static_cast<Eigen::Index>(i % 4)] = 1.0;
        vs.gaussians.push_back(g);
    }
    vs.layer_offsets = {vs.size()};
    TextBank bank;
    bank.feature_dim = 4;
    for (int c = 0; c < 4; ++c) {
        TextBank::Entry e;
        e.name = "c" + std::to_string(c);
        e.prompts = {e.name};
        e.embeddings = Eigen::MatrixXd::Zero(1, 4);
        e.embeddings(0, c) = 1.0;
        bank.entries.push_back(e);
    }
    VoxelizeOptions exact;
    exact.cutoff = VoxelizeOptions::exact();
    const double vx_exact = median_ms(cfg.repeats, [&] { (void)voxelize(vs, bank, grid, exact); });
    const double vx_cut = median_ms(cfg.repeats, [&] { (void)voxelize(vs, bank, grid); });
    out["voxelize"] = {{"gaussians", cfg.voxel_gaussians},
                       {"voxels", grid.voxel_count()},
                       {"exact_ms", vx_exact},
                       {"cutoff_ms", vx_cut}};

    std::vector<Vec3> pts;
    pts.reserve(cfg.fps_points);
    for (std::size_t i = 0; i < cfg.fps_points; ++i) {
        pts.emplace_back(u01(rng) * 50.0, u01(rng) * 50.0, u01(rng) * 5.0);
    }
    const double fps_ms = median_ms(cfg.repeats, [&] { (void)fps(pts, std::min(cfg.fps_k, pts.size())); });
    out["fps"] = {{"points", cfg.fps_points}, {"k", cfg.fps_k}, {"ms", fps_ms}};
    return out;
}

} // namespace fgs
