// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: one subcommand per stage plus the full pipeline
// and the benchmark.

#include "fgs/attention.hpp"
#include "fgs/densify.hpp"
#include "fgs/error.hpp"
#include "fgs/io.hpp"
#include "fgs/losses.hpp"
#include "fgs/metrics.hpp"
#include "fgs/mlp.hpp"
#include "fgs/parallel.hpp"
#include "fgs/pipeline.hpp"
#include "fgs/rasterizer.hpp"
#include "fgs/sampling.hpp"
#include "fgs/synth.hpp"
#include "fgs/voxelize.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

bool g_quiet = false;

void note(const std::string &msg) {
    if (!g_quiet) {
        std::cerr << msg << "\n";
    }
}

std::string read_text(const fs::path &p) {
    std::ifstream in(p);
    if (!in) {
        throw fgs::IoError("cannot open " + p.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const fs::path &p) {
    try {
        return json::parse(read_text(p));
    } catch (const json::exception &e) {
        throw fgs::InvalidInput(p.string() + ": " + e.what());
    }
}

void write_json(const fs::path &p, const json &j) {
    if (p.has_parent_path()) {
        fs::create_directories(p.parent_path());
    }
    std::ofstream out(p);
    if (!out) {
        throw fgs::IoError("cannot write " + p.string());
    }
    out << j.dump(2) << "\n";
}

/// Prints JSON on stdout or writes it when a path is given.
void emit(const json &j, const std::string &path) {
    if (path.empty()) {
        std::cout << j.dump(2) << "\n";
    } else {
        write_json(path, j);
    }
}

fgs::GridSpec parse_grid(const std::string &text) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        v.push_back(std::stod(item));
    }
    if (v.size() != 7) {
        throw fgs::InvalidInput("grid must be ox,oy,oz,voxel_size,nx,ny,nz");
    }
    fgs::GridSpec g;
    g.origin = fgs::Vec3(v[0], v[1], v[2]);
    g.voxel_size = v[3];
    g.dims = {static_cast<int>(v[4]), static_cast<int>(v[5]), static_cast<int>(v[6])};
    return g;
}

std::vector<std::uint8_t> read_mask(const fs::path &p) {
    const fgs::Plane plane = fgs::io::read_plane(p);
    std::vector<std::uint8_t> out(plane.data.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = plane.data[i] != 0.0f ? 1 : 0;
    }
    return out;
}

void write_mask(const fs::path &p, const std::vector<std::uint8_t> &mask) {
    fgs::Plane plane(1, static_cast<int>(mask.size()), 1);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        plane.data[i] = mask[i];
    }
    fgs::io::write_plane(p, plane);
}

json lidar_labels_json(const fgs::LidarScan &scan) {
    return {{"labels", scan.labels}, {"visible", scan.visible}};
}

fgs::LidarScan read_lidar(const fs::path &points, const fs::path &labels) {
    fgs::LidarScan scan;
    scan.points = fgs::io::read_points(points);
    const json j = read_json(labels);
    scan.labels = j.at("labels").get<std::vector<std::uint16_t>>();
    scan.visible = j.contains("visible") ? j.at("visible").get<std::vector<std::uint8_t>>()
                                         : std::vector<std::uint8_t>(scan.points.size(), 1);
    if (scan.labels.size() != scan.points.size() || scan.visible.size() != scan.points.size()) {
        throw fgs::InvalidInput("label file does not match the point count");
    }
    return scan;
}

fgs::DecodeHeads load_heads(const std::string &weights, bool passthrough, int query_dim, int feature_dim, double scale,
                            double opacity, std::uint64_t seed) {
    if (!weights.empty()) {
        return fgs::DecodeHeads::load(fgs::TensorFile::load(weights));
    }
    return passthrough ? fgs::DecodeHeads::passthrough(query_dim, feature_dim, scale, opacity)
                       : fgs::DecodeHeads::seeded(query_dim, feature_dim, seed);
}

std::vector<fgs::Vec3> means(const fgs::GaussianScene &s) {
    std::vector<fgs::Vec3> out;
    for (const auto &g : s.gaussians) {
        out.push_back(g.mean);
    }
    return out;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"fgs: forward engine for text-feature Gaussian scenes"};
    app.require_subcommand(1);
    app.fallthrough();
    std::uint64_t seed = 0;
    int threads = 0;
    app.add_option("--seed", seed, "Random seed")->capture_default_str();
    app.add_option("--threads", threads, "Worker threads (default: FGS_THREADS or hardware)");
    app.add_flag("--quiet", g_quiet, "Suppress progress messages");

    // synth
    auto *synth = app.add_subcommand("synth", "Generate a synthetic scene, rig, planes and ground truth");
    std::string synth_spec, synth_out;
    synth->add_option("--spec", synth_spec, "Synth spec JSON (or {\"preset\": \"benchmark\" | \"street\" | \"missing_wall\"})")->required();
    synth->add_option("--out", synth_out, "Output directory")->required();

    // init
    auto *init = app.add_subcommand("init", "Base layer from reference depth via FPS");
    std::string init_rig, init_out;
    std::size_t base_count = 4000;
    init->add_option("--rig", init_rig)->required();
    init->add_option("--out", init_out)->required();
    init->add_option("--base-count", base_count)->capture_default_str();

    // densify
    auto *dens = app.add_subcommand("densify", "Add one progressive layer");
    std::string dens_scene, dens_rig, dens_out, dens_mode = "signed";
    double gamma = 0.2;
    std::size_t budget = 1000;
    dens->add_option("--scene", dens_scene)->required();
    dens->add_option("--rig", dens_rig)->required();
    dens->add_option("--out", dens_out)->required();
    dens->add_option("--gamma", gamma)->capture_default_str();
    dens->add_option("--budget", budget)->capture_default_str();
    dens->add_option("--mode", dens_mode, "signed | absolute")->capture_default_str();

    // refine
    auto *ref = app.add_subcommand("refine", "Attention + feature sampling update of every Gaussian");
    std::string ref_scene, ref_rig, ref_out, ref_weights;
    bool ref_seeded = false;
    int ref_dim = 64, ref_heads = 8;
    double ref_scale = 0.15, ref_opacity = 0.6;
    ref->add_option("--scene", ref_scene)->required();
    ref->add_option("--rig", ref_rig)->required();
    ref->add_option("--out", ref_out)->required();
    ref->add_option("--weights", ref_weights, "HEAD weight file");
    ref->add_flag("--seeded", ref_seeded, "Seeded random heads instead of pass-through heads");
    ref->add_option("--query-dim", ref_dim)->capture_default_str();
    ref->add_option("--heads", ref_heads)->capture_default_str();
    ref->add_option("--scale", ref_scale)->capture_default_str();
    ref->add_option("--opacity", ref_opacity)->capture_default_str();

    // render
    auto *rend = app.add_subcommand("render", "Render depth and feature planes of one view");
    std::string rend_scene, rend_rig, rend_out;
    std::size_t rend_view = 0;
    bool rend_oracle = false;
    rend->add_option("--scene", rend_scene)->required();
    rend->add_option("--rig", rend_rig)->required();
    rend->add_option("--view", rend_view)->capture_default_str();
    rend->add_option("--out", rend_out, "Output prefix")->required();
    rend->add_flag("--oracle", rend_oracle, "Use the per-pixel reference renderer");

    // voxelize
    auto *vox = app.add_subcommand("voxelize", "Gaussian-to-voxel occupancy and semantics");
    std::string vox_scene, vox_bank, vox_grid, vox_grid_from, vox_out;
    double tau = 0.1, cutoff = 3.0;
    bool vox_mean = false;
    vox->add_option("--scene", vox_scene)->required();
    vox->add_option("--bank", vox_bank)->required();
    vox->add_option("--grid", vox_grid, "ox,oy,oz,voxel_size,nx,ny,nz");
    vox->add_option("--grid-from", vox_grid_from, "Copy the grid layout of a VOXG file");
    vox->add_option("--tau", tau)->capture_default_str();
    vox->add_option("--cutoff", cutoff, "Mahalanobis cutoff; inf disables it")->capture_default_str();
    vox->add_flag("--mean-prompts", vox_mean, "Average prompt similarities instead of taking the max");
    vox->add_option("--out", vox_out)->required();

    // retrieve
    auto *ret = app.add_subcommand("retrieve", "Per-point occupancy, features and class scores");
    std::string ret_scene, ret_bank, ret_points, ret_out;
    ret->add_option("--scene", ret_scene)->required();
    ret->add_option("--bank", ret_bank)->required();
    ret->add_option("--points", ret_points)->required();
    ret->add_option("--out", ret_out, "JSON output (stdout if omitted)");

    // loss
    auto *loss = app.add_subcommand("loss", "Evaluate every loss term of a scene against a rig");
    std::string loss_scene, loss_rig;
    fgs::LossWeights lw;
    loss->add_option("--scene", loss_scene)->required();
    loss->add_option("--rig", loss_rig)->required();
    loss->add_option("--lambda-silog", lw.lambda_silog)->capture_default_str();
    loss->add_option("--lambda-temp", lw.lambda_temp)->capture_default_str();
    loss->add_option("--lambda-mse", lw.lambda_mse)->capture_default_str();
    loss->add_option("--lambda-depth", lw.lambda_depth)->capture_default_str();
    loss->add_option("--lambda-feat", lw.lambda_feat)->capture_default_str();

    // eval-miou
    auto *emiou = app.add_subcommand("eval-miou", "Semantic IoU between two VOXG grids");
    std::string em_pred, em_gt, em_visible;
    std::vector<int> em_ignore;
    std::size_t em_classes = 0;
    emiou->add_option("--pred", em_pred)->required();
    emiou->add_option("--gt", em_gt)->required();
    emiou->add_option("--visible", em_visible, "PLNE visibility mask");
    emiou->add_option("--ignore", em_ignore, "Class ids to skip");
    emiou->add_option("--classes", em_classes, "Class count (default: inferred)");

    // eval-map
    auto *emap = app.add_subcommand("eval-map", "Retrieval mAP from a retrieve output and point labels");
    std::string map_scores, map_labels;
    emap->add_option("--scores", map_scores)->required();
    emap->add_option("--labels", map_labels, "JSON {labels: [...], visible: [...]}")->required();

    // bench
    auto *bch = app.add_subcommand("bench", "Timing of render, voxelize and FPS");
    fgs::BenchConfig bc;
    std::string bench_out;
    bch->add_option("--gaussians", bc.gaussians)->capture_default_str();
    bch->add_option("--width", bc.width)->capture_default_str();
    bch->add_option("--height", bc.height)->capture_default_str();
    bch->add_option("--repeats", bc.repeats)->capture_default_str();
    bch->add_option("--oracle-repeats", bc.oracle_repeats)->capture_default_str();
    bch->add_option("--out", bench_out);

    // pipeline
    auto *pipe = app.add_subcommand("pipeline", "Run the full stage sequence");
    std::string pipe_config, pipe_synth, pipe_rig, pipe_bank, pipe_gt, pipe_visible, pipe_points, pipe_labels, pipe_out;
    double pose_noise = 0.0;
    pipe->add_option("--config", pipe_config, "Pipeline config JSON");
    pipe->add_option("--synth", pipe_synth, "Generate inputs from this synth spec");
    pipe->add_option("--rig", pipe_rig);
    pipe->add_option("--bank", pipe_bank);
    pipe->add_option("--gt", pipe_gt, "Ground-truth VOXG (also fixes the grid layout)");
    pipe->add_option("--visible", pipe_visible, "PLNE voxel visibility mask");
    pipe->add_option("--points", pipe_points);
    pipe->add_option("--labels", pipe_labels);
    pipe->add_option("--pose-noise", pose_noise, "Std-dev (m) of camera translation noise")->capture_default_str();
    pipe->add_option("--out", pipe_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (threads > 0) {
            fgs::set_num_threads(static_cast<std::size_t>(threads));
        }

        if (*synth) {
            fgs::SynthSpec spec = fgs::synth_spec_from_json(read_text(synth_spec));
            if (app.get_option("--seed")->count() > 0) {
                spec.seed = seed;
            }
            const fgs::SynthScene sc = fgs::gen_scene(spec);
            const fs::path out(synth_out);
            fs::create_directories(out);
            fgs::io::write_scene(out / "scene.fgs", sc.gaussians);
            fgs::io::write_rig(out / "rig.json", sc.views);
            fgs::io::write_grid(out / "gt.voxg", sc.gt);
            write_mask(out / "gt_visible.plne", sc.visible);
            fgs::io::write_bank(out / "bank.json", sc.bank);
            const fgs::LidarScan scan = fgs::lidar_scan(spec, sc);
            fgs::io::write_points(out / "lidar.pnts", scan.points);
            write_json(out / "lidar_labels.json", lidar_labels_json(scan));
            std::ofstream(out / "spec.json") << fgs::synth_spec_to_json(spec) << "\n";
            note("wrote " + std::to_string(sc.views.size()) + " views, " + std::to_string(sc.gaussians.size()) +
                 " gaussians, " + std::to_string(scan.points.size()) + " lidar points to " + out.string());
        } else if (*init) {
            fgs::DensifyConfig cfg;
            cfg.base_count = base_count;
            const auto views = fgs::io::read_rig(init_rig);
            std::size_t f = views.empty() || !views.front().ref_feature
                                ? 16
                                : static_cast<std::size_t>(views.front().ref_feature->channels);
            const auto scene = fgs::base_init(views, cfg, f);
            fgs::io::write_scene(init_out, scene);
            note("base layer: " + std::to_string(scene.size()) + " gaussians");
        } else if (*dens) {
            fgs::DensifyConfig cfg;
            cfg.gamma = gamma;
            if (dens_mode != "signed" && dens_mode != "absolute") {
                throw fgs::InvalidInput("--mode must be signed or absolute");
            }
            cfg.select_mode = dens_mode == "signed" ? fgs::SelectMode::Signed : fgs::SelectMode::Absolute;
            const auto scene = fgs::io::read_scene(dens_scene);
            cfg.layer_budgets.assign(std::max<std::size_t>(1, scene.layer_count()), budget);
            const auto views = fgs::io::read_rig(dens_rig);
            fgs::DensifyReport rep;
            const auto out = fgs::densify_layer(scene, views, cfg, scene.layer_count(), &rep);
            fgs::io::write_scene(dens_out, out);
            emit({{"added_count", rep.added_count},
                  {"count", out.size()},
                  {"selected_pixels_per_view", rep.selected_pixels_per_view},
                  {"residual_before", rep.residual_before},
                  {"residual_after", rep.residual_after}},
                 "");
        } else if (*ref) {
            auto scene = fgs::io::read_scene(ref_scene);
            const auto views = fgs::io::read_rig(ref_rig);
            const auto heads = load_heads(ref_weights, !ref_seeded, ref_dim, static_cast<int>(scene.feature_dim),
                                          ref_scale, ref_opacity, seed);
            fgs::AsaWeights asa;
            if (!ref_weights.empty() && fgs::AsaWeights::present(fgs::TensorFile::load(ref_weights))) {
                asa = fgs::AsaWeights::load(fgs::TensorFile::load(ref_weights));
            } else {
                asa = fgs::AsaWeights::seeded(ref_dim, ref_heads, seed + 1);
            }
            const std::size_t x_prev = scene.layer_begin(scene.layer_count() - 1);
            const Eigen::MatrixXd q0 = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(scene.size()), asa.dim());
            const Eigen::MatrixXd q = fgs::asa_forward(q0, means(scene), asa, fgs::build_mask(x_prev, scene.size()));
            const std::size_t updated = fgs::refine_range(scene, 0, scene.size(), q, views, heads);
            fgs::io::write_scene(ref_out, scene);
            emit({{"count", scene.size()}, {"updated", updated}}, "");
        } else if (*rend) {
            const auto scene = fgs::io::read_scene(rend_scene);
            const auto views = fgs::io::read_rig(rend_rig);
            if (rend_view >= views.size()) {
                throw fgs::InvalidInput("view index out of range");
            }
            const auto &cam = views[rend_view];
            const fgs::RenderOutput out = rend_oracle ? fgs::render_oracle(scene, cam) : fgs::render(scene, cam);
            fgs::io::write_plane(rend_out + "_depth.plne", fgs::io::depth_plane(out));
            fgs::io::write_plane(rend_out + "_feature.plne", fgs::io::feature_plane(out));
            fgs::io::write_depth_pgm(rend_out + "_depth.pgm", out.depth, out.valid, out.width, out.height);
            fgs::io::write_depth_ppm(rend_out + "_depth.ppm", out.depth, out.valid, out.width, out.height);
            note("rendered view " + std::to_string(rend_view));
        } else if (*vox) {
            const auto scene = fgs::io::read_scene(vox_scene);
            auto bank = fgs::io::read_bank(vox_bank);
            if (vox_mean) {
                bank.reduce = fgs::TextBank::PromptReduce::Mean;
            }
            fgs::GridSpec spec;
            if (!vox_grid_from.empty()) {
                spec = fgs::io::read_grid(vox_grid_from).spec;
            } else if (!vox_grid.empty()) {
                spec = parse_grid(vox_grid);
            } else {
                throw fgs::InvalidInput("voxelize needs --grid or --grid-from");
            }
            fgs::VoxelizeOptions opt;
            opt.occupancy_threshold = tau;
            opt.cutoff = std::isinf(cutoff) ? fgs::VoxelizeOptions::exact() : cutoff;
            const auto grid = fgs::voxelize(scene, bank, spec, opt);
            fgs::io::write_grid(vox_out, grid);
            std::size_t occ = 0;
            for (std::size_t v = 0; v < grid.labels.size(); ++v) {
                occ += grid.occupied(v) ? 1 : 0;
            }
            note("occupied voxels: " + std::to_string(occ) + " / " + std::to_string(grid.labels.size()));
        } else if (*ret) {
            const auto scene = fgs::io::read_scene(ret_scene);
            const auto bank = fgs::io::read_bank(ret_bank);
            fgs::LidarScan scan;
            scan.points = fgs::io::read_points(ret_points);
            scan.labels.assign(scan.points.size(), fgs::kEmptyLabel);
            scan.visible.assign(scan.points.size(), 1);
            const auto pq = fgs::query_points(scene, scan.points);
            const auto rs = fgs::retrieval_scores(scene, bank, scan);
            json j;
            j["queries"] = rs.queries;
            j["occupancy"] = pq.occupancy;
            j["scores"] = json::array();
            for (Eigen::Index i = 0; i < rs.scores.rows(); ++i) {
                std::vector<double> row;
                for (Eigen::Index k = 0; k < rs.scores.cols(); ++k) {
                    row.push_back(rs.scores(i, k));
                }
                j["scores"].push_back(row);
            }
            std::vector<int> ids;
            for (const auto &name : rs.queries) {
                ids.push_back(bank.find(name));
            }
            j["query_class_ids"] = ids;
            emit(j, ret_out);
        } else if (*loss) {
            const auto scene = fgs::io::read_scene(loss_scene);
            const auto views = fgs::io::read_rig(loss_rig);
            std::vector<double> ref_d, ren_d;
            std::vector<std::uint8_t> mask_d;
            std::vector<float> ref_f, ren_f;
            std::vector<std::uint8_t> mask_f;
            std::vector<double> temporal;
            std::vector<fgs::RenderOutput> renders;
            for (const auto &v : views) {
                renders.push_back(fgs::render(scene, v));
            }
            for (std::size_t i = 0; i < views.size(); ++i) {
                const auto &v = views[i];
                const auto &r = renders[i];
                if (v.ref_depth) {
                    for (std::size_t p = 0; p < r.pixel_count(); ++p) {
                        ref_d.push_back(v.ref_depth->depth.data[p]);
                        ren_d.push_back(r.depth[p]);
                        mask_d.push_back(v.ref_depth->valid[p] && r.valid[p]);
                    }
                }
                if (v.ref_feature && static_cast<std::size_t>(v.ref_feature->channels) == scene.feature_dim) {
                    ref_f.insert(ref_f.end(), v.ref_feature->data.begin(), v.ref_feature->data.end());
                    ren_f.insert(ren_f.end(), r.feature.begin(), r.feature.end());
                    mask_f.insert(mask_f.end(), r.valid.begin(), r.valid.end());
                }
                if (v.photo) {
                    std::vector<fgs::PhotoSource> sources;
                    for (const auto &s : views) {
                        if (s.timestamp != v.timestamp && s.photo) {
                            sources.push_back({&*s.photo, s.intrinsics, s.camera_to_ego.inverse() * v.camera_to_ego});
                        }
                    }
                    if (!sources.empty()) {
                        try {
                            temporal.push_back(
                                fgs::photometric_temporal(*v.photo, v.intrinsics, r.depth, r.valid, sources));
                        } catch (const fgs::EmptyInput &) {
                        }
                    }
                }
            }
            fgs::LossComponents c;
            c.l1 = fgs::l1_depth(ref_d, ren_d, mask_d);
            c.silog = fgs::silog(ref_d, ren_d, mask_d);
            if (!temporal.empty()) {
                c.temporal = fgs::pairwise_sum(temporal) / static_cast<double>(temporal.size());
            }
            if (!mask_f.empty()) {
                const auto fl = fgs::feat_loss(ref_f, ren_f, scene.feature_dim, mask_f);
                c.cos = fl.cos_term;
                c.mse = fl.mse_term;
            }
            const auto b = fgs::total_loss(c, lw);
            emit({{"components",
                   {{"l1", c.l1}, {"silog", c.silog}, {"temporal", c.temporal}, {"cos", c.cos}, {"mse", c.mse}}},
                  {"temporal_views", temporal.size()},
                  {"terms", b.terms},
                  {"depth", b.depth},
                  {"feature", b.feature},
                  {"total", b.total}},
                 "");
        } else if (*emiou) {
            const auto pred = fgs::io::read_grid(em_pred);
            const auto gt = fgs::io::read_grid(em_gt);
            std::set<std::uint16_t> ignore;
            for (const int i : em_ignore) {
                ignore.insert(static_cast<std::uint16_t>(i));
            }
            std::vector<std::uint8_t> vis;
            if (!em_visible.empty()) {
                vis = read_mask(em_visible);
            }
            const auto r = fgs::eval_miou(pred, gt, em_classes, ignore, em_visible.empty() ? nullptr : &vis);
            json per = json::array();
            for (const auto &v : r.iou) {
                per.push_back(v ? json(*v) : json(nullptr));
            }
            emit({{"miou", r.miou}, {"evaluated_classes", r.evaluated}, {"iou", per}}, "");
        } else if (*emap) {
            const json s = read_json(map_scores);
            const json l = read_json(map_labels);
            const auto rows = s.at("scores");
            const auto ids = s.at("query_class_ids").get<std::vector<int>>();
            const auto labels = l.at("labels").get<std::vector<int>>();
            if (labels.size() != rows.size()) {
                throw fgs::InvalidInput("label count does not match the score rows");
            }
            Eigen::MatrixXd scores(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ids.size()));
            Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> pos(scores.rows(), scores.cols());
            for (Eigen::Index i = 0; i < scores.rows(); ++i) {
                for (Eigen::Index k = 0; k < scores.cols(); ++k) {
                    scores(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
                    pos(i, k) = labels[static_cast<std::size_t>(i)] == ids[static_cast<std::size_t>(k)] ? 1 : 0;
                }
            }
            std::vector<std::uint8_t> vis;
            if (l.contains("visible")) {
                vis = l.at("visible").get<std::vector<std::uint8_t>>();
            }
            const auto r = fgs::eval_map(scores, pos, vis.empty() ? nullptr : &vis);
            for (const auto &w : r.warnings) {
                note("warning: " + w);
            }
            json aps = json::array();
            for (const auto &a : r.ap) {
                aps.push_back(a ? json(*a) : json(nullptr));
            }
            emit({{"map", r.map}, {"map_visible", r.map_visible}, {"ap", aps}}, "");
        } else if (*bch) {
            bc.seed = seed;
            emit(fgs::bench(bc), bench_out);
        } else if (*pipe) {
            fgs::PipelineConfig cfg;
            if (!pipe_config.empty()) {
                cfg = fgs::pipeline_config_from_json(read_json(pipe_config));
            }
            if (app.get_option("--seed")->count() > 0) {
                cfg.seed = seed;
            }
            cfg.output_dir = pipe_out;
            fgs::PipelineInputs inputs;
            if (!pipe_synth.empty()) {
                fgs::SynthSpec spec = fgs::synth_spec_from_json(read_text(pipe_synth));
                const auto sc = fgs::gen_scene(spec);
                inputs = fgs::inputs_from_synth(spec, sc);
            } else {
                if (pipe_rig.empty() || pipe_bank.empty()) {
                    throw fgs::InvalidInput("pipeline needs --synth or both --rig and --bank");
                }
                inputs.views = fgs::io::read_rig(pipe_rig);
                inputs.bank = fgs::io::read_bank(pipe_bank);
                if (!pipe_gt.empty()) {
                    inputs.gt = fgs::io::read_grid(pipe_gt);
                    inputs.grid = inputs.gt->spec;
                    inputs.gt->class_count = inputs.bank.size() - (inputs.bank.empty_index() >= 0 ? 1 : 0);
                } else {
                    throw fgs::InvalidInput("pipeline needs --gt to fix the voxel grid");
                }
                if (!pipe_visible.empty()) {
                    inputs.gt_visible = read_mask(pipe_visible);
                }
                if (!pipe_points.empty()) {
                    if (pipe_labels.empty()) {
                        throw fgs::InvalidInput("--points needs --labels");
                    }
                    inputs.lidar = read_lidar(pipe_points, pipe_labels);
                }
            }
            if (pose_noise > 0.0) {
                inputs.views = fgs::perturb_poses(inputs.views, pose_noise, cfg.seed + 3);
            }
            const auto result = fgs::run_pipeline(cfg, inputs);
            if (!g_quiet) {
                std::cout << result.report.dump(2) << "\n";
            }
        }
    } catch (const fgs::IoError &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const fgs::NumericalDegeneracy &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const fgs::InvalidInput &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const fgs::Error &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::filesystem::filesystem_error &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
