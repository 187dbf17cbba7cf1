// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#include "fgs/error.hpp"
#include "fgs/io.hpp"
#include "fgs/metrics.hpp"
#include "fgs/parallel.hpp"
#include "fgs/pipeline.hpp"
#include "fgs/rasterizer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fgs;
namespace fs = std::filesystem;

namespace {

PipelineConfig small_config() {
    PipelineConfig cfg;
    cfg.densify.base_count = 600;
    cfg.densify.layer_budgets = {150, 150};
    cfg.query_dim = 32;
    cfg.heads = 4;
    return cfg;
}

const PipelineInputs &small_inputs() {
    static const PipelineInputs in = [] {
        const auto spec = benchmark_spec(0, 96, 54);
        return inputs_from_synth(spec, gen_scene(spec));
    }();
    return in;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

} // namespace

TEST(Pipeline, EmptyStageListIsNoOp) {
    PipelineConfig cfg;
    cfg.stages.clear();
    const auto r = run_pipeline(cfg, small_inputs());
    EXPECT_TRUE(r.report.at("stages").empty());
    EXPECT_TRUE(r.report.at("layers").empty());
    EXPECT_FALSE(r.grid.has_value());
}

TEST(Pipeline, DensifyOnPerfectSceneAddsNothing) {
    const auto spec = missing_wall_spec(0, 64, 40);
    const auto scene = gen_scene(spec);
    PipelineInputs in = inputs_from_synth(spec, scene);
    // Reference depth is the scene's own render, so every residual is zero.
    in.scene = scene.gaussians;
    for (auto &v : in.views) {
        const auto r = render(scene.gaussians, v);
        Plane d(v.height, v.width, 1, 0.0f);
        for (std::size_t p = 0; p < r.pixel_count(); ++p) {
            d.data[p] = r.valid[p] ? static_cast<float>(r.depth[p]) : 0.0f;
        }
        v.ref_depth = DepthMap::from_plane(d);
    }
    PipelineConfig cfg;
    cfg.stages = {"densify"};
    const auto r = run_pipeline(cfg, in);
    EXPECT_EQ(r.report.at("densify").at(0).at("added_count"), 0);
    EXPECT_EQ(r.scene.size(), scene.gaussians.size());
}

TEST(Pipeline, StageErrorsNameTheStage) {
    PipelineConfig cfg;
    cfg.stages = {"refine"};
    try {
        run_pipeline(cfg, small_inputs());
        FAIL() << "expected an error";
    } catch (const InvalidInput &e) {
        EXPECT_NE(std::string(e.what()).find("refine"), std::string::npos);
    }
    cfg.stages = {"init"};
    cfg.densify.base_count = 10'000'000;
    try {
        run_pipeline(cfg, small_inputs());
        FAIL() << "expected an error";
    } catch (const InsufficientPoints &e) {
        EXPECT_NE(std::string(e.what()).find("init"), std::string::npos);
    }
    cfg.stages = {"init", "explode"};
    EXPECT_THROW(run_pipeline(cfg, small_inputs()), InvalidInput);
}

TEST(Pipeline, ReportListsEveryStageOnce) {
    const auto cfg = small_config();
    const auto r = run_pipeline(cfg, small_inputs());
    const auto &stages = r.report.at("stages");
    ASSERT_EQ(stages.size(), cfg.stages.size());
    for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
        EXPECT_EQ(stages.at(i).at("stage"), cfg.stages[i]);
        EXPECT_TRUE(stages.at(i).contains("ms"));
    }
    const auto &layers = r.report.at("layers");
    ASSERT_EQ(layers.size(), 3u);
    EXPECT_EQ(layers.at(0).at("count"), 600);
    EXPECT_EQ(layers.at(0).at("inherited"), 0);
    EXPECT_LE(layers.at(2).at("count").get<std::size_t>(), 900u);
    EXPECT_EQ(r.scene.layer_count(), 3u);
    EXPECT_TRUE(r.report.at("metrics").contains("miou"));
    EXPECT_TRUE(r.report.at("metrics").contains("map_visible"));
    EXPECT_NO_THROW(r.scene.validate());
}

TEST(Pipeline, ByteIdenticalAcrossRunsAndThreads) {
    const fs::path base = fs::temp_directory_path() / "fgs_pipeline_det";
    fs::remove_all(base);
    auto cfg = small_config();
    std::vector<fs::path> dirs;
    const auto keep = num_threads();
    for (const std::size_t threads : {1u, 1u, 3u}) {
        set_num_threads(threads);
        cfg.output_dir = base / std::to_string(dirs.size());
        run_pipeline(cfg, small_inputs());
        dirs.push_back(cfg.output_dir);
    }
    set_num_threads(keep);
    for (const char *name : {"scene.fgs", "grid.voxg"}) {
        const auto ref = slurp(dirs[0] / name);
        ASSERT_FALSE(ref.empty());
        for (std::size_t i = 1; i < dirs.size(); ++i) {
            EXPECT_EQ(slurp(dirs[i] / name), ref) << name << " run " << i;
        }
    }
    EXPECT_TRUE(fs::exists(dirs[0] / "report.json"));
    fs::remove_all(base);
}

TEST(PipelineConfigJson, RoundTripAndErrors) {
    auto cfg = small_config();
    cfg.voxelize.cutoff = VoxelizeOptions::exact();
    cfg.densify.select_mode = SelectMode::Absolute;
    const auto j = pipeline_config_to_json(cfg);
    const auto back = pipeline_config_from_json(j);
    EXPECT_EQ(pipeline_config_to_json(back), j);
    EXPECT_TRUE(std::isinf(back.voxelize.cutoff));
    EXPECT_THROW(pipeline_config_from_json(nlohmann::json{{"densify", {{"select_mode", "sideways"}}}}), InvalidInput);
    PipelineConfig bad;
    bad.query_dim = 30;
    bad.heads = 8;
    EXPECT_THROW(bad.validate(), InvalidInput);
}

TEST(Retrieval, CosineScoresAgainstBank) {
    const auto spec = benchmark_spec(0, 64, 36);
    const auto scene = gen_scene(spec);
    const auto scan = lidar_scan(spec, scene);
    const auto r = retrieval_scores(scene.gaussians, scene.bank, scan);
    ASSERT_EQ(r.queries.size(), spec.classes.size());
    ASSERT_EQ(static_cast<std::size_t>(r.scores.rows()), scan.points.size());
    for (Eigen::Index i = 0; i < r.scores.rows(); ++i) {
        EXPECT_LE(r.scores.row(i).maxCoeff(), 1.0 + 1e-9);
        EXPECT_EQ(r.positive.row(i).cast<int>().sum(), 1);
    }
    // Ground-truth Gaussians carry exact class embeddings, so retrieval is near perfect.
    const auto m = eval_map(r.scores, r.positive, &scan.visible);
    EXPECT_GT(m.map, 0.95);
}

TEST(Bench, ReportShape) {
    BenchConfig cfg;
    cfg.gaussians = 200;
    cfg.width = 64;
    cfg.height = 48;
    cfg.repeats = 1;
    cfg.voxel_gaussians = 20;
    cfg.voxel_dims = 8;
    cfg.fps_points = 500;
    cfg.fps_k = 50;
    const auto j = bench(cfg);
    for (const char *k : {"render", "voxelize", "fps"}) {
        EXPECT_TRUE(j.contains(k)) << k;
    }
    EXPECT_GT(j.at("render").at("oracle_ms").get<double>(), 0.0);
}
