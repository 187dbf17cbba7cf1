// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fgs/attention.hpp"
#include "fgs/densify.hpp"
#include "fgs/sampling.hpp"
#include "fgs/synth.hpp"
#include "fgs/voxelize.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fgs {

struct PipelineConfig {
    /// Any sequence of init, refine, densify, voxelize and eval. init must
    /// come before anything that needs a scene, voxelize before eval.
    std::vector<std::string> stages{"init", "refine", "densify", "refine", "densify", "refine", "voxelize", "eval"};
    DensifyConfig densify;
    int query_dim = 64;
    int heads = 8;
    std::uint64_t seed = 0;
    /// Value every fresh query starts from.
    double query_init = 0.0;
    /// Optional HEAD file with decode heads (and attention weights if present).
    std::string weights_path;
    /// Without a weights file: pass-through decode heads (true) or seeded ones.
    bool passthrough = true;
    double refine_scale = 0.15;
    double refine_opacity = 0.6;
    int sample_count = 16;
    double sample_spread = 0.5;
    VoxelizeOptions voxelize;
    /// Empty means no artifacts are written.
    std::filesystem::path output_dir;

    void validate() const;
};

PipelineConfig pipeline_config_from_json(const nlohmann::json &j, PipelineConfig base = {});
nlohmann::json pipeline_config_to_json(const PipelineConfig &cfg);

/// Everything the stages read. Missing optional parts disable the matching
/// evaluation.
struct PipelineInputs {
    std::vector<CameraView> views;
    TextBank bank;
    GridSpec grid;
    std::optional<GaussianScene> scene;
    std::optional<VoxelGrid> gt;
    std::optional<std::vector<std::uint8_t>> gt_visible;
    std::optional<LidarScan> lidar;
};

/// Inputs assembled from a generated synthetic scene and a LiDAR sweep.
PipelineInputs inputs_from_synth(const SynthSpec &spec, const SynthScene &scene);

struct PipelineResult {
    GaussianScene scene;
    std::optional<VoxelGrid> grid;
    nlohmann::json report;
};

/// Runs the stages in order. A failing stage raises the original error with
/// the stage name prepended.
PipelineResult run_pipeline(const PipelineConfig &cfg, const PipelineInputs &inputs);

struct RetrievalScores {
    /// points x queries cosine similarity between P_f and each class embedding.
    Eigen::MatrixXd scores;
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> positive;
    std::vector<std::string> queries;
};

/// Scores every non-empty class of `bank` against every LiDAR point.
RetrievalScores retrieval_scores(const GaussianScene &scene, const TextBank &bank, const LidarScan &lidar);

struct BenchConfig {
    std::size_t gaussians = 10000;
    int width = 320;
    int height = 180;
    std::size_t feature_dim = 16;
    int repeats = 3;
    /// Oracle render repeats; it is by far the slowest path.
    int oracle_repeats = 1;
    std::size_t voxel_gaussians = 100;
    int voxel_dims = 32;
    std::size_t fps_points = 20000;
    std::size_t fps_k = 1000;
    std::uint64_t seed = 0;
};

/// Median wall times (ms) for tiled vs. oracle rendering, exact vs. cutoff
/// voxelization and farthest point sampling.
nlohmann::json bench(const BenchConfig &cfg);

} // namespace fgs
