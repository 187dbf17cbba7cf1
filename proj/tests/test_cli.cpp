// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#include "fgs/io.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
  protected:
    static void SetUpTestSuite() {
        dir_ = fs::temp_directory_path() / "fgs_cli_test";
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        std::ofstream(dir_ / "spec.json") << R"({"preset": "missing_wall", "width": 64, "height": 40})";
        ASSERT_EQ(run("--quiet synth --spec " + (dir_ / "spec.json").string() + " --out " + (dir_ / "s").string()), 0);
    }
    static void TearDownTestSuite() { fs::remove_all(dir_); }

    static int run(const std::string &args, const std::string &stdout_file = "/dev/null") {
        const std::string cmd = std::string(FGS_CLI_PATH) + " " + args + " >" + stdout_file + " 2>/dev/null";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }
    static std::string p(const std::string &name) { return (dir_ / name).string(); }
    static std::string s(const std::string &name) { return (dir_ / "s" / name).string(); }

    static fs::path dir_;
};

fs::path CliTest::dir_;

nlohmann::json read_json(const std::string &path) {
    std::ifstream in(path);
    return nlohmann::json::parse(in);
}

} // namespace

TEST_F(CliTest, SynthWritesEveryArtifact) {
    for (const char *f : {"scene.fgs", "rig.json", "gt.voxg", "gt_visible.plne", "bank.json", "lidar.pnts",
                          "lidar_labels.json", "spec.json"}) {
        EXPECT_TRUE(fs::exists(dir_ / "s" / f)) << f;
    }
    const auto rig = fgs::io::read_rig(s("rig.json"));
    ASSERT_EQ(rig.size(), 1u);
    EXPECT_EQ(rig[0].width, 64);
}

TEST_F(CliTest, RenderVoxelizeAndEvaluate) {
    ASSERT_EQ(run("render --scene " + s("scene.fgs") + " --rig " + s("rig.json") + " --out " + p("r")), 0);
    const auto depth = fgs::io::read_plane(p("r_depth.plne"));
    EXPECT_EQ(depth.width, 64);
    EXPECT_EQ(depth.height, 40);
    EXPECT_TRUE(fs::exists(p("r_feature.plne")));

    ASSERT_EQ(run("voxelize --scene " + s("scene.fgs") + " --bank " + s("bank.json") + " --grid-from " + s("gt.voxg") +
                  " --out " + p("pred.voxg")),
              0);
    ASSERT_EQ(run("eval-miou --pred " + p("pred.voxg") + " --gt " + s("gt.voxg") + " --visible " +
                      s("gt_visible.plne") + " --ignore 2",
                  p("miou.json")),
              0);
    const auto m = read_json(p("miou.json"));
    EXPECT_GT(m.at("miou").get<double>(), 0.5);

    ASSERT_EQ(run("retrieve --scene " + s("scene.fgs") + " --bank " + s("bank.json") + " --points " + s("lidar.pnts") +
                  " --out " + p("ret.json")),
              0);
    ASSERT_EQ(run("eval-map --scores " + p("ret.json") + " --labels " + s("lidar_labels.json"), p("map.json")), 0);
    EXPECT_GT(read_json(p("map.json")).at("map").get<double>(), 0.9);
}

TEST_F(CliTest, InitDensifyRefineLoss) {
    ASSERT_EQ(run("init --rig " + s("rig.json") + " --base-count 300 --out " + p("base.fgs")), 0);
    EXPECT_EQ(fgs::io::read_scene(p("base.fgs")).size(), 300u);
    ASSERT_EQ(run("densify --scene " + p("base.fgs") + " --rig " + s("rig.json") + " --budget 50 --out " + p("d.fgs"),
                  p("d.json")),
              0);
    const auto d = fgs::io::read_scene(p("d.fgs"));
    EXPECT_EQ(d.layer_count(), 2u);
    EXPECT_LE(d.size(), 350u);
    ASSERT_EQ(run("refine --scene " + p("d.fgs") + " --rig " + s("rig.json") + " --query-dim 16 --heads 2 --out " +
                  p("r.fgs")),
              0);
    EXPECT_EQ(fgs::io::read_scene(p("r.fgs")).size(), d.size());
    EXPECT_EQ(run("loss --scene " + p("r.fgs") + " --rig " + s("rig.json"), p("loss.json")), 0);
    EXPECT_TRUE(read_json(p("loss.json")).contains("total"));
}

TEST_F(CliTest, PipelineFromSynthSpec) {
    std::ofstream(p("cfg.json")) << R"({"query_dim": 16, "heads": 2,
        "densify": {"base_count": 300, "layer_budgets": [50, 50]}})";
    ASSERT_EQ(run("--quiet pipeline --config " + p("cfg.json") + " --synth " + p("spec.json") + " --out " + p("pipe")),
              0);
    const auto report = read_json(p("pipe/report.json"));
    EXPECT_EQ(report.at("stages").size(), 8u);
    EXPECT_TRUE(fs::exists(dir_ / "pipe" / "scene.fgs"));
    EXPECT_TRUE(fs::exists(dir_ / "pipe" / "grid.voxg"));
}

TEST_F(CliTest, ExitCodes) {
    EXPECT_EQ(run("--help"), 0);
    EXPECT_EQ(run("render --nonsense"), 2);
    EXPECT_EQ(run("render --scene " + p("missing.fgs") + " --rig " + s("rig.json") + " --out " + p("x")), 4);
    std::ofstream(p("bad_spec.json")) << R"({"classes": ["a"], "primitives": [{"shape": "box", "half_extent": [0, 1, 1]}]})";
    EXPECT_EQ(run("synth --spec " + p("bad_spec.json") + " --out " + p("bad")), 2);
    std::ofstream(p("junk.json")) << "{ nope";
    EXPECT_EQ(run("synth --spec " + p("junk.json") + " --out " + p("bad")), 2);
    EXPECT_EQ(run("render --scene " + s("scene.fgs") + " --rig " + s("rig.json") + " --view 9 --out " + p("x")), 2);
    // Global flags are accepted after the subcommand too.
    EXPECT_EQ(run("render --scene " + s("scene.fgs") + " --rig " + s("rig.json") + " --out " + p("q") + " --quiet"), 0);
}
