#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "dense_ddu/commands.hpp"
#include "test_util.hpp"

using namespace ddu;
using testutil::TempDir;

namespace {

const std::string cli = DDU_CLI_PATH;

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" + cli + "' " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

/// Small synthetic dataset with an OoD square, shared by the pipeline tests.
class CliPipeline : public ::testing::Test {
 protected:
  void SetUp() override {
    write_text(dir / "spec.json",
               R"({"num_classes": 3, "feature_dim": 4, "num_images": 6, "height": 16, "width": 16,
                   "layout": "voronoi", "ood_fraction": 0.1, "seed": 4})");
    ASSERT_EQ(run("synth --spec " + q(dir / "spec.json") + " --out-dir " + q(dir / "data")), 0);
  }
  fs::path manifest() const { return dir / "data" / "manifest.json"; }

  TempDir dir{"cli"};
};

}  // namespace

TEST_F(CliPipeline, FullPipelineProducesAllOutputs) {
  ASSERT_EQ(run("fit --manifest " + q(manifest()) + " --out " + q(dir / "model.npz")), 0);
  ASSERT_EQ(run("density --manifest " + q(manifest()) + " --model " + q(dir / "model.npz") + " --out-dir " +
                q(dir / "dens")),
            0);
  ASSERT_EQ(run("entropy --manifest " + q(manifest()) + " --out-dir " + q(dir / "ent") + " --measure pe"), 0);
  ASSERT_EQ(run("evaluate --manifest " + q(manifest()) + " --uncertainty-dir " + q(dir / "dens") + " --out " +
                q(dir / "eval") + " --window 2 --points 5 --mode absolute"),
            0);
  ASSERT_EQ(run("distances --manifest " + q(manifest()) + " --pair 2,2,2,3 --pair 0,0,15,15 --out " +
                q(dir / "dist")),
            0);
  ASSERT_EQ(run("render --input " + q(dir / "dens" / "img_00000.npy") + " --out " + q(dir / "d.png") +
                " --normalization quantile"),
            0);
  ASSERT_EQ(run("render --input " + q(dir / "dist_0.csv") + " --out " + q(dir / "m.pgm") + " --scale 4"), 0);
  ASSERT_EQ(run("render --accuracy " + q(manifest()) + " --out " + q(dir / "acc")), 0);

  for (const char* f : {"model.npz", "eval.csv", "eval.json", "eval_iou.json", "dist_0.csv", "dist_0.png",
                        "dist_1.csv", "d.png", "m.pgm", "acc/img_00005_accuracy.png", "dens/img_00003.json"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  const auto side = nlohmann::json::parse(read_text_file(dir / "dens" / "img_00000.json"));
  EXPECT_EQ(side["source"], "log_density");
  EXPECT_EQ(side["polarity"], "confidence");
  const auto eval = nlohmann::json::parse(read_text_file(dir / "eval.json"));
  EXPECT_EQ(eval["points"].size(), 5u);
  EXPECT_EQ(eval["settings"]["uncertainty_source"], "neg_log_density");
  const auto pgm = read_file(dir / "m.pgm");
  EXPECT_EQ(std::string(reinterpret_cast<const char*>(pgm.data()), 10), "P5\n12 12\n2");
}

TEST_F(CliPipeline, ModelBytesIndependentOfWorkers) {
  ASSERT_EQ(run("fit --manifest " + q(manifest()) + " --out " + q(dir / "m1.npz") + " --workers 1"), 0);
  ASSERT_EQ(run("fit --manifest " + q(manifest()) + " --out " + q(dir / "m8.npz") + " --workers 8"), 0);
  ASSERT_EQ(run("fit --manifest " + q(manifest()) + " --out " + q(dir / "m3.npz"), "DENSE_DDU_WORKERS=3"), 0);
  EXPECT_EQ(read_file(dir / "m1.npz"), read_file(dir / "m8.npz"));
  EXPECT_EQ(read_file(dir / "m1.npz"), read_file(dir / "m3.npz"));
}

TEST_F(CliPipeline, FlagBeatsEnvironmentBeatsConfig) {
  write_text(dir / "cfg.json", R"({"workers": "lots", "covariance": "diagonal"})");
  // config value has the wrong type, but env and flag both take precedence for workers
  EXPECT_EQ(run("--config " + q(dir / "cfg.json") + " fit --manifest " + q(manifest()) + " --out " +
                q(dir / "a.npz"), "DENSE_DDU_WORKERS=2"),
            0);
  EXPECT_EQ(load_model(dir / "a.npz").covariance, CovarianceMode::diagonal);
  EXPECT_EQ(run("fit --manifest " + q(manifest()) + " --out " + q(dir / "b.npz"), "DENSE_DDU_WORKERS=abc"), 2);
  EXPECT_EQ(run("fit --manifest " + q(manifest()) + " --out " + q(dir / "b.npz") + " --workers 2",
                "DENSE_DDU_WORKERS=abc"),
            0);
  EXPECT_EQ(run("--config " + q(dir / "cfg.json") + " fit --manifest " + q(manifest()) + " --out " +
                q(dir / "c.npz") + " --covariance tied"),
            2);  // workers from config is still consulted and malformed
  write_text(dir / "cfg2.json", R"({"covariance": "diagonal"})");
  EXPECT_EQ(run("--config " + q(dir / "cfg2.json") + " fit --manifest " + q(manifest()) + " --out " +
                q(dir / "c.npz") + " --covariance tied"),
            0);
  EXPECT_EQ(load_model(dir / "c.npz").covariance, CovarianceMode::tied);
}

TEST_F(CliPipeline, ExitCodes) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("fit --manifest " + q(manifest())), 2);
  EXPECT_EQ(run("fit --manifest " + q(dir / "nope.json") + " --out " + q(dir / "x.npz")), 5);
  write_text(dir / "bad.json", "{ not json");
  EXPECT_EQ(run("fit --manifest " + q(dir / "bad.json") + " --out " + q(dir / "x.npz")), 3);
  EXPECT_EQ(run("fit --manifest " + q(manifest()) + " --out " + q(dir / "x.npz") + " --covariance banana"), 2);
  EXPECT_EQ(run("fit --manifest " + q(manifest()) + " --out " + q(dir / "x.npz") + " --jitter=-5"), 4);
  EXPECT_EQ(run("evaluate --manifest " + q(manifest()) + " --uncertainty-dir " + q(dir / "none") + " --out " +
                q(dir / "e")),
            2);
  EXPECT_FALSE(fs::exists(dir / "x.npz"));
  EXPECT_FALSE(fs::exists(dir / "e.csv"));
}

TEST_F(CliPipeline, FailedCommandsWriteNothing) {
  // corrupt the last feature file: validation happens before any output
  write_tensor(dir / "data" / "img_00005_features.npy", Tensor::zeros(DType::f32, {16, 16, 5}));
  EXPECT_EQ(run("fit --manifest " + q(manifest()) + " --out " + q(dir / "model.npz")), 2);
  EXPECT_FALSE(fs::exists(dir / "model.npz"));

  write_file_atomic(dir / "data" / "img_00005_features.npy", std::string_view("garbage"));
  EXPECT_EQ(run("fit --manifest " + q(manifest()) + " --out " + q(dir / "model.npz")), 3);
  EXPECT_FALSE(fs::exists(dir / "model.npz"));
  for (const auto& name : testutil::files_in(dir.path())) EXPECT_EQ(name.find(".tmp"), std::string::npos) << name;
}

TEST_F(CliPipeline, EvaluateRejectsMissingSidecar) {
  ASSERT_EQ(run("entropy --manifest " + q(manifest()) + " --out-dir " + q(dir / "ent")), 0);
  fs::remove(dir / "ent" / "img_00002.json");
  EXPECT_EQ(run("evaluate --manifest " + q(manifest()) + " --uncertainty-dir " + q(dir / "ent") + " --out " +
                q(dir / "e")),
            2);
  EXPECT_FALSE(fs::exists(dir / "e.csv"));
}

TEST_F(CliPipeline, EvaluatePointsBelowTwoIsConfigError) {
  ASSERT_EQ(run("entropy --manifest " + q(manifest()) + " --out-dir " + q(dir / "ent")), 0);
  EXPECT_EQ(run("evaluate --manifest " + q(manifest()) + " --uncertainty-dir " + q(dir / "ent") + " --out " +
                q(dir / "e") + " --points 1"),
            2);
}

TEST(CliSynth, OutputIdenticalAcrossRunsAndWorkers) {
  TempDir dir("cli_synth");
  write_text(dir / "spec.json", R"({"num_images": 5, "height": 10, "width": 12, "ood_fraction": 0.05, "seed": 1})");
  ASSERT_EQ(run("synth --spec " + q(dir / "spec.json") + " --out-dir " + q(dir / "a") + " --workers 1"), 0);
  ASSERT_EQ(run("synth --spec " + q(dir / "spec.json") + " --out-dir " + q(dir / "b") + " --workers 6"), 0);
  const auto names = testutil::files_in(dir / "a");
  ASSERT_EQ(names, testutil::files_in(dir / "b"));
  for (const auto& n : names) EXPECT_EQ(read_file(dir / "a" / n), read_file(dir / "b" / n)) << n;
}

TEST(CliSynth, BadSpecIsConfigError) {
  TempDir dir("cli_badspec");
  write_text(dir / "spec.json", R"({"num_classes": 3, "ignore_id": 2})");
  EXPECT_EQ(run("synth --spec " + q(dir / "spec.json") + " --out-dir " + q(dir / "a")), 2);
  EXPECT_FALSE(fs::exists(dir / "a"));
}
