#include <filesystem>
#include <fstream>
#include <string>

#include "advsticker/error.hpp"
#include "advsticker/image_io.hpp"
#include "advsticker/runner.hpp"
#include "advsticker/serialize.hpp"
#include "doctest.h"

using namespace advsticker;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// small enough to run in seconds, large enough to exercise every artifact
RunConfig tiny_config(const std::string& out_dir) {
  RunConfig cfg = parse_config_text(
      "[run]\n"
      "optimizer = eot\n"
      "[attack]\n"
      "iterations = 6\n"
      "batch_size = 2\n"
      "pool_eval_interval = 3\n"
      "[schedule]\n"
      "betas = 0.5, 1.0\n"
      "epochs = 3, 3\n"
      "[sticker]\n"
      "height = 6\n"
      "width = 10\n"
      "[model]\n"
      "input_size = 32\n"
      "embed_dim = 16\n"
      "[faces]\n"
      "variations = 2\n"
      "[pools]\n"
      "train_size = 6\n"
      "eval_size = 4\n");
  cfg.output_dir = out_dir;
  return cfg;
}

}  // namespace

TEST_CASE("a tiny run writes the full artifact set") {
  fs::path dir = fs::temp_directory_path() / "advsticker_run_artifacts";
  fs::remove_all(dir);
  RunConfig cfg = tiny_config(dir.string());
  std::string run_dir;
  RunOutputs out = run_experiment(cfg, &run_dir);
  CHECK(run_dir == dir.string());

  for (const char* name : {"config_resolved.ini", "trace.csv", "report.csv", "summary.csv",
                           "sticker.png", "sticker.ppm", "face_base.png", "plot.svg"})
    CHECK_MESSAGE(fs::exists(dir / name), name);
  CHECK(fs::exists(dir / "adv_sample_0.png"));

  // trace has one row per iteration
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows = read_csv((dir / "trace.csv").string(), &header);
  CHECK(header.front() == "iteration");
  CHECK(rows.size() == 6);

  // report covers the evaluation pool
  rows = read_csv((dir / "report.csv").string(), &header);
  CHECK(rows.size() == 4);
  REQUIRE(out.eval_rows.size() == 4);

  // the echo parses back to the resolved config
  RunConfig echoed = parse_config_file((dir / "config_resolved.ini").string());
  CHECK(echoed.anchor_x == out.config.anchor_x);
  CHECK(echoed.iterations == 6);

  CHECK(out.mean_cos_benign > 0.5);  // benign views still look like the anchor
  CHECK(out.attack.trace.rows.size() == 6);
}

TEST_CASE("identical configs reproduce artifacts byte for byte") {
  fs::path a = fs::temp_directory_path() / "advsticker_det_a";
  fs::path b = fs::temp_directory_path() / "advsticker_det_b";
  fs::remove_all(a);
  fs::remove_all(b);
  RunConfig ca = tiny_config(a.string());
  RunConfig cb = tiny_config(b.string());
  run_experiment(ca);
  run_experiment(cb);
  for (const char* name : {"trace.csv", "report.csv", "summary.csv"})
    CHECK_MESSAGE(slurp(a / name) == slurp(b / name), name);
  CHECK(slurp(a / "sticker.ppm") == slurp(b / "sticker.ppm"));
}

TEST_CASE("fresh_dir versions an existing run directory") {
  fs::path dir = fs::temp_directory_path() / "advsticker_fresh";
  fs::remove_all(dir);
  fs::remove_all(fs::path(dir.string() + "-v2"));
  RunConfig cfg = tiny_config(dir.string());
  cfg.fresh_dir = true;
  std::string first;
  run_experiment(cfg, &first);
  CHECK(first == dir.string());
  std::string second;
  run_experiment(cfg, &second);
  CHECK(second == dir.string() + "-v2");
  CHECK(fs::exists(fs::path(second) / "trace.csv"));
}

TEST_CASE("model file reuse keeps the embedding frozen") {
  fs::path dir = fs::temp_directory_path() / "advsticker_model_reuse";
  fs::remove_all(dir);
  RunConfig cfg = tiny_config((dir / "one").string());
  std::string run_dir;
  RunOutputs out = run_experiment(cfg, &run_dir);

  // a second run loading the saved weights matches the seeded build
  fs::path model_path = dir / "model.bin";
  save_model(model_path.string(), out.model);
  RunConfig cfg2 = tiny_config((dir / "two").string());
  cfg2.model_file = model_path.string();
  RunOutputs out2 = run_experiment(cfg2);
  CHECK(out2.model.weights == out.model.weights);
  CHECK(out2.attack.final_pool_loss == out.attack.final_pool_loss);

  // size mismatch is rejected
  RunConfig bad = tiny_config((dir / "three").string());
  bad.model_file = model_path.string();
  bad.embed_dim = 8;
  CHECK_THROWS_AS(run_experiment(bad), ConfigError);
}

TEST_CASE("suite arms must agree outside the axis") {
  fs::path dir = fs::temp_directory_path() / "advsticker_suite_reject";
  fs::remove_all(dir);
  RunConfig base = tiny_config((dir / "base").string());
  std::vector<RunConfig> arms = make_suite_arms(base, "optimizer");
  REQUIRE(arms.size() == 2);
  arms[1].lr = 0.5;  // sneak a difference outside the axis keys
  CHECK_THROWS_WITH_AS(run_ablation_suite(arms, "optimizer", {}, dir.string()),
                       doctest::Contains("attack.lr"), ConfigError);

  CHECK_THROWS_AS(run_ablation_suite({base}, "optimizer", {}, dir.string()), ConfigError);
  CHECK_THROWS_AS(suite_axis_keys("nonsense"), ConfigError);
}

TEST_CASE("a pools-axis suite writes one comparison row per arm and seed") {
  fs::path dir = fs::temp_directory_path() / "advsticker_suite_pools";
  fs::remove_all(dir);
  RunConfig base = tiny_config((dir / "base").string());
  std::vector<RunConfig> arms = make_suite_arms(base, "pools");
  REQUIRE(arms.size() == 2);

  SuiteResult res = run_ablation_suite(arms, "pools", {901, 902}, dir.string());
  REQUIRE(res.rows.size() == 4);
  // seed-major ordering: both arms appear within each trial
  CHECK(res.rows[0].axis_value != res.rows[1].axis_value);
  CHECK(res.rows[0].trial_seed == res.rows[1].trial_seed);
  for (const SuiteRunRow& row : res.rows) {
    CHECK(fs::exists(fs::path(row.run_dir) / "trace.csv"));
    CHECK(row.final_pool_loss >= 0.0);
  }

  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows = read_csv(res.comparison_csv, &header);
  CHECK(rows.size() == 4);
  CHECK(header.front() == "run_id");
}

TEST_CASE("optimizer arms must match their iteration budgets") {
  fs::path dir = fs::temp_directory_path() / "advsticker_suite_budget";
  fs::remove_all(dir);
  RunConfig base = tiny_config((dir / "base").string());
  std::vector<RunConfig> arms = make_suite_arms(base, "optimizer");
  CHECK(arms[0].iterations == 6);  // matched to the curriculum budget
  // the caa arm's stages must sum to the shared iteration count
  for (RunConfig& arm : arms)
    if (arm.optimizer == "caa") arm.epochs = {2, 2};
  CHECK_THROWS_AS(run_ablation_suite(arms, "optimizer", {}, dir.string()), ConfigError);
}
