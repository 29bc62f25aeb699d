#pragma once

#include <optional>
#include <string>
#include <vector>

#include "advsticker/attack.hpp"
#include "advsticker/config.hpp"
#include "advsticker/d2p.hpp"
#include "advsticker/embedding.hpp"

namespace advsticker {

struct EvalRow {
  int sample = 0;
  int face_index = 0;
  double cos_benign = 0.0;  // no sticker, same face transform and noise
  double cos_adv = 0.0;
  double loss_adv = 0.0;
};

struct RunOutputs {
  RunConfig config;  // resolved form of what actually ran
  EmbeddingModel model;
  std::vector<ImageTensor> faces;
  std::vector<double> anchor_embedding;
  std::optional<D2PMapper> mapper;
  double d2p_final_mse = -1.0;  // set when the mapper was trained in-run
  AttackResult attack;
  ImageTensor sticker_eval;  // sticker as the held-out evaluation rendered it
  TransformSet eval_set;
  std::vector<EvalRow> eval_rows;
  double mean_cos_benign = 0.0;
  double mean_cos_adv = 0.0;
  double mean_eval_loss = 0.0;
  double attack_seconds = 0.0;
};

// Build the world described by the config and run the attack. Touches the
// filesystem only for configured input files (faces, weights).
RunOutputs execute_run(const RunConfig& cfg,
                       const std::function<void(int, const ImageTensor&)>& snapshot_hook = nullptr);

// Write config echo, trace/report/summary CSVs, sticker images, sample
// renders and the convergence plot. Returns the directory actually used
// (versioned when fresh_dir is set and the directory exists).
std::string write_run_artifacts(const RunOutputs& out);

// execute_run + write_run_artifacts, with snapshots wired into the run
// directory when attack.snapshot_interval is set.
RunOutputs run_experiment(const RunConfig& cfg, std::string* run_dir_out = nullptr);

struct SuiteRunRow {
  std::string run_id;
  std::string axis_value;
  std::uint64_t trial_seed = 0;
  double initial_pool_loss = 0.0;
  double final_pool_loss = 0.0;
  double mean_cos_benign = 0.0;
  double mean_cos_adv = 0.0;
  double mean_eval_loss = 0.0;
  std::string run_dir;
};

struct SuiteResult {
  std::string axis;
  std::vector<SuiteRunRow> rows;
  std::string comparison_csv;
};

// Keys allowed to differ between arms of an ablation axis.
const std::vector<std::string>& suite_axis_keys(const std::string& axis);

// Runs every config once per trial seed (seed list may be empty for a single
// trial with the configs' own seeds). Arms must be identical outside the
// axis key set; each arm runs in its own subdirectory of out_dir.
SuiteResult run_ablation_suite(const std::vector<RunConfig>& arms, const std::string& axis,
                               const std::vector<std::uint64_t>& trial_seeds,
                               const std::string& out_dir);

// Derive the two arms of a named axis from a base config.
std::vector<RunConfig> make_suite_arms(const RunConfig& base, const std::string& axis);

}  // namespace advsticker
