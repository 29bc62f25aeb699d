#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "advsticker/attack.hpp"
#include "advsticker/d2p.hpp"

namespace advsticker {

// Flat key-value run configuration with sections. Defaults describe the
// desk-scale dodging run; every knob is overridable from file or CLI flag.
struct RunConfig {
  // [run]
  std::string mode = "dodging";  // dodging | impersonation
  std::string optimizer = "caa";  // eot | caa
  std::string output_dir = "runs/out";
  bool fresh_dir = false;  // true: version the output directory instead of overwriting

  // [attack]
  int iterations = 3000;
  double lr = 0.05;
  double momentum = 0.95;
  double alpha = 1e-5;
  int batch_size = 32;
  std::uint64_t init_seed = 11;
  std::uint64_t batch_seed = 12;
  int pool_eval_interval = 100;
  int snapshot_interval = 0;

  // [schedule]
  std::vector<double> betas = {0.5, 0.8, 1.0};
  std::vector<int> epochs = {2000, 2000, 3000};

  // [sticker]
  int sticker_height = 40;
  int sticker_width = 90;
  int anchor_x = -1;  // -1: horizontally centered
  int anchor_y = -1;  // -1: centered on the upper 30% line of the canvas

  // [model]
  int input_size = 112;
  int embed_dim = 64;
  std::uint64_t model_seed = 7;
  std::string model_file;  // optional weight file; empty builds the seeded toy model
  int threads = 1;

  // [faces]
  std::string face_source = "procedural";  // procedural | directory
  std::string face_dir;
  std::uint64_t identity_seed = 100;
  std::uint64_t anchor_seed = 0;  // 0: derived from identity_seed and the mode
  int variations = 4;

  // [pools]
  int train_pool = 1000;
  int eval_pool = 400;
  std::uint64_t train_seed = 21;
  std::uint64_t eval_seed = 22;

  // [ta] / [tb]; pools.grid_levels also lives here
  TransformRanges ranges;

  // [noise]
  double noise_mean = 0.0;
  double noise_stddev = 0.02;

  // [d2p]
  std::string d2p_mode = "off";  // off | train | load
  int d2p_epochs = 20000;
  double d2p_lr = 0.01;
  int d2p_hidden = 100;
  std::uint64_t d2p_train_seed = 31;
  std::string mapper_file;
  double gamma_r = 1.1, gamma_g = 1.0, gamma_b = 0.9;
  double mix_diag = 0.9;
  double mix_offdiag = 0.0333;
  double channel_offset = 0.02;
  double channel_noise = 0.01;
  std::uint64_t channel_seed = 32;

  // [eval]
  bool eval_apply_channel = false;
  std::uint64_t eval_channel_seed = 33;

  ChannelParams channel_params() const;
  CurriculumSchedule schedule() const;
  AttackRunConfig attack_config() const;
  MaskSpec mask_spec() const;  // anchors must be resolved first
};

struct ConfigField {
  std::string name;  // "section.key"
  std::function<void(RunConfig&, const std::string&)> parse;
  std::function<std::string(const RunConfig&)> print;
};

// Schema shared by the file parser, the validator, the echo writer and the
// CLI flag surface.
const std::vector<ConfigField>& config_fields();

// Parse INI-style text over the defaults. Unknown or valueless keys raise
// ConfigError naming the key. An empty file yields the documented defaults.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

// Apply one "section.key=value" override.
void apply_config_override(RunConfig& cfg, const std::string& key, const std::string& value);

// Cross-field checks; resolves auto anchors and the anchor identity seed so
// the echoed config states exactly what ran.
void validate_and_resolve(RunConfig& cfg);

// Canonical echo, parseable by parse_config_text.
std::string serialize_config(const RunConfig& cfg);

}  // namespace advsticker
