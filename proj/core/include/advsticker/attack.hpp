#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "advsticker/d2p.hpp"
#include "advsticker/embedding.hpp"
#include "advsticker/tensor.hpp"
#include "advsticker/warp.hpp"

namespace advsticker {

// Sampling ranges for the physical transform pool. Each parameter is drawn
// uniformly from grid_levels equally spaced values across its range.
struct TransformRanges {
  double ta_angle_min = -2.0, ta_angle_max = 2.0;          // parabolic pitch, degrees
  double ta_rate_min = -2e-4, ta_rate_max = 2e-4;          // parabolic bending rate
  double ta_rotation_min = -1.0, ta_rotation_max = 1.0;    // degrees
  double ta_translation_min = -1.0, ta_translation_max = 1.0;  // pixels, both axes
  double tb_rotation_min = -3.0, tb_rotation_max = 3.0;    // degrees
  double tb_scale_min = 0.94, tb_scale_max = 1.06;
  double tb_translation_min = -2.0, tb_translation_max = 2.0;  // pixels, both axes
  double tb_contrast_min = 0.5, tb_contrast_max = 1.1;
  double tb_brightness_min = 0.05, tb_brightness_max = 0.1;
  int grid_levels = 21;

  void validate() const;
};

struct TransformSample {
  int face_index = 0;
  StickerTransformParams ta;
  FaceTransformParams tb;
  std::uint64_t noise_seed = 0;
};

struct TransformSet {
  std::vector<TransformSample> samples;
  std::uint64_t seed = 0;
};

TransformSet sample_transform_set(const TransformRanges& ranges, int count, int face_count,
                                  std::uint64_t seed);

struct CurriculumStage {
  double beta = 1.0;
  int epochs = 0;
};

struct CurriculumSchedule {
  std::vector<CurriculumStage> stages;

  void validate() const;  // betas strictly increasing within (0, 1], epochs positive
  int total_epochs() const;
};

// Everything fixed during an optimization run.
struct AttackContext {
  const EmbeddingModel* model = nullptr;
  const std::vector<ImageTensor>* faces = nullptr;
  std::vector<double> anchor_embedding;
  const D2PMapper* mapper = nullptr;  // null disables the color mapper
  MaskSpec mask;
  double noise_mean = 0.0;
  double noise_stddev = 0.02;
  AttackMode mode = AttackMode::kDodging;
  int threads = 1;
};

// Anisotropic total variation of the sticker, summed over channels;
// out-of-range neighbor differences count as zero. The gradient adds 1e-12
// inside the root so exact ties get subgradient zero.
double tv_loss(const ImageTensor& delta);
GradResult tv_loss_grad(const ImageTensor& delta);

// Closed-form curriculum weights clamp(1 - L/lambda, 0, 1). lambda may be
// +infinity (all-ones regime).
std::vector<double> caa_weights(const std::vector<double>& losses, double lambda);

struct LambdaSolution {
  double lambda = 0.0;
  bool all_ones = false;
  double achieved = 0.0;  // mean weight actually reached
};

// Bisection for the lambda whose mean weight hits beta, to 1e-3 on the
// proportion, over lambda in (max(L)*1e-6, max(L)*1e6]. beta = 1 and
// all-zero losses short-circuit to the all-ones regime.
LambdaSolution solve_lambda(const std::vector<double>& losses, double beta);

struct OptimizerState {
  ImageTensor delta;
  std::vector<double> momentum;
  double lr = 0.05;
  double momentum_coef = 0.95;

  void validate() const;
};

// buffer <- mu * buffer + grad; delta <- clamp(delta - lr * buffer, 0, 1)
void sgd_momentum_step(OptimizerState& state, const std::vector<double>& grad);

// Mean attack loss (plus alpha * TV) over a transform batch with optional
// per-sample weights, and its gradient w.r.t. the sticker.
GradResult eot_loss_and_grad(const ImageTensor& delta, const AttackContext& ctx,
                             const std::vector<TransformSample>& batch,
                             const std::vector<double>* weights, double alpha);

// Per-sample unweighted attack losses over a whole set (no TV term).
std::vector<double> pool_losses(const ImageTensor& delta, const AttackContext& ctx,
                                const TransformSet& set);
double pool_mean_loss(const ImageTensor& delta, const AttackContext& ctx,
                      const TransformSet& set);

struct TraceRow {
  int iteration = 0;
  int stage = 0;
  double lambda = std::numeric_limits<double>::infinity();
  double mean_weight = 1.0;
  double pool_loss = 0.0;   // latest held-out evaluation when the row was written
  double batch_loss = 0.0;  // optimized attack term (weighted batch mean)
  double tv = 0.0;
};

struct ConvergenceTrace {
  std::vector<TraceRow> rows;

  void append(const TraceRow& row);  // iterations must increase monotonically
};

struct AttackRunConfig {
  int iterations = 3000;  // EOT budget; the curriculum uses its stage epochs
  CurriculumSchedule schedule;
  double lr = 0.05;
  double momentum = 0.95;
  double alpha = 1e-5;  // TV weight
  int batch_size = 32;
  std::uint64_t init_seed = 11;
  std::uint64_t batch_seed = 12;
  int pool_eval_interval = 100;
  int snapshot_interval = 0;  // 0 disables the hook
  std::function<void(int, const ImageTensor&)> snapshot_hook;

  void validate() const;
};

struct AttackResult {
  ImageTensor delta;
  ConvergenceTrace trace;
  double initial_pool_loss = 0.0;
  double final_pool_loss = 0.0;
};

// Plain expectation-over-transforms optimization: uniform minibatches, SGD
// with momentum, box projection.
AttackResult run_eot(const AttackRunConfig& cfg, const AttackContext& ctx,
                     const TransformSet& train_set, const TransformSet& eval_set);

// Curriculum run: per stage, lambda is solved from the full training pool at
// stage entry (strictly increasing across stages), then minibatch weights
// are recomputed from current losses every iteration.
AttackResult run_caa(const AttackRunConfig& cfg, const AttackContext& ctx,
                     const TransformSet& train_set, const TransformSet& eval_set);

// Mid-gray sticker with a small seeded jitter.
ImageTensor initial_sticker(int height, int width, std::uint64_t seed);

}  // namespace advsticker
