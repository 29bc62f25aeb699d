#include "advsticker/attack.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "advsticker/rng.hpp"

namespace advsticker {

namespace {
constexpr double kTvEps = 1e-12;
const double kInf = std::numeric_limits<double>::infinity();

void check_range(double lo, double hi, const char* name) {
  if (!(lo <= hi)) throw ParamError(std::string("TransformRanges: ") + name + " min > max");
}

// run fn(0..n-1), chunked across up to `threads` workers; callers reduce the
// per-index results in fixed order afterwards so thread count never changes
// the arithmetic
void parallel_samples(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int workers = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (int i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

void validate_context(const AttackContext& ctx) {
  if (!ctx.model || !ctx.faces || ctx.faces->empty())
    throw ParamError("AttackContext: model and a non-empty face set are required");
  if (ctx.anchor_embedding.size() != static_cast<std::size_t>(ctx.model->output_dim))
    throw ShapeError("AttackContext: anchor embedding does not match the model");
}

struct SampleEval {
  double loss = 0.0;
  std::vector<double> grad;  // w.r.t. the mapped sticker, empty when not requested
};

SampleEval eval_sample(const AttackContext& ctx, const ImageTensor& sticker_mapped,
                       const TransformSample& sample, bool want_grad) {
  const std::vector<ImageTensor>& faces = *ctx.faces;
  if (sample.face_index < 0 || sample.face_index >= static_cast<int>(faces.size()))
    throw ParamError("eval_sample: face index out of range");

  const NoiseSpec noise{ctx.noise_mean, ctx.noise_stddev, sample.noise_seed};
  RenderContext render =
      render_forward(faces[sample.face_index], sticker_mapped, sample.ta, sample.tb, noise,
                     ctx.mask, nullptr);
  EmbedContext embed_ctx;
  const std::vector<double> e = embed_forward(*ctx.model, render.adversarial, embed_ctx);

  SampleEval out;
  std::vector<double> grad_e;
  out.loss = attack_loss_with_grad(ctx.mode, e, ctx.anchor_embedding, grad_e);
  if (want_grad) {
    const std::vector<double> g_img = embed_input_grad(*ctx.model, embed_ctx, grad_e);
    out.grad = render_backward(render, g_img, nullptr);
  }
  return out;
}

struct BatchEval {
  double attack_term = 0.0;  // (1/n) sum w_i L_i
  double tv = 0.0;
  double mean_weight = 1.0;
  std::vector<double> grad;  // w.r.t. delta, full objective
};

// weights == nullptr is the unweighted path; with weights it computes the
// weighted mean (1/n) sum w_i L_i. Both reduce in sample order.
BatchEval batch_eval(const ImageTensor& delta, const AttackContext& ctx,
                     const std::vector<TransformSample>& batch, const std::vector<double>* weights,
                     double alpha) {
  validate_context(ctx);
  if (batch.empty()) throw ParamError("batch_eval: empty batch");
  if (weights && weights->size() != batch.size())
    throw ShapeError("batch_eval: weight count does not match the batch");

  D2PContext d2p_ctx;
  const ImageTensor sticker_mapped =
      ctx.mapper ? d2p_forward(*ctx.mapper, delta, d2p_ctx) : delta;

  const int n = static_cast<int>(batch.size());
  std::vector<SampleEval> evals(n);
  parallel_samples(n, ctx.threads, [&](int i) {
    evals[i] = eval_sample(ctx, sticker_mapped, batch[i], true);
  });

  BatchEval out;
  double loss_sum = 0.0;
  double weight_sum = 0.0;
  std::vector<double> g_mapped(delta.data.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(evals[i].loss))
      throw EvalError("batch_eval: non-finite loss at sample " + std::to_string(i));
    if (weights) {
      const double w = (*weights)[i];
      loss_sum += w * evals[i].loss;
      weight_sum += w;
      for (std::size_t j = 0; j < g_mapped.size(); ++j) g_mapped[j] += w * evals[i].grad[j];
    } else {
      loss_sum += evals[i].loss;
      weight_sum += 1.0;
      for (std::size_t j = 0; j < g_mapped.size(); ++j) g_mapped[j] += evals[i].grad[j];
    }
  }
  out.attack_term = loss_sum / n;
  out.mean_weight = weight_sum / n;

  std::vector<double> g_delta;
  if (ctx.mapper) {
    for (double& g : g_mapped) g /= n;
    g_delta = d2p_backward(*ctx.mapper, d2p_ctx, g_mapped);
  } else {
    g_delta = std::move(g_mapped);
    for (double& g : g_delta) g /= n;
  }

  GradResult tv = tv_loss_grad(delta);
  out.tv = tv.value;
  for (std::size_t j = 0; j < g_delta.size(); ++j) g_delta[j] += alpha * tv.grad[j];
  out.grad = std::move(g_delta);
  return out;
}

std::vector<int> draw_batch(Rng& rng, int pool_size, int batch_size) {
  std::vector<int> idx(batch_size);
  for (int i = 0; i < batch_size; ++i) idx[i] = rng.uniform_int(pool_size);
  return idx;
}

std::vector<TransformSample> gather(const TransformSet& set, const std::vector<int>& idx) {
  std::vector<TransformSample> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(set.samples[i]);
  return out;
}

}  // namespace

void TransformRanges::validate() const {
  check_range(ta_angle_min, ta_angle_max, "ta_angle");
  check_range(ta_rate_min, ta_rate_max, "ta_rate");
  check_range(ta_rotation_min, ta_rotation_max, "ta_rotation");
  check_range(ta_translation_min, ta_translation_max, "ta_translation");
  check_range(tb_rotation_min, tb_rotation_max, "tb_rotation");
  check_range(tb_scale_min, tb_scale_max, "tb_scale");
  check_range(tb_translation_min, tb_translation_max, "tb_translation");
  check_range(tb_contrast_min, tb_contrast_max, "tb_contrast");
  check_range(tb_brightness_min, tb_brightness_max, "tb_brightness");
  if (!(tb_scale_min > 0.0)) throw ParamError("TransformRanges: tb_scale must be positive");
  if (grid_levels < 1) throw ParamError("TransformRanges: grid_levels must be >= 1");
}

TransformSet sample_transform_set(const TransformRanges& ranges, int count, int face_count,
                                  std::uint64_t seed) {
  ranges.validate();
  if (count <= 0) throw ParamError("sample_transform_set: count must be positive");
  if (face_count <= 0) throw ParamError("sample_transform_set: face_count must be positive");

  Rng rng(seed);
  const int levels = ranges.grid_levels;
  auto draw = [&](double lo, double hi) {
    const int idx = rng.uniform_int(levels);  // consumed even for collapsed ranges
    if (levels == 1 || lo == hi) return lo;
    return lo + idx * (hi - lo) / (levels - 1);
  };

  TransformSet set;
  set.seed = seed;
  set.samples.resize(count);
  for (TransformSample& s : set.samples) {
    s.face_index = rng.uniform_int(face_count);
    s.ta.parabolic_angle_deg = draw(ranges.ta_angle_min, ranges.ta_angle_max);
    s.ta.parabolic_rate = draw(ranges.ta_rate_min, ranges.ta_rate_max);
    s.ta.rotation_deg = draw(ranges.ta_rotation_min, ranges.ta_rotation_max);
    s.ta.dx = draw(ranges.ta_translation_min, ranges.ta_translation_max);
    s.ta.dy = draw(ranges.ta_translation_min, ranges.ta_translation_max);
    s.tb.rotation_deg = draw(ranges.tb_rotation_min, ranges.tb_rotation_max);
    s.tb.scale = draw(ranges.tb_scale_min, ranges.tb_scale_max);
    s.tb.dx = draw(ranges.tb_translation_min, ranges.tb_translation_max);
    s.tb.dy = draw(ranges.tb_translation_min, ranges.tb_translation_max);
    s.tb.contrast = draw(ranges.tb_contrast_min, ranges.tb_contrast_max);
    s.tb.brightness = draw(ranges.tb_brightness_min, ranges.tb_brightness_max);
    s.noise_seed = rng.next_u64();
  }
  return set;
}

void CurriculumSchedule::validate() const {
  if (stages.empty()) throw ConfigError("schedule: at least one stage is required");
  double prev = 0.0;
  for (const CurriculumStage& s : stages) {
    if (!(s.beta > prev)) throw ConfigError("schedule: betas must increase strictly");
    if (s.beta > 1.0) throw ConfigError("schedule: beta must not exceed 1");
    if (s.epochs <= 0) throw ConfigError("schedule: stage epochs must be positive");
    prev = s.beta;
  }
}

int CurriculumSchedule::total_epochs() const {
  int total = 0;
  for (const CurriculumStage& s : stages) total += s.epochs;
  return total;
}

double tv_loss(const ImageTensor& delta) {
  if (delta.size() == 0) throw ShapeError("tv_loss: empty image");
  double total = 0.0;
  for (int c = 0; c < delta.channels; ++c)
    for (int y = 0; y < delta.height; ++y)
      for (int x = 0; x < delta.width; ++x) {
        const double v = delta.at(y, x, c);
        const double dd = y + 1 < delta.height ? v - delta.at(y + 1, x, c) : 0.0;
        const double dr = x + 1 < delta.width ? v - delta.at(y, x + 1, c) : 0.0;
        total += std::sqrt(dd * dd + dr * dr);
      }
  return total;
}

GradResult tv_loss_grad(const ImageTensor& delta) {
  if (delta.size() == 0) throw ShapeError("tv_loss_grad: empty image");
  GradResult out;
  out.grad.assign(delta.data.size(), 0.0);
  auto flat = [&](int y, int x, int c) {
    return (static_cast<std::size_t>(y) * delta.width + x) * delta.channels + c;
  };
  double total = 0.0;
  for (int c = 0; c < delta.channels; ++c)
    for (int y = 0; y < delta.height; ++y)
      for (int x = 0; x < delta.width; ++x) {
        const double v = delta.at(y, x, c);
        const double dd = y + 1 < delta.height ? v - delta.at(y + 1, x, c) : 0.0;
        const double dr = x + 1 < delta.width ? v - delta.at(y, x + 1, c) : 0.0;
        total += std::sqrt(dd * dd + dr * dr);
        const double r = std::sqrt(dd * dd + dr * dr + kTvEps);
        const double gd = dd / r;
        const double gr = dr / r;
        out.grad[flat(y, x, c)] += gd + gr;
        if (y + 1 < delta.height) out.grad[flat(y + 1, x, c)] -= gd;
        if (x + 1 < delta.width) out.grad[flat(y, x + 1, c)] -= gr;
      }
  out.value = total;
  return out;
}

std::vector<double> caa_weights(const std::vector<double>& losses, double lambda) {
  if (!(lambda > 0.0)) throw ParamError("caa_weights: lambda must be positive");
  std::vector<double> w(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) {
    const double l = losses[i];
    if (!(l >= 0.0) || !std::isfinite(l))
      throw ParamError("caa_weights: losses must be finite and non-negative");
    const double p = 1.0 - l / lambda;
    w[i] = p < 0.0 ? 0.0 : (p > 1.0 ? 1.0 : p);
  }
  return w;
}

LambdaSolution solve_lambda(const std::vector<double>& losses, double beta) {
  if (losses.empty()) throw ParamError("solve_lambda: empty losses");
  if (!(beta > 0.0) || beta > 1.0) throw ParamError("solve_lambda: beta must lie in (0, 1]");
  double max_loss = 0.0;
  for (double l : losses) {
    if (!(l >= 0.0) || !std::isfinite(l))
      throw ParamError("solve_lambda: losses must be finite and non-negative");
    max_loss = std::max(max_loss, l);
  }
  if (beta >= 1.0) return {kInf, true, 1.0};
  if (max_loss == 0.0) return {1.0, true, 1.0};

  auto mean_weight = [&](double lambda) {
    double sum = 0.0;
    for (double l : losses) {
      const double p = 1.0 - l / lambda;
      sum += p < 0.0 ? 0.0 : (p > 1.0 ? 1.0 : p);
    }
    return sum / losses.size();
  };

  double lo = std::log(max_loss * 1e-6);
  double hi = std::log(max_loss * 1e6);
  if (mean_weight(std::exp(lo)) >= beta) {
    const double lambda = std::exp(lo);
    return {lambda, false, mean_weight(lambda)};  // beta below the reachable floor
  }
  double lambda = std::exp(hi);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f = mean_weight(std::exp(mid));
    if (std::abs(f - beta) <= 1e-3) {
      lambda = std::exp(mid);
      return {lambda, false, f};
    }
    if (f < beta)
      lo = mid;
    else
      hi = mid;
  }
  lambda = std::exp(hi);
  return {lambda, false, mean_weight(lambda)};
}

void OptimizerState::validate() const {
  if (delta.size() == 0) throw ParamError("OptimizerState: empty sticker");
  if (momentum.size() != delta.data.size())
    throw ShapeError("OptimizerState: momentum buffer size mismatch");
  if (!(lr > 0.0)) throw ParamError("OptimizerState: lr must be positive");
  if (momentum_coef < 0.0 || momentum_coef >= 1.0)
    throw ParamError("OptimizerState: momentum must lie in [0, 1)");
}

void sgd_momentum_step(OptimizerState& state, const std::vector<double>& grad) {
  state.validate();
  if (grad.size() != state.delta.data.size())
    throw ShapeError("sgd_momentum_step: gradient size mismatch");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) throw EvalError("sgd_momentum_step: non-finite gradient");
    state.momentum[i] = state.momentum_coef * state.momentum[i] + grad[i];
    state.delta.data[i] = clamp01(state.delta.data[i] - state.lr * state.momentum[i]);
  }
}

GradResult eot_loss_and_grad(const ImageTensor& delta, const AttackContext& ctx,
                             const std::vector<TransformSample>& batch,
                             const std::vector<double>* weights, double alpha) {
  BatchEval be = batch_eval(delta, ctx, batch, weights, alpha);
  GradResult out;
  out.value = be.attack_term + alpha * be.tv;
  out.grad = std::move(be.grad);
  return out;
}

std::vector<double> pool_losses(const ImageTensor& delta, const AttackContext& ctx,
                                const TransformSet& set) {
  validate_context(ctx);
  if (set.samples.empty()) throw ParamError("pool_losses: empty transform set");
  D2PContext d2p_ctx;
  const ImageTensor sticker_mapped =
      ctx.mapper ? d2p_forward(*ctx.mapper, delta, d2p_ctx) : delta;
  const int n = static_cast<int>(set.samples.size());
  std::vector<double> losses(n);
  parallel_samples(n, ctx.threads, [&](int i) {
    losses[i] = eval_sample(ctx, sticker_mapped, set.samples[i], false).loss;
  });
  for (int i = 0; i < n; ++i)
    if (!std::isfinite(losses[i]))
      throw EvalError("pool_losses: non-finite loss at sample " + std::to_string(i));
  return losses;
}

double pool_mean_loss(const ImageTensor& delta, const AttackContext& ctx,
                      const TransformSet& set) {
  const std::vector<double> losses = pool_losses(delta, ctx, set);
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / losses.size();
}

void ConvergenceTrace::append(const TraceRow& row) {
  if (!rows.empty() && row.iteration <= rows.back().iteration)
    throw ParamError("ConvergenceTrace: iterations must increase");
  rows.push_back(row);
}

void AttackRunConfig::validate() const {
  if (iterations < 0) throw ConfigError("attack: iterations must be non-negative");
  if (!(lr > 0.0)) throw ConfigError("attack: lr must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("attack: momentum must lie in [0, 1)");
  if (batch_size <= 0) throw ConfigError("attack: batch_size must be positive");
  if (pool_eval_interval <= 0) throw ConfigError("attack: pool_eval_interval must be positive");
  if (alpha < 0.0) throw ConfigError("attack: alpha must be non-negative");
}

ImageTensor initial_sticker(int height, int width, std::uint64_t seed) {
  if (height <= 0 || width <= 0) throw ShapeError("initial_sticker: empty sticker");
  ImageTensor delta(height, width, 3);
  Rng rng(seed);
  for (double& v : delta.data) v = 0.5 + rng.uniform(-0.05, 0.05);
  return delta;
}

namespace {

void check_pools(const AttackContext& ctx, const TransformSet& train_set,
                 const TransformSet& eval_set) {
  validate_context(ctx);
  if (train_set.samples.empty() || eval_set.samples.empty())
    throw ParamError("attack run: transform pools must be non-empty");
  if (train_set.seed == eval_set.seed)
    throw ParamError("attack run: training and held-out pools must use distinct seeds");
}

// shared inner loop; the all-ones path (lambda = inf, weights null) and the
// curriculum path reduce identically so degenerate schedules replay the
// plain run bit-for-bit
struct LoopState {
  OptimizerState opt;
  Rng batch_rng;
  ConvergenceTrace trace;
  double pool_cache = 0.0;
  int global_iteration = 0;
};

void run_iteration(const AttackRunConfig& cfg, const AttackContext& ctx,
                   const TransformSet& train_set, const TransformSet& eval_set, LoopState& st,
                   int stage, double lambda, bool weighted) {
  if (st.global_iteration % cfg.pool_eval_interval == 0)
    st.pool_cache = pool_mean_loss(st.opt.delta, ctx, eval_set);

  const std::vector<int> idx =
      draw_batch(st.batch_rng, static_cast<int>(train_set.samples.size()), cfg.batch_size);
  const std::vector<TransformSample> batch = gather(train_set, idx);

  BatchEval be;
  if (weighted) {
    D2PContext d2p_ctx;
    const ImageTensor sticker_mapped =
        ctx.mapper ? d2p_forward(*ctx.mapper, st.opt.delta, d2p_ctx) : st.opt.delta;
    // weights come from the current per-sample losses at the stage lambda
    const int n = static_cast<int>(batch.size());
    std::vector<SampleEval> evals(n);
    parallel_samples(n, ctx.threads, [&](int i) {
      evals[i] = eval_sample(ctx, sticker_mapped, batch[i], true);
    });
    std::vector<double> losses(n);
    for (int i = 0; i < n; ++i) {
      if (!std::isfinite(evals[i].loss))
        throw EvalError("run_caa: non-finite loss at sample " + std::to_string(i));
      losses[i] = evals[i].loss;
    }
    const std::vector<double> w = caa_weights(losses, lambda);
    double loss_sum = 0.0, weight_sum = 0.0;
    std::vector<double> g_mapped(st.opt.delta.data.size(), 0.0);
    for (int i = 0; i < n; ++i) {
      loss_sum += w[i] * losses[i];
      weight_sum += w[i];
      for (std::size_t j = 0; j < g_mapped.size(); ++j) g_mapped[j] += w[i] * evals[i].grad[j];
    }
    be.attack_term = loss_sum / n;
    be.mean_weight = weight_sum / n;
    std::vector<double> g_delta;
    if (ctx.mapper) {
      for (double& g : g_mapped) g /= n;
      g_delta = d2p_backward(*ctx.mapper, d2p_ctx, g_mapped);
    } else {
      g_delta = std::move(g_mapped);
      for (double& g : g_delta) g /= n;
    }
    GradResult tv = tv_loss_grad(st.opt.delta);
    be.tv = tv.value;
    for (std::size_t j = 0; j < g_delta.size(); ++j) g_delta[j] += cfg.alpha * tv.grad[j];
    be.grad = std::move(g_delta);
  } else {
    be = batch_eval(st.opt.delta, ctx, batch, nullptr, cfg.alpha);
  }

  sgd_momentum_step(st.opt, be.grad);

  TraceRow row;
  row.iteration = st.global_iteration;
  row.stage = stage;
  row.lambda = lambda;
  row.mean_weight = be.mean_weight;
  row.pool_loss = st.pool_cache;
  row.batch_loss = be.attack_term;
  row.tv = be.tv;
  st.trace.append(row);

  ++st.global_iteration;
  if (cfg.snapshot_interval > 0 && cfg.snapshot_hook &&
      st.global_iteration % cfg.snapshot_interval == 0)
    cfg.snapshot_hook(st.global_iteration, st.opt.delta);
}

LoopState make_loop_state(const AttackRunConfig& cfg, const AttackContext& ctx) {
  LoopState st{OptimizerState{}, Rng(cfg.batch_seed), ConvergenceTrace{}, 0.0, 0};
  st.opt.delta = initial_sticker(ctx.mask.sticker_height, ctx.mask.sticker_width, cfg.init_seed);
  st.opt.momentum.assign(st.opt.delta.data.size(), 0.0);
  st.opt.lr = cfg.lr;
  st.opt.momentum_coef = cfg.momentum;
  return st;
}

}  // namespace

AttackResult run_eot(const AttackRunConfig& cfg, const AttackContext& ctx,
                     const TransformSet& train_set, const TransformSet& eval_set) {
  cfg.validate();
  check_pools(ctx, train_set, eval_set);

  LoopState st = make_loop_state(cfg, ctx);
  AttackResult result;
  result.initial_pool_loss = pool_mean_loss(st.opt.delta, ctx, eval_set);
  for (int it = 0; it < cfg.iterations; ++it)
    run_iteration(cfg, ctx, train_set, eval_set, st, 0, kInf, false);

  result.delta = std::move(st.opt.delta);
  result.trace = std::move(st.trace);
  result.final_pool_loss = pool_mean_loss(result.delta, ctx, eval_set);
  return result;
}

AttackResult run_caa(const AttackRunConfig& cfg, const AttackContext& ctx,
                     const TransformSet& train_set, const TransformSet& eval_set) {
  cfg.validate();
  cfg.schedule.validate();
  check_pools(ctx, train_set, eval_set);

  LoopState st = make_loop_state(cfg, ctx);
  AttackResult result;
  result.initial_pool_loss = pool_mean_loss(st.opt.delta, ctx, eval_set);

  double prev_lambda = 0.0;
  for (std::size_t t = 0; t < cfg.schedule.stages.size(); ++t) {
    const CurriculumStage& stage = cfg.schedule.stages[t];
    double lambda;
    bool all_ones;
    if (stage.beta >= 1.0) {
      lambda = kInf;
      all_ones = true;
    } else {
      const std::vector<double> losses = pool_losses(st.opt.delta, ctx, train_set);
      LambdaSolution sol = solve_lambda(losses, stage.beta);
      lambda = sol.lambda;
      all_ones = sol.all_ones;
    }
    // the curriculum threshold must keep growing even if pool losses dropped
    if (lambda <= prev_lambda) lambda = prev_lambda * (1.0 + 1e-9);
    if (!(lambda > prev_lambda)) throw EvalError("run_caa: lambda failed to increase");
    prev_lambda = lambda;

    for (int e = 0; e < stage.epochs; ++e)
      run_iteration(cfg, ctx, train_set, eval_set, st, static_cast<int>(t), lambda, !all_ones);
  }

  result.delta = std::move(st.opt.delta);
  result.trace = std::move(st.trace);
  result.final_pool_loss = pool_mean_loss(result.delta, ctx, eval_set);
  return result;
}

}  // namespace advsticker
