#include <cmath>
#include <limits>
#include <vector>

#include "advsticker/attack.hpp"
#include "advsticker/error.hpp"
#include "advsticker/faces.hpp"
#include "advsticker/rng.hpp"
#include "doctest.h"

using namespace advsticker;

namespace {

// Independent oracle: the per-sample weight minimizes
//   f(w) = w * loss + lambda * (w^2 / 2 - w)  over w in [0, 1].
// f is strictly convex in w, so ternary search nails the minimizer.
double brute_force_weight(double loss, double lambda) {
  auto f = [&](double w) { return w * loss + lambda * (0.5 * w * w - w); };
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    double m1 = lo + (hi - lo) / 3.0;
    double m2 = hi - (hi - lo) / 3.0;
    if (f(m1) < f(m2))
      hi = m2;
    else
      lo = m1;
  }
  return 0.5 * (lo + hi);
}

struct SmallSetup {
  EmbeddingModel model;
  std::vector<ImageTensor> faces;
  AttackContext ctx;
  TransformSet train;
  TransformSet eval;

  SmallSetup() {
    model = make_toy_model(3, 32, 8);
    faces = make_face_set(32, 500, 2);
    ctx.model = &model;
    ctx.faces = &faces;
    ctx.anchor_embedding = embed(model, faces[0]);
    ctx.mask.sticker_height = 6;
    ctx.mask.sticker_width = 10;
    ctx.mask.anchor_x = 11;
    ctx.mask.anchor_y = 8;
    ctx.mask.face_height = 32;
    ctx.mask.face_width = 32;
    ctx.noise_stddev = 0.005;
    TransformRanges ranges;
    ranges.ta_rate_min = -1e-4;
    ranges.ta_rate_max = 1e-4;
    train = sample_transform_set(ranges, 8, 2, 61);
    eval = sample_transform_set(ranges, 6, 2, 62);
  }
};

AttackRunConfig tiny_run(int iterations) {
  AttackRunConfig cfg;
  cfg.iterations = iterations;
  cfg.batch_size = 4;
  cfg.pool_eval_interval = 5;
  cfg.alpha = 1e-5;
  return cfg;
}

}  // namespace

TEST_CASE("total variation oracles") {
  ImageTensor flat(5, 7, 3, 0.42);
  CHECK(tv_loss(flat) == 0.0);
  GradResult g = tv_loss_grad(flat);
  CHECK(g.value == 0.0);
  for (double v : g.grad) CHECK(v == 0.0);

  // checkerboard 2x2: sqrt(1 + 1) from the corner pixel, 1 from each of the
  // two one-neighbor pixels
  ImageTensor cb(2, 2, 1);
  cb.data = {0.0, 1.0, 1.0, 0.0};
  CHECK(tv_loss(cb) == doctest::Approx(std::sqrt(2.0) + 2.0).epsilon(1e-12));

  // channels sum independently
  ImageTensor two(2, 2, 2);
  two.data = {0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0};
  CHECK(tv_loss(two) == doctest::Approx(2.0 * (std::sqrt(2.0) + 2.0)).epsilon(1e-12));

  Rng rng(3);
  ImageTensor r(6, 8, 3);
  for (double& v : r.data) v = rng.uniform(0.0, 1.0);
  GradResult gr = tv_loss_grad(r);
  CHECK(gr.value == tv_loss(r));
  REQUIRE(gr.grad.size() == r.data.size());
}

TEST_CASE("curriculum weights match the brute-force scan") {
  // 50 x 50 grid over loss and lambda
  for (int i = 0; i < 50; ++i) {
    double loss = 3.0 * i / 49.0;
    std::vector<double> losses{loss};
    for (int j = 0; j < 50; ++j) {
      double lambda = 0.05 + (5.0 - 0.05) * j / 49.0;
      std::vector<double> w = caa_weights(losses, lambda);
      REQUIRE(w.size() == 1);
      CHECK(std::abs(w[0] - brute_force_weight(loss, lambda)) < 1e-6);
    }
  }
  // infinite lambda: everything weighs 1
  std::vector<double> w =
      caa_weights({0.1, 5.0, 100.0}, std::numeric_limits<double>::infinity());
  for (double v : w) CHECK(v == 1.0);
  CHECK_THROWS_AS(caa_weights({0.5}, 0.0), ParamError);
  CHECK_THROWS_AS(caa_weights({-0.5}, 1.0), ParamError);
}

TEST_CASE("lambda solver hits the target proportion") {
  // uniform losses: mean weight 1 - 0.4/lambda = 0.5 at lambda = 0.8
  std::vector<double> uniform(10, 0.4);
  LambdaSolution sol = solve_lambda(uniform, 0.5);
  CHECK_FALSE(sol.all_ones);
  CHECK(std::abs(sol.achieved - 0.5) <= 1e-3);
  CHECK(sol.lambda == doctest::Approx(0.8).epsilon(2e-2));

  // clamp-active case: at lambda = 2.6 the weights are
  // {1-0.2/2.6, 1-0.4/2.6, 1-2.0/2.6, clamp(1-4.0/2.6)} with mean exactly 0.5
  std::vector<double> mixed{0.2, 0.4, 2.0, 4.0};
  sol = solve_lambda(mixed, 0.5);
  CHECK(std::abs(sol.achieved - 0.5) <= 1e-3);
  CHECK(sol.lambda == doctest::Approx(2.6).epsilon(2e-2));
  std::vector<double> w = caa_weights(mixed, sol.lambda);
  CHECK(w[0] == doctest::Approx(1.0 - 0.2 / 2.6).epsilon(5e-3));
  CHECK(w[1] == doctest::Approx(1.0 - 0.4 / 2.6).epsilon(5e-3));
  CHECK(w[2] == doctest::Approx(1.0 - 2.0 / 2.6).epsilon(5e-2));
  CHECK(w[3] == 0.0);

  // beta = 1 short-circuits
  sol = solve_lambda(mixed, 1.0);
  CHECK(sol.all_ones);
  CHECK(std::isinf(sol.lambda));
  CHECK(sol.achieved == 1.0);

  // all-zero losses: any lambda gives weight 1
  sol = solve_lambda(std::vector<double>(4, 0.0), 0.7);
  CHECK(sol.all_ones);

  CHECK_THROWS_AS(solve_lambda({}, 0.5), ParamError);
  CHECK_THROWS_AS(solve_lambda({0.4}, 0.0), ParamError);
  CHECK_THROWS_AS(solve_lambda({0.4}, 1.5), ParamError);
}

TEST_CASE("sgd momentum recurrence and projection") {
  OptimizerState st;
  st.delta = ImageTensor(1, 2, 1, 0.5);
  st.momentum.assign(2, 0.0);
  st.lr = 0.1;
  st.momentum_coef = 0.95;
  std::vector<double> g{0.2, -0.2};
  sgd_momentum_step(st, g);
  CHECK(st.delta.data[0] == doctest::Approx(0.5 - 0.1 * 0.2).epsilon(1e-15));
  sgd_momentum_step(st, g);
  // buffer after two steps: g + (mu*g + g) accumulated
  CHECK(st.delta.data[0] ==
        doctest::Approx(0.5 - 0.1 * 0.2 - 0.1 * 1.95 * 0.2).epsilon(1e-14));
  CHECK(st.delta.data[1] ==
        doctest::Approx(0.5 + 0.1 * 0.2 + 0.1 * 1.95 * 0.2).epsilon(1e-14));

  // projection pins the box
  OptimizerState near_edge;
  near_edge.delta = ImageTensor(1, 1, 1, 0.01);
  near_edge.momentum.assign(1, 0.0);
  near_edge.lr = 1.0;
  sgd_momentum_step(near_edge, {5.0});
  CHECK(near_edge.delta.data[0] == 0.0);

  OptimizerState bad;
  bad.delta = ImageTensor(1, 1, 1, 0.5);
  bad.momentum.assign(1, 0.0);
  sgd_momentum_step(bad, {1.0});
  CHECK_THROWS_AS(sgd_momentum_step(bad, {1.0, 2.0}), ShapeError);
  OptimizerState unsized;
  unsized.delta = ImageTensor(1, 2, 1, 0.5);
  CHECK_THROWS_AS(sgd_momentum_step(unsized, {1.0, 2.0}), ShapeError);
}

TEST_CASE("transform sampling stays on the declared grid") {
  TransformRanges ranges;  // defaults, 21 levels
  TransformSet set = sample_transform_set(ranges, 64, 3, 99);
  REQUIRE(set.samples.size() == 64);

  auto on_grid = [&](double v, double lo, double hi) {
    double step = (hi - lo) / (ranges.grid_levels - 1);
    double k = (v - lo) / step;
    return std::abs(k - std::round(k)) < 1e-9;
  };
  for (const TransformSample& s : set.samples) {
    CHECK(s.face_index >= 0);
    CHECK(s.face_index < 3);
    CHECK(on_grid(s.ta.parabolic_angle_deg, ranges.ta_angle_min, ranges.ta_angle_max));
    CHECK(on_grid(s.ta.parabolic_rate, ranges.ta_rate_min, ranges.ta_rate_max));
    CHECK(on_grid(s.ta.rotation_deg, ranges.ta_rotation_min, ranges.ta_rotation_max));
    CHECK(on_grid(s.tb.rotation_deg, ranges.tb_rotation_min, ranges.tb_rotation_max));
    CHECK(on_grid(s.tb.scale, ranges.tb_scale_min, ranges.tb_scale_max));
    CHECK(on_grid(s.tb.contrast, ranges.tb_contrast_min, ranges.tb_contrast_max));
    CHECK(on_grid(s.tb.brightness, ranges.tb_brightness_min, ranges.tb_brightness_max));
  }

  TransformSet again = sample_transform_set(ranges, 64, 3, 99);
  for (std::size_t i = 0; i < 64; ++i) {
    CHECK(set.samples[i].face_index == again.samples[i].face_index);
    CHECK(set.samples[i].noise_seed == again.samples[i].noise_seed);
    CHECK(set.samples[i].tb.contrast == again.samples[i].tb.contrast);
  }
}

TEST_CASE("collapsed ranges still consume their draws") {
  TransformRanges a;
  TransformRanges b = a;
  b.tb_contrast_min = b.tb_contrast_max = 0.8;  // collapse one parameter
  TransformSet sa = sample_transform_set(a, 16, 2, 7);
  TransformSet sb = sample_transform_set(b, 16, 2, 7);
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(sb.samples[i].tb.contrast == 0.8);
    // every other draw lands identically because the stream position matches
    CHECK(sa.samples[i].face_index == sb.samples[i].face_index);
    CHECK(sa.samples[i].ta.parabolic_rate == sb.samples[i].ta.parabolic_rate);
    CHECK(sa.samples[i].tb.brightness == sb.samples[i].tb.brightness);
    CHECK(sa.samples[i].noise_seed == sb.samples[i].noise_seed);
  }
}

TEST_CASE("schedule validation") {
  CurriculumSchedule s;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.stages = {{0.5, 100}, {0.8, 100}, {1.0, 200}};
  CHECK_NOTHROW(s.validate());
  CHECK(s.total_epochs() == 400);
  s.stages = {{0.8, 100}, {0.5, 100}};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.stages = {{0.5, 100}, {1.2, 100}};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.stages = {{0.5, 0}};
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("trace append demands increasing iterations") {
  ConvergenceTrace t;
  TraceRow r;
  r.iteration = 0;
  t.append(r);
  r.iteration = 5;
  t.append(r);
  CHECK_THROWS_AS(t.append(r), ParamError);
}

TEST_CASE("unit weights reproduce the unweighted objective bitwise") {
  SmallSetup s;
  ImageTensor delta = initial_sticker(6, 10, 11);
  std::vector<TransformSample> batch(s.train.samples.begin(), s.train.samples.begin() + 4);

  GradResult plain = eot_loss_and_grad(delta, s.ctx, batch, nullptr, 1e-5);
  std::vector<double> ones(4, 1.0);
  GradResult weighted = eot_loss_and_grad(delta, s.ctx, batch, &ones, 1e-5);
  CHECK(plain.value == weighted.value);
  for (std::size_t i = 0; i < plain.grad.size(); ++i) CHECK(plain.grad[i] == weighted.grad[i]);

  // halving every weight halves the attack term exactly (0.5 is a power of
  // two, so no rounding enters)
  GradResult base = eot_loss_and_grad(delta, s.ctx, batch, nullptr, 0.0);
  std::vector<double> halves(4, 0.5);
  GradResult half = eot_loss_and_grad(delta, s.ctx, batch, &halves, 0.0);
  CHECK(half.value == 0.5 * base.value);
  for (std::size_t i = 0; i < base.grad.size(); ++i) CHECK(half.grad[i] == 0.5 * base.grad[i]);
}

TEST_CASE("pool losses are per-sample attack losses") {
  SmallSetup s;
  ImageTensor delta = initial_sticker(6, 10, 11);
  std::vector<double> losses = pool_losses(delta, s.ctx, s.train);
  REQUIRE(losses.size() == s.train.samples.size());
  double mean = 0.0;
  for (double v : losses) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    mean += v;
  }
  mean /= losses.size();
  CHECK(pool_mean_loss(delta, s.ctx, s.train) == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("attack runs reject shared pool seeds") {
  SmallSetup s;
  TransformSet same = s.train;
  AttackRunConfig cfg = tiny_run(4);
  CHECK_THROWS_AS(run_eot(cfg, s.ctx, s.train, same), ParamError);
}

TEST_CASE("degenerate single-stage curriculum reproduces plain optimization bitwise") {
  SmallSetup s;
  AttackRunConfig cfg = tiny_run(20);

  AttackResult eot = run_eot(cfg, s.ctx, s.train, s.eval);

  AttackRunConfig caa_cfg = cfg;
  caa_cfg.schedule.stages = {{1.0, 20}};
  AttackResult caa = run_caa(caa_cfg, s.ctx, s.train, s.eval);

  REQUIRE(eot.delta.data.size() == caa.delta.data.size());
  for (std::size_t i = 0; i < eot.delta.data.size(); ++i)
    CHECK(eot.delta.data[i] == caa.delta.data[i]);
  REQUIRE(eot.trace.rows.size() == caa.trace.rows.size());
  for (std::size_t i = 0; i < eot.trace.rows.size(); ++i) {
    const TraceRow& a = eot.trace.rows[i];
    const TraceRow& b = caa.trace.rows[i];
    CHECK(a.iteration == b.iteration);
    CHECK(a.stage == b.stage);
    CHECK((std::isinf(a.lambda) && std::isinf(b.lambda)));
    CHECK(a.mean_weight == b.mean_weight);
    CHECK(a.pool_loss == b.pool_loss);
    CHECK(a.batch_loss == b.batch_loss);
    CHECK(a.tv == b.tv);
  }
  CHECK(eot.final_pool_loss == caa.final_pool_loss);
}

TEST_CASE("curriculum stages report their lambda and mean weight") {
  SmallSetup s;
  AttackRunConfig cfg = tiny_run(12);
  cfg.schedule.stages = {{0.5, 4}, {0.8, 4}, {1.0, 4}};
  AttackResult res = run_caa(cfg, s.ctx, s.train, s.eval);

  REQUIRE(res.trace.rows.size() == 12);
  double prev_lambda = 0.0;
  for (const TraceRow& row : res.trace.rows) {
    if (row.stage == 0) CHECK(std::abs(row.mean_weight - 0.5) < 0.2);
    if (row.stage == 2) {
      CHECK(std::isinf(row.lambda));
      CHECK(row.mean_weight == 1.0);
    }
    if (row.iteration % 4 == 0 && !std::isinf(row.lambda)) {
      CHECK(row.lambda > prev_lambda);
      prev_lambda = row.lambda;
    }
    CHECK(row.tv >= 0.0);
  }
  // stage boundaries at iterations 4 and 8
  CHECK(res.trace.rows[0].stage == 0);
  CHECK(res.trace.rows[4].stage == 1);
  CHECK(res.trace.rows[8].stage == 2);
}

TEST_CASE("short optimization already lowers the batch objective") {
  SmallSetup s;
  AttackRunConfig cfg = tiny_run(30);
  cfg.pool_eval_interval = 10;
  AttackResult res = run_eot(cfg, s.ctx, s.train, s.eval);
  CHECK(res.initial_pool_loss == res.trace.rows.front().pool_loss);
  CHECK(res.final_pool_loss <= res.initial_pool_loss + 1e-6);
  // sticker stays a valid image
  for (double v : res.delta.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("initial sticker is mid-gray with small jitter") {
  ImageTensor d = initial_sticker(8, 12, 3);
  for (double v : d.data) CHECK(std::abs(v - 0.5) < 0.1);
  ImageTensor d2 = initial_sticker(8, 12, 3);
  for (std::size_t i = 0; i < d.data.size(); ++i) CHECK(d.data[i] == d2.data[i]);
  ImageTensor d3 = initial_sticker(8, 12, 4);
  bool any_diff = false;
  for (std::size_t i = 0; i < d.data.size(); ++i) any_diff |= d.data[i] != d3.data[i];
  CHECK(any_diff);
}
