#include <benchmark/benchmark.h>

#include "advsticker/attack.hpp"
#include "advsticker/d2p.hpp"
#include "advsticker/embedding.hpp"
#include "advsticker/faces.hpp"
#include "advsticker/rng.hpp"
#include "advsticker/warp.hpp"

using namespace advsticker;

namespace {

struct Fixture {
  EmbeddingModel model;
  std::vector<ImageTensor> faces;
  AttackContext ctx;
  TransformSet train;
  ImageTensor delta;
  std::vector<TransformSample> batch;

  explicit Fixture(int face_size) {
    model = make_toy_model(7, face_size, 64);
    faces = make_face_set(face_size, 100, 4);
    ctx.model = &model;
    ctx.faces = &faces;
    ctx.anchor_embedding = embed(model, faces[0]);
    ctx.mask.sticker_height = face_size * 40 / 112;
    ctx.mask.sticker_width = std::min(face_size * 90 / 112, face_size - 2);
    ctx.mask.anchor_x = (face_size - ctx.mask.sticker_width) / 2;
    ctx.mask.anchor_y = face_size / 5;
    ctx.mask.face_height = face_size;
    ctx.mask.face_width = face_size;
    TransformRanges ranges;
    train = sample_transform_set(ranges, 64, 4, 21);
    delta = initial_sticker(ctx.mask.sticker_height, ctx.mask.sticker_width, 11);
    batch.assign(train.samples.begin(), train.samples.begin() + 8);
  }
};

Fixture& fixture(int size) {
  static Fixture f48(48);
  static Fixture f112(112);
  return size == 48 ? f48 : f112;
}

void BM_BilinearWarp(benchmark::State& state) {
  Rng rng(1);
  ImageTensor img(112, 112, 3);
  for (double& v : img.data) v = rng.uniform(0.0, 1.0);
  FaceTransformParams tb;
  tb.rotation_deg = 2.0;
  tb.scale = 1.03;
  for (auto _ : state) benchmark::DoNotOptimize(affine_photometric(img, tb));
}
BENCHMARK(BM_BilinearWarp);

void BM_RenderForward(benchmark::State& state) {
  Fixture& f = fixture(static_cast<int>(state.range(0)));
  const TransformSample& s = f.train.samples[0];
  NoiseSpec noise{0.0, 0.02, s.noise_seed};
  for (auto _ : state)
    benchmark::DoNotOptimize(
        render_forward(f.faces[s.face_index], f.delta, s.ta, s.tb, noise, f.ctx.mask, nullptr));
}
BENCHMARK(BM_RenderForward)->Arg(48)->Arg(112);

void BM_RenderBackward(benchmark::State& state) {
  Fixture& f = fixture(static_cast<int>(state.range(0)));
  const TransformSample& s = f.train.samples[0];
  NoiseSpec noise{0.0, 0.02, s.noise_seed};
  RenderContext ctx =
      render_forward(f.faces[s.face_index], f.delta, s.ta, s.tb, noise, f.ctx.mask, nullptr);
  std::vector<double> g(ctx.adversarial.data.size(), 1e-3);
  for (auto _ : state) benchmark::DoNotOptimize(render_backward(ctx, g, nullptr));
}
BENCHMARK(BM_RenderBackward)->Arg(48)->Arg(112);

void BM_Embed(benchmark::State& state) {
  Fixture& f = fixture(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(embed(f.model, f.faces[0]));
}
BENCHMARK(BM_Embed)->Arg(48)->Arg(112);

void BM_AttackIteration(benchmark::State& state) {
  Fixture& f = fixture(static_cast<int>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(eot_loss_and_grad(f.delta, f.ctx, f.batch, nullptr, 1e-5));
}
BENCHMARK(BM_AttackIteration)->Arg(48)->Arg(112)->Unit(benchmark::kMillisecond);

void BM_TotalVariationGrad(benchmark::State& state) {
  Rng rng(2);
  ImageTensor delta(40, 90, 3);
  for (double& v : delta.data) v = rng.uniform(0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(tv_loss_grad(delta));
}
BENCHMARK(BM_TotalVariationGrad);

void BM_D2PTrainEpochs(benchmark::State& state) {
  ColorPalette digital = make_digital_palette();
  ImageTensor sheet = palette_image(digital);
  ChannelParams channel;
  ColorPalette physical = extract_palette_from_photo(simulate_channel(sheet, channel, 1));
  D2PTrainConfig cfg;
  cfg.epochs = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(train_d2p(digital, physical, cfg));
}
BENCHMARK(BM_D2PTrainEpochs)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
