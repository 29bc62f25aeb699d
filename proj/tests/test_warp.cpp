#include <cmath>

#include "advsticker/d2p.hpp"
#include "advsticker/error.hpp"
#include "advsticker/grad_check.hpp"
#include "advsticker/rng.hpp"
#include "advsticker/warp.hpp"
#include "doctest.h"

using namespace advsticker;

namespace {

ImageTensor random_image(Rng& rng, int h, int w, int c, double lo = 0.0, double hi = 1.0) {
  ImageTensor img(h, w, c);
  for (double& v : img.data) v = rng.uniform(lo, hi);
  return img;
}

MaskSpec small_mask() {
  MaskSpec m;
  m.sticker_height = 6;
  m.sticker_width = 10;
  m.anchor_x = 4;
  m.anchor_y = 5;
  m.face_height = 20;
  m.face_width = 20;
  return m;
}

}  // namespace

TEST_CASE("parabolic grid is the identity at zero angle and rate") {
  WarpGrid g = parabolic_grid(7, 9, 0.0, 0.0);
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 9; ++x) {
      CHECK(g.u[g.index(y, x)] == doctest::Approx(x).epsilon(1e-15));
      CHECK(g.v[g.index(y, x)] == doctest::Approx(y).epsilon(1e-15));
    }
  Rng rng(2);
  ImageTensor img = random_image(rng, 7, 9, 3);
  ImageTensor out = parabolic_warp(img, 0.0, 0.0);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    CHECK(out.data[i] == doctest::Approx(img.data[i]).epsilon(1e-14));
}

TEST_CASE("parabolic bend displaces the outer column by rate times half-width squared") {
  // 400 columns, bending rate 1e-4: the parabola is centered at x = 200, so
  // column 0 samples 1e-4 * 200^2 = 4 rows away, for every row.
  WarpGrid g = parabolic_grid(40, 400, 0.0, 1e-4);
  for (int y = 0; y < 40; ++y) {
    CHECK(g.v[g.index(y, 0)] == doctest::Approx(y - 4.0).epsilon(1e-12));
    CHECK(g.v[g.index(y, 399)] ==
          doctest::Approx(y - 1e-4 * 199.0 * 199.0).epsilon(1e-12));
  }
  // center column is undisplaced
  for (int y = 0; y < 40; ++y) CHECK(g.v[g.index(y, 200)] == doctest::Approx(y).epsilon(1e-12));
}

TEST_CASE("parabolic pitch fixes the top row and compresses toward it") {
  // at 60 degrees sec = 2: the top row maps to itself, the bottom row maps to
  // itself, and the first row below the top samples twice as deep
  const int h = 11, w = 5;
  WarpGrid g = parabolic_grid(h, w, 60.0, 0.0);
  for (int x = 0; x < w; ++x) {
    CHECK(g.v[g.index(0, x)] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(g.v[g.index(h - 1, x)] == doctest::Approx(h - 1.0).epsilon(1e-12));
    double frac1 = 1.0 / (h - 1);
    CHECK(g.v[g.index(1, x)] == doctest::Approx(1.0 * (1.0 + 1.0 * (1.0 - frac1))).epsilon(1e-12));
  }
}

TEST_CASE("parabolic parameter validation") {
  CHECK_THROWS_AS(parabolic_grid(8, 10, 90.0, 0.0), ParamError);
  CHECK_THROWS_AS(parabolic_grid(8, 10, -95.0, 0.0), ParamError);
  // |rate| * (w/2)^2 = 0.4 * 25 = 10 >= height 8
  CHECK_THROWS_AS(parabolic_grid(8, 10, 0.0, 0.4), ParamError);
  CHECK_THROWS_AS(parabolic_grid(0, 10, 0.0, 0.0), ShapeError);
}

TEST_CASE("identity placement composites the sticker at its anchor") {
  MaskSpec m = small_mask();
  Rng rng(4);
  ImageTensor face = random_image(rng, 20, 20, 3);
  ImageTensor delta = random_image(rng, 6, 10, 3);
  StickerTransformParams ta;  // all zeros: no bend, no pitch, no move
  FaceTransformParams tb;     // identity affine, contrast 1, brightness 0
  NoiseSpec noise{0.0, 0.0, 1};

  ImageTensor adv = render_adversarial(face, delta, ta, tb, noise, m, nullptr);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) {
      bool inside = y >= m.anchor_y && y < m.anchor_y + m.sticker_height && x >= m.anchor_x &&
                    x < m.anchor_x + m.sticker_width;
      for (int c = 0; c < 3; ++c) {
        double want = inside ? delta.at(y - m.anchor_y, x - m.anchor_x, c) : face.at(y, x, c);
        CHECK(adv.at(y, x, c) == doctest::Approx(want).epsilon(1e-12));
      }
    }
}

TEST_CASE("sticker support never escapes the warped mask") {
  MaskSpec m = small_mask();
  Rng rng(9);
  ImageTensor face(20, 20, 3, 0.0);  // black face isolates the sticker term
  ImageTensor delta = random_image(rng, 6, 10, 3, 0.5, 1.0);
  StickerTransformParams ta;
  ta.parabolic_angle_deg = 1.5;
  ta.parabolic_rate = 1.8e-2;
  ta.rotation_deg = -0.8;
  ta.dx = 0.6;
  ta.dy = -0.9;
  FaceTransformParams tb;
  NoiseSpec noise{0.0, 0.0, 1};

  RenderContext ctx = render_forward(face, delta, ta, tb, noise, m, nullptr);
  // anywhere the mask is zero, the composite must be exactly the face (zero)
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x)
      if (ctx.mask_warped.at(y, x, 0) == 0.0)
        for (int c = 0; c < 3; ++c) CHECK(ctx.adversarial.at(y, x, c) == 0.0);
  // and the mask itself stays within [0, 1]
  for (double v : ctx.mask_warped.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0 + 1e-12);
  }
}

TEST_CASE("initial mask is the axis-aligned sticker rectangle") {
  MaskSpec m = small_mask();
  ImageTensor mask = make_initial_mask(m);
  double total = 0.0;
  for (double v : mask.data) total += v;
  CHECK(total == doctest::Approx(6.0 * 10.0).epsilon(1e-15));
  CHECK(mask.at(5, 4, 0) == 1.0);
  CHECK(mask.at(4, 4, 0) == 0.0);
  CHECK(mask.at(10, 13, 0) == 1.0);
  CHECK(mask.at(11, 13, 0) == 0.0);

  MaskSpec bad = m;
  bad.anchor_x = 15;  // 15 + 10 > 20
  CHECK_THROWS_AS(make_initial_mask(bad), ParamError);
}

TEST_CASE("photometric transform clamps into the unit range") {
  ImageTensor img(3, 3, 1, 0.9);
  FaceTransformParams tb;
  tb.contrast = 3.0;
  ImageTensor out = affine_photometric(img, tb);
  CHECK(out.at(1, 1, 0) == 1.0);
  tb.contrast = 1.0;
  tb.brightness = -2.0;
  out = affine_photometric(img, tb);
  CHECK(out.at(1, 1, 0) == 0.0);
}

TEST_CASE("gaussian noise is seeded and clamped") {
  ImageTensor img(4, 4, 3, 0.5);
  NoiseSpec n{0.0, 0.2, 77};
  ImageTensor a = add_gaussian_noise(img, n);
  ImageTensor b = add_gaussian_noise(img, n);
  for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == b.data[i]);
  n.seed = 78;
  ImageTensor c = add_gaussian_noise(img, n);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.data.size(); ++i) any_diff |= a.data[i] != c.data[i];
  CHECK(any_diff);
  for (double v : a.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("rendering through the mapper equals mapping the sticker first") {
  MaskSpec m = small_mask();
  Rng rng(12);
  ImageTensor face = random_image(rng, 20, 20, 3);
  ImageTensor delta = random_image(rng, 6, 10, 3);

  D2PMapper mapper;
  mapper.hidden = 5;
  mapper.w1.resize(15);
  mapper.b1.assign(5, 0.0);
  mapper.w2.resize(15);
  mapper.b2.assign(3, 0.5);
  for (double& v : mapper.w1) v = rng.normal(0.0, 0.4);
  for (double& v : mapper.w2) v = rng.normal(0.0, 0.1);

  StickerTransformParams ta;
  ta.parabolic_angle_deg = -1.0;
  ta.parabolic_rate = 6e-3;
  ta.rotation_deg = 0.7;
  ta.dx = -0.4;
  ta.dy = 0.2;
  FaceTransformParams tb;
  tb.rotation_deg = 2.0;
  tb.scale = 1.03;
  tb.dx = 1.1;
  tb.dy = -0.6;
  tb.contrast = 0.9;
  tb.brightness = 0.05;
  NoiseSpec noise{0.0, 0.01, 5};

  ImageTensor direct = render_adversarial(face, delta, ta, tb, noise, m, &mapper);
  ImageTensor premapped = render_adversarial(face, apply_d2p(mapper, delta), ta, tb, noise, m,
                                             nullptr);
  for (std::size_t i = 0; i < direct.data.size(); ++i)
    CHECK(direct.data[i] == premapped.data[i]);
}

TEST_CASE("render gradient of a region mean matches finite differences") {
  MaskSpec m = small_mask();
  Rng rng(21);
  ImageTensor face = random_image(rng, 20, 20, 3, 0.1, 0.85);
  ImageTensor delta = random_image(rng, 6, 10, 3, 0.25, 0.75);

  StickerTransformParams ta;
  ta.parabolic_angle_deg = 1.2;
  ta.parabolic_rate = -8e-3;
  ta.rotation_deg = -0.5;
  ta.dx = 0.3;
  ta.dy = -0.7;
  FaceTransformParams tb;
  tb.rotation_deg = -2.0;
  tb.scale = 0.98;
  tb.dx = -0.8;
  tb.dy = 0.4;
  tb.contrast = 0.9;
  tb.brightness = 0.03;
  NoiseSpec noise{0.0, 0.001, 3};

  // mean over the central 10x10 window of the rendered image
  auto region_mean = [&](const RenderContext& ctx) {
    double s = 0.0;
    for (int y = 5; y < 15; ++y)
      for (int x = 5; x < 15; ++x)
        for (int c = 0; c < 3; ++c) s += ctx.adversarial.at(y, x, c);
    return s / 300.0;
  };

  ScalarDiffFn fn;
  fn.value = [&](const ImageTensor& x) {
    RenderContext ctx = render_forward(face, x, ta, tb, noise, m, nullptr);
    return region_mean(ctx);
  };
  fn.gradient = [&](const ImageTensor& x) {
    RenderContext ctx = render_forward(face, x, ta, tb, noise, m, nullptr);
    std::vector<double> g(ctx.adversarial.data.size(), 0.0);
    for (int y = 5; y < 15; ++y)
      for (int x2 = 5; x2 < 15; ++x2)
        for (int c = 0; c < 3; ++c)
          g[(static_cast<std::size_t>(y) * 20 + x2) * 3 + c] = 1.0 / 300.0;
    return render_backward(ctx, g, nullptr);
  };
  CHECK(grad_check(fn, delta, 1e-4, 6));
}

TEST_CASE("render_backward demands the mapper it rendered with") {
  MaskSpec m = small_mask();
  Rng rng(30);
  ImageTensor face = random_image(rng, 20, 20, 3);
  ImageTensor delta = random_image(rng, 6, 10, 3);
  D2PMapper mapper;
  mapper.hidden = 3;
  mapper.w1.assign(9, 0.1);
  mapper.b1.assign(3, 0.0);
  mapper.w2.assign(9, 0.1);
  mapper.b2.assign(3, 0.4);

  RenderContext ctx = render_forward(face, delta, {}, {}, {0.0, 0.0, 1}, m, &mapper);
  std::vector<double> g(ctx.adversarial.data.size(), 1.0);
  CHECK_THROWS_AS(render_backward(ctx, g, nullptr), ParamError);
  CHECK_NOTHROW(render_backward(ctx, g, &mapper));
}

TEST_CASE("render shape validation") {
  MaskSpec m = small_mask();
  ImageTensor face(20, 20, 3, 0.5);
  ImageTensor wrong(5, 10, 3, 0.5);
  CHECK_THROWS_AS(render_adversarial(face, wrong, {}, {}, {0.0, 0.0, 1}, m, nullptr),
                  ShapeError);
  ImageTensor small_face(16, 20, 3, 0.5);
  ImageTensor delta(6, 10, 3, 0.5);
  CHECK_THROWS_AS(render_adversarial(small_face, delta, {}, {}, {0.0, 0.0, 1}, m, nullptr),
                  ShapeError);
}
