#include "advsticker/battery.hpp"

#include <cmath>

#include "advsticker/attack.hpp"
#include "advsticker/d2p.hpp"
#include "advsticker/embedding.hpp"
#include "advsticker/faces.hpp"
#include "advsticker/rng.hpp"
#include "advsticker/warp.hpp"

namespace advsticker {

namespace {

ImageTensor random_image(Rng& rng, int h, int w, int c, double lo, double hi) {
  ImageTensor img(h, w, c);
  for (double& v : img.data) v = rng.uniform(lo, hi);
  return img;
}

std::vector<double> random_weights(Rng& rng, std::size_t n) {
  std::vector<double> w(n);
  for (double& v : w) v = rng.uniform(-1.0, 1.0);
  return w;
}

D2PMapper battery_mapper(Rng& rng, int hidden) {
  // Small second-layer weights around a mid-gray bias keep the pre-clamp
  // output strictly inside (0, 1), away from the clamp kinks the finite
  // differences would trip over.
  D2PMapper m;
  m.hidden = hidden;
  m.w1.resize(static_cast<std::size_t>(hidden) * 3);
  m.b1.assign(static_cast<std::size_t>(hidden), 0.0);
  m.w2.resize(3 * static_cast<std::size_t>(hidden));
  m.b2.assign(3, 0.5);
  for (double& v : m.w1) v = rng.normal(0.0, 0.3);
  for (double& v : m.w2) v = rng.normal(0.0, 0.05);
  return m;
}

GradCheckReport worse(const GradCheckReport& a, const GradCheckReport& b) {
  GradCheckReport r = a.max_rel_err >= b.max_rel_err ? a : b;
  r.ok = a.ok && b.ok;
  r.coords_checked = a.coords_checked + b.coords_checked;
  return r;
}

GradCheckReport check_linear_warp(const WarpGrid& grid, const ImageTensor& base,
                                  const std::vector<double>& w, double tolerance,
                                  std::uint64_t seed) {
  ScalarDiffFn fn;
  fn.value = [grid, w](const ImageTensor& x) {
    ImageTensor out = bilinear_sample(x, grid);
    double s = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) s += w[i] * out.data[i];
    return s;
  };
  fn.gradient = [grid, w](const ImageTensor& x) {
    return bilinear_sample_adjoint(x.height, x.width, x.channels, grid, w);
  };
  return grad_check_report(fn, base, tolerance, seed);
}

}  // namespace

std::vector<BatteryCase> run_gradient_battery(int seeds, double tolerance) {
  std::vector<BatteryCase> cases;
  cases.reserve(16);  // add() hands out pointers into the vector
  auto add = [&cases](const std::string& name) -> GradCheckReport* {
    cases.push_back({name, {}});
    cases.back().report.ok = true;
    cases.back().report.max_rel_err = -1.0;
    return &cases.back().report;
  };

  GradCheckReport* bilinear = add("bilinear_sample");
  GradCheckReport* parabolic = add("parabolic_warp");
  GradCheckReport* placement = add("sticker_placement");
  GradCheckReport* photometric = add("photometric");
  GradCheckReport* mapper_case = add("color_mapper");
  GradCheckReport* tv_case = add("total_variation");
  GradCheckReport* embed_case = add("embedding");
  GradCheckReport* chain = add("render_chain");
  GradCheckReport* chain_mapper = add("render_chain_mapper");

  for (int s = 1; s <= seeds; ++s) {
    std::uint64_t seed = static_cast<std::uint64_t>(s);
    Rng rng(seed * 7919);

    {
      ImageTensor src = random_image(rng, 6, 7, 2, 0.0, 1.0);
      WarpGrid grid;
      grid.height = 5;
      grid.width = 5;
      for (int i = 0; i < 25; ++i) {
        grid.u.push_back(rng.uniform(-1.0, 7.0));
        grid.v.push_back(rng.uniform(-1.0, 6.0));
      }
      std::vector<double> w = random_weights(rng, 25 * 2);
      *bilinear = worse(*bilinear, check_linear_warp(grid, src, w, tolerance, seed));
    }

    {
      ImageTensor sticker = random_image(rng, 8, 10, 3, 0.0, 1.0);
      WarpGrid grid = parabolic_grid(8, 10, rng.uniform(-2.0, 2.0), rng.uniform(-0.05, 0.05));
      std::vector<double> w = random_weights(rng, sticker.data.size());
      *parabolic = worse(*parabolic, check_linear_warp(grid, sticker, w, tolerance, seed));
    }

    {
      MaskSpec spec;
      spec.sticker_height = 6;
      spec.sticker_width = 8;
      spec.anchor_x = 5;
      spec.anchor_y = 4;
      spec.face_height = 16;
      spec.face_width = 16;
      ImageTensor sticker = random_image(rng, 6, 8, 3, 0.0, 1.0);
      WarpGrid grid = sticker_placement_grid(spec, rng.uniform(-1.0, 1.0),
                                             rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
      std::vector<double> w = random_weights(rng, static_cast<std::size_t>(16 * 16 * 3));
      *placement = worse(*placement, check_linear_warp(grid, sticker, w, tolerance, seed));
    }

    {
      // Contrast/brightness chosen so no pre-clamp value sits near 0 or 1.
      ImageTensor face = random_image(rng, 12, 12, 3, 0.1, 0.8);
      FaceTransformParams tb;
      tb.rotation_deg = rng.uniform(-3.0, 3.0);
      tb.scale = rng.uniform(0.96, 1.05);
      tb.dx = rng.uniform(-1.0, 1.0);
      tb.dy = rng.uniform(-1.0, 1.0);
      tb.contrast = 0.8;
      tb.brightness = 0.05;
      std::vector<double> w = random_weights(rng, face.data.size());
      ScalarDiffFn fn;
      fn.value = [tb, w](const ImageTensor& x) {
        ImageTensor out = affine_photometric(x, tb);
        double acc = 0.0;
        for (std::size_t i = 0; i < out.data.size(); ++i) acc += w[i] * out.data[i];
        return acc;
      };
      fn.gradient = [tb, w](const ImageTensor& x) {
        WarpGrid grid = face_affine_grid(x.height, x.width, tb.rotation_deg, tb.scale, tb.dx,
                                         tb.dy);
        ImageTensor warped = bilinear_sample(x, grid);
        std::vector<double> gout(warped.data.size());
        for (std::size_t i = 0; i < gout.size(); ++i) {
          double pre = tb.contrast * warped.data[i] + tb.brightness;
          gout[i] = w[i] * tb.contrast * clamp01_grad_factor(pre);
        }
        return bilinear_sample_adjoint(x.height, x.width, x.channels, grid, gout);
      };
      *photometric = worse(*photometric, grad_check_report(fn, face, tolerance, seed));
    }

    {
      D2PMapper m = battery_mapper(rng, 7);
      ImageTensor img = random_image(rng, 4, 5, 3, 0.2, 0.8);
      std::vector<double> w = random_weights(rng, img.data.size());
      ScalarDiffFn fn;
      fn.value = [m, w](const ImageTensor& x) {
        D2PContext ctx;
        ImageTensor out = d2p_forward(m, x, ctx);
        double acc = 0.0;
        for (std::size_t i = 0; i < out.data.size(); ++i) acc += w[i] * out.data[i];
        return acc;
      };
      fn.gradient = [m, w](const ImageTensor& x) {
        D2PContext ctx;
        d2p_forward(m, x, ctx);
        return d2p_backward(m, ctx, w);
      };
      *mapper_case = worse(*mapper_case, grad_check_report(fn, img, tolerance, seed));
    }

    {
      // Keep neighbor differences away from zero: the TV root is smooth but
      // sharply curved there, which wrecks finite-difference accuracy long
      // before it says anything about the adjoint.
      ImageTensor delta(6, 7, 3);
      for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < 6; ++y)
          for (int x = 0; x < 7; ++x) {
            double v = rng.uniform(0.0, 1.0);
            while ((y > 0 && std::fabs(v - delta.at(y - 1, x, c)) < 0.03) ||
                   (x > 0 && std::fabs(v - delta.at(y, x - 1, c)) < 0.03))
              v = rng.uniform(0.0, 1.0);
            delta.at(y, x, c) = v;
          }
        // The far corner feeds two one-sided terms whose slopes are exactly
        // +-1; opposing signs make the loss locally flat there, which is a
        // subgradient convention rather than anything finite differences can
        // measure. Keep the two corner diffs on the same side.
        double up = delta.at(4, 6, c), left = delta.at(5, 6 - 1, c);
        double v = delta.at(5, 6, c);
        while (!(v < std::min(up, left) - 0.03 || v > std::max(up, left) + 0.03))
          v = rng.uniform(0.0, 1.0);
        delta.at(5, 6, c) = v;
      }
      ScalarDiffFn fn;
      fn.value = [](const ImageTensor& x) { return tv_loss(x); };
      fn.gradient = [](const ImageTensor& x) { return tv_loss_grad(x).grad; };
      *tv_case = worse(*tv_case, grad_check_report(fn, delta, tolerance, seed));
    }

    EmbeddingModel model = make_toy_model(seed, 32, 8);
    {
      ImageTensor img = random_image(rng, 32, 32, 3, 0.1, 0.9);
      std::vector<double> w = random_weights(rng, 8);
      ScalarDiffFn fn;
      fn.value = [&model, w](const ImageTensor& x) {
        std::vector<double> e = embed(model, x);
        double acc = 0.0;
        for (std::size_t i = 0; i < e.size(); ++i) acc += w[i] * e[i];
        return acc;
      };
      fn.gradient = [&model, w](const ImageTensor& x) {
        EmbedContext ctx;
        embed_forward(model, x, ctx);
        return embed_input_grad(model, ctx, w);
      };
      *embed_case = worse(*embed_case, grad_check_report(fn, img, tolerance, seed));
    }

    {
      std::vector<ImageTensor> faces = make_face_set(32, seed * 31 + 5, 2);
      std::vector<double> anchor = embed(model, faces[0]);

      AttackContext ctx;
      ctx.model = &model;
      ctx.faces = &faces;
      ctx.anchor_embedding = anchor;
      ctx.mask.sticker_height = 8;
      ctx.mask.sticker_width = 12;
      ctx.mask.anchor_x = 10;
      ctx.mask.anchor_y = 6;
      ctx.mask.face_height = 32;
      ctx.mask.face_width = 32;
      // tiny noise keeps every clamp comfortably away from its boundary
      ctx.noise_stddev = 0.001;
      ctx.mode = s % 2 ? AttackMode::kDodging : AttackMode::kImpersonation;

      TransformRanges ranges;
      ranges.tb_contrast_min = ranges.tb_contrast_max = 0.9;
      ranges.tb_brightness_min = ranges.tb_brightness_max = 0.02;
      TransformSet batch = sample_transform_set(ranges, 2, 2, seed * 17 + 3);
      ImageTensor delta = random_image(rng, 8, 12, 3, 0.25, 0.75);

      auto make_chain = [&ctx, &batch](const D2PMapper* mapper) {
        AttackContext local = ctx;
        local.mapper = mapper;
        std::vector<TransformSample> samples = batch.samples;
        ScalarDiffFn fn;
        fn.value = [local, samples](const ImageTensor& x) {
          return eot_loss_and_grad(x, local, samples, nullptr, 1e-5).value;
        };
        fn.gradient = [local, samples](const ImageTensor& x) {
          return eot_loss_and_grad(x, local, samples, nullptr, 1e-5).grad;
        };
        return fn;
      };

      *chain = worse(*chain, grad_check_report(make_chain(nullptr), delta, tolerance, seed));

      D2PMapper m = battery_mapper(rng, 6);
      *chain_mapper =
          worse(*chain_mapper, grad_check_report(make_chain(&m), delta, tolerance, seed));
    }
  }
  return cases;
}

bool battery_passed(const std::vector<BatteryCase>& cases) {
  for (const BatteryCase& c : cases)
    if (!c.report.ok) return false;
  return !cases.empty();
}

}  // namespace advsticker
