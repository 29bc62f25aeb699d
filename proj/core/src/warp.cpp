#include "advsticker/warp.hpp"

#include <cmath>
#include <numbers>

#include "advsticker/d2p.hpp"
#include "advsticker/rng.hpp"

namespace advsticker {

namespace {
double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
}  // namespace

void MaskSpec::validate() const {
  if (sticker_height <= 0 || sticker_width <= 0 || face_height <= 0 || face_width <= 0)
    throw ShapeError("MaskSpec: non-positive dimensions");
  if (anchor_x < 0 || anchor_y < 0 || anchor_x + sticker_width > face_width ||
      anchor_y + sticker_height > face_height)
    throw ParamError("MaskSpec: sticker rectangle must lie inside the face canvas");
}

WarpGrid parabolic_grid(int height, int width, double angle_deg, double rate) {
  if (height <= 0 || width <= 0) throw ShapeError("parabolic_grid: empty image");
  if (std::abs(angle_deg) >= 90.0) throw ParamError("parabolic_grid: |angle| must be < 90 deg");
  const double cx = width / 2.0;
  const double max_disp = std::abs(rate) * cx * cx;
  if (max_disp >= height)
    throw ParamError("parabolic_grid: parabolic displacement exceeds image height");

  const double sec = 1.0 / std::cos(deg2rad(angle_deg));
  WarpGrid grid(height, width);
  for (int y = 0; y < height; ++y) {
    // inverse pitch map: top edge fixed, local compression cos(angle) at the
    // top relaxing to ~1 at the bottom, exact identity at angle = 0
    const double frac = height > 1 ? static_cast<double>(y) / (height - 1) : 0.0;
    const double v_pitch = y * (1.0 + (sec - 1.0) * (1.0 - frac));
    for (int x = 0; x < width; ++x) {
      const double dx = x - cx;
      const std::size_t gi = grid.index(y, x);
      grid.u[gi] = x;
      grid.v[gi] = v_pitch - rate * dx * dx;
    }
  }
  return grid;
}

ImageTensor parabolic_warp(const ImageTensor& img, double angle_deg, double rate) {
  return bilinear_sample(img, parabolic_grid(img.height, img.width, angle_deg, rate));
}

WarpGrid sticker_placement_grid(const MaskSpec& spec, double rotation_deg, double dx, double dy) {
  spec.validate();
  const double th = deg2rad(rotation_deg);
  const double c = std::cos(th);
  const double s = std::sin(th);
  const double scx = (spec.sticker_width - 1) / 2.0;
  const double scy = (spec.sticker_height - 1) / 2.0;
  WarpGrid grid(spec.face_height, spec.face_width);
  for (int y = 0; y < spec.face_height; ++y) {
    for (int x = 0; x < spec.face_width; ++x) {
      // undo translation and anchor, then rotate back about the sticker center
      const double rx = x - spec.anchor_x - dx - scx;
      const double ry = y - spec.anchor_y - dy - scy;
      const std::size_t gi = grid.index(y, x);
      grid.u[gi] = c * rx + s * ry + scx;
      grid.v[gi] = -s * rx + c * ry + scy;
    }
  }
  return grid;
}

WarpGrid face_affine_grid(int height, int width, double rotation_deg, double scale, double dx,
                          double dy) {
  if (height <= 0 || width <= 0) throw ShapeError("face_affine_grid: empty image");
  if (!(scale > 0.0)) throw ParamError("face_affine_grid: scale must be positive");
  const double th = deg2rad(rotation_deg);
  const double c = std::cos(th);
  const double s = std::sin(th);
  const double ccx = (width - 1) / 2.0;
  const double ccy = (height - 1) / 2.0;
  WarpGrid grid(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double rx = (x - ccx - dx) / scale;
      const double ry = (y - ccy - dy) / scale;
      const std::size_t gi = grid.index(y, x);
      grid.u[gi] = c * rx + s * ry + ccx;
      grid.v[gi] = -s * rx + c * ry + ccy;
    }
  }
  return grid;
}

ImageTensor affine_photometric(const ImageTensor& img, const FaceTransformParams& params) {
  ImageTensor out = bilinear_sample(
      img, face_affine_grid(img.height, img.width, params.rotation_deg, params.scale, params.dx,
                            params.dy));
  for (double& v : out.data) v = clamp01(params.contrast * v + params.brightness);
  return out;
}

ImageTensor composite(const ImageTensor& face, const ImageTensor& sticker_warped,
                      const ImageTensor& mask_warped) {
  if (!face.same_shape(sticker_warped))
    throw ShapeError("composite: face and sticker dimensions differ");
  if (mask_warped.height != face.height || mask_warped.width != face.width ||
      (mask_warped.channels != 1 && mask_warped.channels != face.channels))
    throw ShapeError("composite: mask dimensions differ");

  ImageTensor out(face.height, face.width, face.channels);
  for (int y = 0; y < face.height; ++y) {
    for (int x = 0; x < face.width; ++x) {
      for (int c = 0; c < face.channels; ++c) {
        const double m = mask_warped.at(y, x, mask_warped.channels == 1 ? 0 : c);
        out.at(y, x, c) = (1.0 - m) * face.at(y, x, c) + m * sticker_warped.at(y, x, c);
      }
    }
  }
  return out;
}

ImageTensor make_initial_mask(const MaskSpec& spec) {
  spec.validate();
  ImageTensor mask(spec.face_height, spec.face_width, 1);
  for (int y = spec.anchor_y; y < spec.anchor_y + spec.sticker_height; ++y)
    for (int x = spec.anchor_x; x < spec.anchor_x + spec.sticker_width; ++x)
      mask.at(y, x, 0) = 1.0;
  return mask;
}

ImageTensor add_gaussian_noise(const ImageTensor& img, const NoiseSpec& noise) {
  ImageTensor out = img;
  Rng rng(noise.seed);
  for (double& v : out.data) v = clamp01(v + rng.normal(noise.mean, noise.stddev));
  return out;
}

RenderContext render_forward(const ImageTensor& face, const ImageTensor& sticker_delta,
                             const StickerTransformParams& ta, const FaceTransformParams& tb,
                             const NoiseSpec& noise, const MaskSpec& mask,
                             const D2PMapper* mapper) {
  mask.validate();
  if (sticker_delta.height != mask.sticker_height || sticker_delta.width != mask.sticker_width)
    throw ShapeError("render_forward: sticker dimensions disagree with the mask spec");
  if (face.height != mask.face_height || face.width != mask.face_width)
    throw ShapeError("render_forward: face dimensions disagree with the mask spec");
  if (face.channels != sticker_delta.channels)
    throw ShapeError("render_forward: face and sticker channel counts differ");

  RenderContext ctx;
  ctx.used_mapper = mapper != nullptr;
  ctx.sticker_height = sticker_delta.height;
  ctx.sticker_width = sticker_delta.width;
  ctx.contrast = tb.contrast;

  if (mapper) {
    D2PContext dctx;
    ctx.sticker_mapped = d2p_forward(*mapper, sticker_delta, dctx);
    ctx.d2p_hidden = std::move(dctx.hidden);
    ctx.d2p_pre_clamp = std::move(dctx.pre_clamp);
  } else {
    ctx.sticker_mapped = sticker_delta;
  }

  ctx.grid_parabolic = parabolic_grid(sticker_delta.height, sticker_delta.width,
                                      ta.parabolic_angle_deg, ta.parabolic_rate);
  ctx.grid_placement = sticker_placement_grid(mask, ta.rotation_deg, ta.dx, ta.dy);

  const ImageTensor sticker_bent = bilinear_sample(ctx.sticker_mapped, ctx.grid_parabolic);
  const ImageTensor sticker_placed = bilinear_sample(sticker_bent, ctx.grid_placement);

  const ImageTensor ones(sticker_delta.height, sticker_delta.width, 1, 1.0);
  const ImageTensor mask_bent = bilinear_sample(ones, ctx.grid_parabolic);
  ctx.mask_warped = bilinear_sample(mask_bent, ctx.grid_placement);

  const ImageTensor merged = composite(face, sticker_placed, ctx.mask_warped);

  ctx.grid_face = face_affine_grid(face.height, face.width, tb.rotation_deg, tb.scale, tb.dx,
                                   tb.dy);
  ImageTensor warped = bilinear_sample(merged, ctx.grid_face);

  ctx.photometric_pre_clamp.resize(warped.data.size());
  for (std::size_t i = 0; i < warped.data.size(); ++i) {
    const double pre = tb.contrast * warped.data[i] + tb.brightness;
    ctx.photometric_pre_clamp[i] = pre;
    warped.data[i] = clamp01(pre);
  }

  Rng rng(noise.seed);
  ctx.noise_pre_clamp.resize(warped.data.size());
  for (std::size_t i = 0; i < warped.data.size(); ++i) {
    const double pre = warped.data[i] + rng.normal(noise.mean, noise.stddev);
    ctx.noise_pre_clamp[i] = pre;
    warped.data[i] = clamp01(pre);
  }

  ctx.adversarial = std::move(warped);
  return ctx;
}

std::vector<double> render_backward(const RenderContext& ctx,
                                    const std::vector<double>& grad_adversarial,
                                    const D2PMapper* mapper) {
  const ImageTensor& adv = ctx.adversarial;
  if (ctx.used_mapper && mapper == nullptr)
    throw ParamError("render_backward: forward pass used a mapper, none supplied");
  if (grad_adversarial.size() != adv.data.size())
    throw ShapeError("render_backward: gradient size mismatch");

  std::vector<double> g(grad_adversarial);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] *= clamp01_grad_factor(ctx.noise_pre_clamp[i]);
    g[i] *= clamp01_grad_factor(ctx.photometric_pre_clamp[i]) * ctx.contrast;
  }

  std::vector<double> g_merged =
      bilinear_sample_adjoint(adv.height, adv.width, adv.channels, ctx.grid_face, g);

  // composite passes mask-weighted gradient to the placed sticker
  for (int y = 0; y < adv.height; ++y) {
    for (int x = 0; x < adv.width; ++x) {
      const double m = ctx.mask_warped.at(y, x, 0);
      for (int c = 0; c < adv.channels; ++c)
        g_merged[(static_cast<std::size_t>(y) * adv.width + x) * adv.channels + c] *= m;
    }
  }

  std::vector<double> g_bent = bilinear_sample_adjoint(
      ctx.sticker_height, ctx.sticker_width, adv.channels, ctx.grid_placement, g_merged);
  std::vector<double> g_mapped = bilinear_sample_adjoint(
      ctx.sticker_height, ctx.sticker_width, adv.channels, ctx.grid_parabolic, g_bent);

  if (!ctx.used_mapper) return g_mapped;

  D2PContext dctx;
  dctx.hidden = ctx.d2p_hidden;
  dctx.pre_clamp = ctx.d2p_pre_clamp;
  return d2p_backward(*mapper, dctx, g_mapped);
}

ImageTensor render_adversarial(const ImageTensor& face, const ImageTensor& sticker_delta,
                               const StickerTransformParams& ta, const FaceTransformParams& tb,
                               const NoiseSpec& noise, const MaskSpec& mask,
                               const D2PMapper* mapper) {
  return render_forward(face, sticker_delta, ta, tb, noise, mask, mapper).adversarial;
}

}  // namespace advsticker
