#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "advsticker/tensor.hpp"

namespace advsticker {

struct D2PMapper;

// Sticker-side transform: parabolic bending (surface curvature plus head
// pitch), in-plane rotation and translation of the placed sticker.
struct StickerTransformParams {
  double parabolic_angle_deg = 0.0;
  double parabolic_rate = 0.0;
  double rotation_deg = 0.0;
  double dx = 0.0;
  double dy = 0.0;
};

// Face-side transform: rigid jitter of the whole canvas followed by a
// photometric contrast/brightness map.
struct FaceTransformParams {
  double rotation_deg = 0.0;
  double scale = 1.0;
  double dx = 0.0;
  double dy = 0.0;
  double contrast = 1.0;
  double brightness = 0.0;
};

// Placement of the sticker rectangle on the face canvas. The initial mask is
// 1 inside the rectangle and 0 elsewhere; warped masks share the sticker's
// geometric transform and develop soft bilinear edges.
struct MaskSpec {
  int sticker_height = 0;
  int sticker_width = 0;
  int anchor_x = 0;  // top-left corner on the face canvas
  int anchor_y = 0;
  int face_height = 0;
  int face_width = 0;

  void validate() const;
};

struct NoiseSpec {
  double mean = 0.0;
  double stddev = 0.0;
  std::uint64_t seed = 0;
};

// Grid realizing vertical parabolic displacement rate*(x - w/2)^2 composed
// with a pitch foreshortening that compresses rows toward the top edge by a
// factor running from cos(angle) at the top to 1 at the bottom. Identity at
// angle = 0, rate = 0.
WarpGrid parabolic_grid(int height, int width, double angle_deg, double rate);

ImageTensor parabolic_warp(const ImageTensor& img, double angle_deg, double rate);

// Face-canvas grid sampling from sticker coordinates: rotation about the
// sticker center and a pixel translation on top of the mask anchor.
WarpGrid sticker_placement_grid(const MaskSpec& spec, double rotation_deg, double dx, double dy);

// Whole-canvas rigid grid: rotation about the image center, isotropic scale,
// translation, inverse-mapped into a single bilinear pass.
WarpGrid face_affine_grid(int height, int width, double rotation_deg, double scale, double dx,
                          double dy);

// Rigid warp then pixel-wise v -> clamp(contrast * v + brightness, 0, 1).
ImageTensor affine_photometric(const ImageTensor& img, const FaceTransformParams& params);

// (1 - mask) * face + mask * sticker, mask single-channel broadcast across
// the face channels. All tensors share the face height/width.
ImageTensor composite(const ImageTensor& face, const ImageTensor& sticker_warped,
                      const ImageTensor& mask_warped);

ImageTensor make_initial_mask(const MaskSpec& spec);

// Deterministic per-pixel Gaussian noise drawn from spec.seed, then clamp.
ImageTensor add_gaussian_noise(const ImageTensor& img, const NoiseSpec& noise);

// Full render chain with every intermediate needed by the adjoint:
//   sticker -> D2P (optional) -> parabolic -> placement -> composite with the
//   warped mask -> rigid face warp -> photometric clamp -> noise -> clamp.
struct RenderContext {
  ImageTensor adversarial;  // final output
  // saved intermediates, in forward order
  ImageTensor sticker_mapped;
  std::vector<double> d2p_hidden;      // post-activation hidden units, per pixel
  std::vector<double> d2p_pre_clamp;   // mapper output before the range clamp
  WarpGrid grid_parabolic;
  WarpGrid grid_placement;
  WarpGrid grid_face;
  ImageTensor mask_warped;
  std::vector<double> photometric_pre_clamp;
  std::vector<double> noise_pre_clamp;
  double contrast = 1.0;
  bool used_mapper = false;
  int sticker_height = 0;
  int sticker_width = 0;
};

RenderContext render_forward(const ImageTensor& face, const ImageTensor& sticker_delta,
                             const StickerTransformParams& ta, const FaceTransformParams& tb,
                             const NoiseSpec& noise, const MaskSpec& mask,
                             const D2PMapper* mapper);

// Pull a gradient w.r.t. the adversarial image back to the sticker variable.
// mapper must be the instance used in the forward pass (or null if none).
std::vector<double> render_backward(const RenderContext& ctx,
                                    const std::vector<double>& grad_adversarial,
                                    const D2PMapper* mapper = nullptr);

// Convenience forward-only entry point.
ImageTensor render_adversarial(const ImageTensor& face, const ImageTensor& sticker_delta,
                               const StickerTransformParams& ta, const FaceTransformParams& tb,
                               const NoiseSpec& noise, const MaskSpec& mask,
                               const D2PMapper* mapper = nullptr);

}  // namespace advsticker
