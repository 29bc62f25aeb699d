#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "advsticker/tensor.hpp"

namespace advsticker {

inline constexpr int kPaletteLevelsPerChannel = 8;
inline constexpr int kPaletteRows = 16;
inline constexpr int kPaletteCols = 32;
inline constexpr int kPaletteSize = 512;  // 8^3
inline constexpr int kPaletteBlock = 40;  // square edge in the printed sheet
inline constexpr double kPsnrCap = 300.0;

// 512 RGB anchors laid out row-major on a 16 x 32 sheet.
struct ColorPalette {
  std::vector<std::array<double, 3>> anchors;
};

// All combinations of 8 evenly spaced levels {0, 1/7, ..., 1} per channel,
// enumerated red-major.
ColorPalette make_digital_palette();

// 640 x 1280 sheet of 40 x 40 constant squares, one per anchor.
ImageTensor palette_image(const ColorPalette& palette);

// Per-block mean colors of a photographed (or simulated) sheet. The photo
// must be kPaletteRows*kPaletteBlock x kPaletteCols*kPaletteBlock x 3.
ColorPalette extract_palette_from_photo(const ImageTensor& photo);

// Stand-in for print + camera: per-channel gamma, 3x3 channel mixing, a
// scalar offset, additive Gaussian noise, then clamp.
struct ChannelParams {
  std::array<double, 3> gamma = {1.1, 1.0, 0.9};
  std::array<std::array<double, 3>, 3> mix = {{{0.9, 0.0333, 0.0333},
                                               {0.0333, 0.9, 0.0333},
                                               {0.0333, 0.0333, 0.9}}};
  double offset = 0.02;
  double noise_stddev = 0.01;
};

ImageTensor simulate_channel(const ImageTensor& img, const ChannelParams& params,
                             std::uint64_t seed);

// Per-pixel color mapper 3 -> hidden -> 3 with a saturating hidden
// activation; outputs clamped to [0, 1].
struct D2PMapper {
  int hidden = 100;
  std::vector<double> w1;  // hidden x 3
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // 3 x hidden
  std::vector<double> b2;  // 3
};

ImageTensor apply_d2p(const D2PMapper& mapper, const ImageTensor& img);

// Forward pass that keeps hidden activations and pre-clamp outputs so the
// gradient can be pulled back through the mapper.
struct D2PContext {
  std::vector<double> hidden;     // n_pixels x mapper.hidden
  std::vector<double> pre_clamp;  // n_pixels x 3
};

ImageTensor d2p_forward(const D2PMapper& mapper, const ImageTensor& img, D2PContext& ctx);

std::vector<double> d2p_backward(const D2PMapper& mapper, const D2PContext& ctx,
                                 const std::vector<double>& grad_out);

struct D2PTrainConfig {
  int epochs = 20000;
  double lr = 0.01;
  double decay_factor = 0.1;
  std::array<double, 2> decay_at = {0.5, 0.7};  // fractions of the epoch budget
  std::uint64_t seed = 31;
  int hidden = 100;
};

struct D2PTrainResult {
  D2PMapper mapper;
  std::vector<double> loss_trace;
  double final_mse = 0.0;
};

// Full-batch Adam on squared error over the anchor pairs.
D2PTrainResult train_d2p(const ColorPalette& digital, const ColorPalette& physical,
                         const D2PTrainConfig& cfg);

struct ImageMetrics {
  double mse = 0.0;
  double psnr = 0.0;
  double mssim = 0.0;
};

// MSE, PSNR = 10*log10(1/MSE) capped at kPsnrCap, and mean SSIM with the
// standard 11 x 11 Gaussian window, averaged over channels.
ImageMetrics image_metrics(const ImageTensor& a, const ImageTensor& b);

}  // namespace advsticker
