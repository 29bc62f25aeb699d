#pragma once

#include <cstdint>
#include <vector>

#include "advsticker/error.hpp"

namespace advsticker {

// Dense H x W x C image, row-major with interleaved channels, double
// throughout. Values are nominally in [0, 1]; intermediates may leave the
// range and get clamped by the pipeline stages that promise it.
struct ImageTensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  static std::size_t checked_size(int h, int w, int c) {
    if (h < 0 || w < 0 || c < 0) throw ShapeError("ImageTensor: negative dimension");
    return static_cast<std::size_t>(h) * w * c;
  }

  ImageTensor() = default;
  ImageTensor(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c), data(checked_size(h, w, c), fill) {}

  double& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  int size() const { return height * width * channels; }
  bool same_shape(const ImageTensor& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

// Scalar value plus gradient congruent with the input tensor.
struct GradResult {
  double value = 0.0;
  std::vector<double> grad;
};

// Sampling grid: one source coordinate (u = column, v = row) per output
// pixel. The grid defines the output dimensions.
struct WarpGrid {
  int height = 0;
  int width = 0;
  std::vector<double> u;
  std::vector<double> v;

  WarpGrid() = default;
  WarpGrid(int h, int w)
      : height(h),
        width(w),
        u(static_cast<std::size_t>(h) * w, 0.0),
        v(static_cast<std::size_t>(h) * w, 0.0) {}

  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width + x; }
};

// Bilinear sampling with zero padding outside the source extent. Output has
// the grid's height/width and the source's channel count.
ImageTensor bilinear_sample(const ImageTensor& src, const WarpGrid& grid);

// Adjoint of bilinear_sample: scatter-add grad_out back through the same
// sampling weights. grad_out is flat over grid.height * grid.width * channels.
std::vector<double> bilinear_sample_adjoint(int src_height, int src_width, int channels,
                                            const WarpGrid& grid,
                                            const std::vector<double>& grad_out);

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

ImageTensor clamp01(const ImageTensor& img);

// Gradient of clamp01 is pass-through where the pre-clamp value lies in
// [0, 1] (inclusive) and zero outside.
inline double clamp01_grad_factor(double pre_clamp) {
  return (pre_clamp >= 0.0 && pre_clamp <= 1.0) ? 1.0 : 0.0;
}

}  // namespace advsticker
