#include "advsticker/tensor.hpp"

#include <cmath>

namespace advsticker {

ImageTensor bilinear_sample(const ImageTensor& src, const WarpGrid& grid) {
  if (src.channels <= 0 || src.height <= 0 || src.width <= 0)
    throw ShapeError("bilinear_sample: empty source");
  if (grid.height <= 0 || grid.width <= 0 ||
      grid.u.size() != static_cast<std::size_t>(grid.height) * grid.width ||
      grid.v.size() != grid.u.size())
    throw ShapeError("bilinear_sample: grid size mismatch");

  const int C = src.channels;
  ImageTensor out(grid.height, grid.width, C);
  for (int y = 0; y < grid.height; ++y) {
    for (int x = 0; x < grid.width; ++x) {
      const std::size_t gi = grid.index(y, x);
      const double u = grid.u[gi];
      const double v = grid.v[gi];
      const int x0 = static_cast<int>(std::floor(u));
      const int y0 = static_cast<int>(std::floor(v));
      const double fx = u - x0;
      const double fy = v - y0;
      const double w00 = (1.0 - fy) * (1.0 - fx);
      const double w01 = (1.0 - fy) * fx;
      const double w10 = fy * (1.0 - fx);
      const double w11 = fy * fx;
      const bool in00 = y0 >= 0 && y0 < src.height && x0 >= 0 && x0 < src.width;
      const bool in01 = y0 >= 0 && y0 < src.height && x0 + 1 >= 0 && x0 + 1 < src.width;
      const bool in10 = y0 + 1 >= 0 && y0 + 1 < src.height && x0 >= 0 && x0 < src.width;
      const bool in11 = y0 + 1 >= 0 && y0 + 1 < src.height && x0 + 1 >= 0 && x0 + 1 < src.width;
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        if (in00) acc += w00 * src.at(y0, x0, c);
        if (in01) acc += w01 * src.at(y0, x0 + 1, c);
        if (in10) acc += w10 * src.at(y0 + 1, x0, c);
        if (in11) acc += w11 * src.at(y0 + 1, x0 + 1, c);
        out.at(y, x, c) = acc;
      }
    }
  }
  return out;
}

std::vector<double> bilinear_sample_adjoint(int src_height, int src_width, int channels,
                                            const WarpGrid& grid,
                                            const std::vector<double>& grad_out) {
  if (src_height <= 0 || src_width <= 0 || channels <= 0)
    throw ShapeError("bilinear_sample_adjoint: empty source shape");
  if (grad_out.size() != static_cast<std::size_t>(grid.height) * grid.width * channels)
    throw ShapeError("bilinear_sample_adjoint: grad size mismatch");

  std::vector<double> grad_src(static_cast<std::size_t>(src_height) * src_width * channels, 0.0);
  auto src_index = [&](int y, int x, int c) {
    return (static_cast<std::size_t>(y) * src_width + x) * channels + c;
  };
  for (int y = 0; y < grid.height; ++y) {
    for (int x = 0; x < grid.width; ++x) {
      const std::size_t gi = grid.index(y, x);
      const double u = grid.u[gi];
      const double v = grid.v[gi];
      const int x0 = static_cast<int>(std::floor(u));
      const int y0 = static_cast<int>(std::floor(v));
      const double fx = u - x0;
      const double fy = v - y0;
      const double w00 = (1.0 - fy) * (1.0 - fx);
      const double w01 = (1.0 - fy) * fx;
      const double w10 = fy * (1.0 - fx);
      const double w11 = fy * fx;
      const bool in00 = y0 >= 0 && y0 < src_height && x0 >= 0 && x0 < src_width;
      const bool in01 = y0 >= 0 && y0 < src_height && x0 + 1 >= 0 && x0 + 1 < src_width;
      const bool in10 = y0 + 1 >= 0 && y0 + 1 < src_height && x0 >= 0 && x0 < src_width;
      const bool in11 = y0 + 1 >= 0 && y0 + 1 < src_height && x0 + 1 >= 0 && x0 + 1 < src_width;
      const std::size_t oi = gi * channels;
      for (int c = 0; c < channels; ++c) {
        const double g = grad_out[oi + c];
        if (g == 0.0) continue;
        if (in00) grad_src[src_index(y0, x0, c)] += w00 * g;
        if (in01) grad_src[src_index(y0, x0 + 1, c)] += w01 * g;
        if (in10) grad_src[src_index(y0 + 1, x0, c)] += w10 * g;
        if (in11) grad_src[src_index(y0 + 1, x0 + 1, c)] += w11 * g;
      }
    }
  }
  return grad_src;
}

ImageTensor clamp01(const ImageTensor& img) {
  ImageTensor out = img;
  for (double& v : out.data) v = clamp01(v);
  return out;
}

}  // namespace advsticker
