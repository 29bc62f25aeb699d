#include "advsticker/faces.hpp"

#include <cmath>

#include "advsticker/rng.hpp"

namespace advsticker {

namespace {

struct Blob {
  double cx, cy, rx, ry, amp;  // center, radii, signed amplitude per channel scale
};

double blob_value(const Blob& b, double x, double y) {
  const double dx = (x - b.cx) / b.rx;
  const double dy = (y - b.cy) / b.ry;
  return b.amp * std::exp(-(dx * dx + dy * dy));
}

double smoothstep(double e0, double e1, double v) {
  const double t = std::min(1.0, std::max(0.0, (v - e0) / (e1 - e0)));
  return t * t * (3.0 - 2.0 * t);
}

}  // namespace

ImageTensor make_face(int size, std::uint64_t identity_seed, int variation) {
  if (size <= 0) throw ShapeError("make_face: size must be positive");
  Rng id_rng(identity_seed);

  // identity parameters
  const double skin[3] = {id_rng.uniform(0.45, 0.8), id_rng.uniform(0.35, 0.65),
                          id_rng.uniform(0.3, 0.55)};
  const double bg[3] = {id_rng.uniform(0.1, 0.4), id_rng.uniform(0.1, 0.4),
                        id_rng.uniform(0.1, 0.4)};
  const double bg_tilt = id_rng.uniform(-0.15, 0.15);
  const double head_cx = 0.5 + id_rng.uniform(-0.04, 0.04);
  const double head_cy = 0.52 + id_rng.uniform(-0.04, 0.04);
  const double head_rx = id_rng.uniform(0.3, 0.38);
  const double head_ry = id_rng.uniform(0.38, 0.46);
  const double eye_dx = id_rng.uniform(0.12, 0.17);
  const double eye_y = head_cy - id_rng.uniform(0.08, 0.14);
  const double eye_r = id_rng.uniform(0.03, 0.05);
  const double brow_y = eye_y - id_rng.uniform(0.05, 0.08);
  const double mouth_y = head_cy + id_rng.uniform(0.16, 0.24);
  const double mouth_w = id_rng.uniform(0.1, 0.16);
  const double mouth_h = id_rng.uniform(0.02, 0.04);
  const double hair_band = id_rng.uniform(0.08, 0.16);

  // expression-like jitter around the identity
  double eye_open = 1.0, mouth_stretch = 1.0, tone = 0.0, tilt = 0.0;
  if (variation != 0) {
    Rng var_rng(identity_seed * 0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(variation));
    eye_open = var_rng.uniform(0.55, 1.25);
    mouth_stretch = var_rng.uniform(0.7, 1.35);
    tone = var_rng.uniform(-0.06, 0.06);
    tilt = var_rng.uniform(-0.05, 0.05);
  }

  ImageTensor img(size, size, 3);
  const double inv = 1.0 / (size - 1 > 0 ? size - 1 : 1);
  for (int py = 0; py < size; ++py) {
    for (int px = 0; px < size; ++px) {
      const double x = px * inv;
      const double y = py * inv;
      const double hx = (x - head_cx) / head_rx;
      const double hy = (y - head_cy) / head_ry;
      const double head = smoothstep(1.15, 0.85, std::sqrt(hx * hx + hy * hy));

      const double eye_l = blob_value({head_cx - eye_dx, eye_y, eye_r, eye_r * eye_open, 1.0}, x, y);
      const double eye_r_v =
          blob_value({head_cx + eye_dx, eye_y, eye_r, eye_r * eye_open, 1.0}, x, y);
      const double brow =
          blob_value({head_cx, brow_y, eye_dx * 1.6, 0.018, 1.0}, x, y);
      const double mouth_dx = (x - head_cx) / (mouth_w * mouth_stretch);
      const double mouth_dy = (y - mouth_y - tilt * (x - head_cx)) / mouth_h;
      const double mouth = std::exp(-(mouth_dx * mouth_dx * mouth_dx * mouth_dx +
                                      mouth_dy * mouth_dy));
      const double hair = smoothstep(head_cy - head_ry + hair_band,
                                     head_cy - head_ry + hair_band * 0.4, y) *
                          head;

      for (int c = 0; c < 3; ++c) {
        double v = bg[c] + bg_tilt * (y - 0.5);
        v = v * (1.0 - head) + (skin[c] + tone) * head;
        v -= 0.35 * (eye_l + eye_r_v) * (c == 2 ? 0.8 : 1.0);
        v -= 0.2 * brow;
        v -= mouth * (c == 0 ? -0.12 : 0.22);
        v -= 0.3 * hair * (c == 0 ? 1.0 : 0.85);
        img.at(py, px, c) = 0.05 + 0.9 * clamp01(v);
      }
    }
  }
  return img;
}

std::vector<ImageTensor> make_face_set(int size, std::uint64_t identity_seed, int count) {
  if (count <= 0) throw ParamError("make_face_set: count must be positive");
  std::vector<ImageTensor> faces;
  faces.reserve(count);
  for (int v = 0; v < count; ++v) faces.push_back(make_face(size, identity_seed, v));
  return faces;
}

ImageTensor resize_bilinear(const ImageTensor& img, int height, int width) {
  if (height <= 0 || width <= 0) throw ShapeError("resize_bilinear: empty target");
  WarpGrid grid(height, width);
  const double sx = width > 1 ? static_cast<double>(img.width - 1) / (width - 1) : 0.0;
  const double sy = height > 1 ? static_cast<double>(img.height - 1) / (height - 1) : 0.0;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const std::size_t gi = grid.index(y, x);
      grid.u[gi] = x * sx;
      grid.v[gi] = y * sy;
    }
  return bilinear_sample(img, grid);
}

}  // namespace advsticker
