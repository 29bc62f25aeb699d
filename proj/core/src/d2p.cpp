#include "advsticker/d2p.hpp"

#include <algorithm>
#include <cmath>

#include "advsticker/mathfn.hpp"
#include "advsticker/rng.hpp"

namespace advsticker {

ColorPalette make_digital_palette() {
  ColorPalette palette;
  palette.anchors.reserve(kPaletteSize);
  const double step = 1.0 / (kPaletteLevelsPerChannel - 1);
  for (int r = 0; r < kPaletteLevelsPerChannel; ++r)
    for (int g = 0; g < kPaletteLevelsPerChannel; ++g)
      for (int b = 0; b < kPaletteLevelsPerChannel; ++b)
        palette.anchors.push_back({r * step, g * step, b * step});
  return palette;
}

ImageTensor palette_image(const ColorPalette& palette) {
  if (palette.anchors.size() != kPaletteSize)
    throw ShapeError("palette_image: palette must hold 512 anchors");
  ImageTensor img(kPaletteRows * kPaletteBlock, kPaletteCols * kPaletteBlock, 3);
  for (int row = 0; row < kPaletteRows; ++row) {
    for (int col = 0; col < kPaletteCols; ++col) {
      const auto& a = palette.anchors[row * kPaletteCols + col];
      for (int y = row * kPaletteBlock; y < (row + 1) * kPaletteBlock; ++y)
        for (int x = col * kPaletteBlock; x < (col + 1) * kPaletteBlock; ++x)
          for (int c = 0; c < 3; ++c) img.at(y, x, c) = a[c];
    }
  }
  return img;
}

ColorPalette extract_palette_from_photo(const ImageTensor& photo) {
  if (photo.height != kPaletteRows * kPaletteBlock || photo.width != kPaletteCols * kPaletteBlock ||
      photo.channels != 3)
    throw ShapeError("extract_palette_from_photo: expected a 640 x 1280 x 3 sheet");
  ColorPalette palette;
  palette.anchors.resize(kPaletteSize);
  const double inv_area = 1.0 / (kPaletteBlock * kPaletteBlock);
  for (int row = 0; row < kPaletteRows; ++row) {
    for (int col = 0; col < kPaletteCols; ++col) {
      std::array<double, 3> mean = {0.0, 0.0, 0.0};
      for (int y = row * kPaletteBlock; y < (row + 1) * kPaletteBlock; ++y)
        for (int x = col * kPaletteBlock; x < (col + 1) * kPaletteBlock; ++x)
          for (int c = 0; c < 3; ++c) mean[c] += photo.at(y, x, c);
      for (int c = 0; c < 3; ++c) mean[c] *= inv_area;
      palette.anchors[row * kPaletteCols + col] = mean;
    }
  }
  return palette;
}

ImageTensor simulate_channel(const ImageTensor& img, const ChannelParams& params,
                             std::uint64_t seed) {
  if (img.channels != 3) throw ShapeError("simulate_channel: expected 3 channels");
  ImageTensor out(img.height, img.width, 3);
  Rng rng(seed);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double gam[3];
      for (int c = 0; c < 3; ++c)
        gam[c] = std::pow(std::max(img.at(y, x, c), 0.0), params.gamma[c]);
      for (int r = 0; r < 3; ++r) {
        double v = params.offset;
        for (int c = 0; c < 3; ++c) v += params.mix[r][c] * gam[c];
        if (params.noise_stddev > 0.0) v += rng.normal(0.0, params.noise_stddev);
        out.at(y, x, r) = clamp01(v);
      }
    }
  }
  return out;
}

namespace {

// forward for one color; h must have room for mapper.hidden values
inline void mapper_forward_pixel(const D2PMapper& m, const double* p, double* h, double* o) {
  for (int k = 0; k < m.hidden; ++k) {
    double acc = m.b1[k];
    const double* w = &m.w1[static_cast<std::size_t>(k) * 3];
    acc += w[0] * p[0] + w[1] * p[1] + w[2] * p[2];
    h[k] = sat_act(acc);
  }
  for (int j = 0; j < 3; ++j) {
    double acc = m.b2[j];
    const double* w = &m.w2[static_cast<std::size_t>(j) * m.hidden];
    for (int k = 0; k < m.hidden; ++k) acc += w[k] * h[k];
    o[j] = acc;
  }
}

void validate_mapper(const D2PMapper& m) {
  if (m.hidden <= 0 || m.w1.size() != static_cast<std::size_t>(m.hidden) * 3 ||
      m.b1.size() != static_cast<std::size_t>(m.hidden) ||
      m.w2.size() != static_cast<std::size_t>(m.hidden) * 3 || m.b2.size() != 3)
    throw ShapeError("D2PMapper: inconsistent weight sizes");
}

}  // namespace

ImageTensor d2p_forward(const D2PMapper& mapper, const ImageTensor& img, D2PContext& ctx) {
  validate_mapper(mapper);
  if (img.channels != 3) throw ShapeError("d2p_forward: expected 3 channels");
  const std::size_t n = static_cast<std::size_t>(img.height) * img.width;
  ctx.hidden.resize(n * mapper.hidden);
  ctx.pre_clamp.resize(n * 3);
  ImageTensor out(img.height, img.width, 3);
  for (std::size_t i = 0; i < n; ++i) {
    const double* p = &img.data[i * 3];
    double* h = &ctx.hidden[i * mapper.hidden];
    double* o = &ctx.pre_clamp[i * 3];
    mapper_forward_pixel(mapper, p, h, o);
    for (int j = 0; j < 3; ++j) out.data[i * 3 + j] = clamp01(o[j]);
  }
  return out;
}

ImageTensor apply_d2p(const D2PMapper& mapper, const ImageTensor& img) {
  D2PContext ctx;
  return d2p_forward(mapper, img, ctx);
}

std::vector<double> d2p_backward(const D2PMapper& mapper, const D2PContext& ctx,
                                 const std::vector<double>& grad_out) {
  validate_mapper(mapper);
  const std::size_t n = ctx.pre_clamp.size() / 3;
  if (grad_out.size() != n * 3) throw ShapeError("d2p_backward: gradient size mismatch");
  std::vector<double> grad_in(n * 3, 0.0);
  std::vector<double> gh(mapper.hidden);
  for (std::size_t i = 0; i < n; ++i) {
    const double* h = &ctx.hidden[i * mapper.hidden];
    double go[3];
    for (int j = 0; j < 3; ++j)
      go[j] = grad_out[i * 3 + j] * clamp01_grad_factor(ctx.pre_clamp[i * 3 + j]);
    for (int k = 0; k < mapper.hidden; ++k) {
      double acc = 0.0;
      for (int j = 0; j < 3; ++j) acc += mapper.w2[static_cast<std::size_t>(j) * mapper.hidden + k] * go[j];
      gh[k] = acc * sat_act_grad_from_output(h[k]);
    }
    double gp[3] = {0.0, 0.0, 0.0};
    for (int k = 0; k < mapper.hidden; ++k) {
      const double* w = &mapper.w1[static_cast<std::size_t>(k) * 3];
      gp[0] += w[0] * gh[k];
      gp[1] += w[1] * gh[k];
      gp[2] += w[2] * gh[k];
    }
    for (int j = 0; j < 3; ++j) grad_in[i * 3 + j] = gp[j];
  }
  return grad_in;
}

D2PTrainResult train_d2p(const ColorPalette& digital, const ColorPalette& physical,
                         const D2PTrainConfig& cfg) {
  if (digital.anchors.empty() || digital.anchors.size() != physical.anchors.size())
    throw ShapeError("train_d2p: palettes must be non-empty and equal-sized");
  if (cfg.epochs <= 0 || cfg.lr <= 0.0 || cfg.hidden <= 0)
    throw ParamError("train_d2p: epochs, lr and hidden size must be positive");

  const int n = static_cast<int>(digital.anchors.size());
  const int H = cfg.hidden;

  D2PMapper m;
  m.hidden = H;
  m.w1.resize(static_cast<std::size_t>(H) * 3);
  m.b1.assign(H, 0.0);
  m.w2.resize(static_cast<std::size_t>(H) * 3);
  m.b2.assign(3, 0.5);
  Rng rng(cfg.seed);
  for (double& w : m.w1) w = rng.normal(0.0, 0.5);
  for (double& w : m.w2) w = rng.normal(0.0, 0.1);

  const std::size_t n_params = m.w1.size() + m.b1.size() + m.w2.size() + m.b2.size();
  std::vector<double> grad(n_params), adam_m(n_params, 0.0), adam_v(n_params, 0.0);
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  const int decay_epoch_0 = static_cast<int>(cfg.decay_at[0] * cfg.epochs);
  const int decay_epoch_1 = static_cast<int>(cfg.decay_at[1] * cfg.epochs);

  D2PTrainResult result;
  result.loss_trace.reserve(cfg.epochs);

  std::vector<double> hidden(H);
  double lr = cfg.lr;
  double beta1_t = 1.0, beta2_t = 1.0;

  const std::size_t off_w1 = 0;
  const std::size_t off_b1 = off_w1 + m.w1.size();
  const std::size_t off_w2 = off_b1 + m.b1.size();
  const std::size_t off_b2 = off_w2 + m.w2.size();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch == decay_epoch_0 || epoch == decay_epoch_1) lr *= cfg.decay_factor;

    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    const double scale = 2.0 / (n * 3.0);
    for (int i = 0; i < n; ++i) {
      const double* p = digital.anchors[i].data();
      const double* t = physical.anchors[i].data();
      double o[3];
      mapper_forward_pixel(m, p, hidden.data(), o);
      double go[3];
      for (int j = 0; j < 3; ++j) {
        const double e = o[j] - t[j];
        loss += e * e;
        go[j] = scale * e;
      }
      for (int j = 0; j < 3; ++j) {
        grad[off_b2 + j] += go[j];
        double* gw2 = &grad[off_w2 + static_cast<std::size_t>(j) * H];
        for (int k = 0; k < H; ++k) gw2[k] += go[j] * hidden[k];
      }
      for (int k = 0; k < H; ++k) {
        double acc = 0.0;
        for (int j = 0; j < 3; ++j) acc += m.w2[static_cast<std::size_t>(j) * H + k] * go[j];
        const double gpre = acc * sat_act_grad_from_output(hidden[k]);
        grad[off_b1 + k] += gpre;
        double* gw1 = &grad[off_w1 + static_cast<std::size_t>(k) * 3];
        gw1[0] += gpre * p[0];
        gw1[1] += gpre * p[1];
        gw1[2] += gpre * p[2];
      }
    }
    loss /= n * 3.0;
    if (!std::isfinite(loss)) throw TrainError("train_d2p: loss diverged");
    result.loss_trace.push_back(loss);

    beta1_t *= beta1;
    beta2_t *= beta2;
    auto adam_update = [&](std::vector<double>& params, std::size_t offset) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        const std::size_t gi = offset + i;
        adam_m[gi] = beta1 * adam_m[gi] + (1.0 - beta1) * grad[gi];
        adam_v[gi] = beta2 * adam_v[gi] + (1.0 - beta2) * grad[gi] * grad[gi];
        const double mhat = adam_m[gi] / (1.0 - beta1_t);
        const double vhat = adam_v[gi] / (1.0 - beta2_t);
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    };
    adam_update(m.w1, off_w1);
    adam_update(m.b1, off_b1);
    adam_update(m.w2, off_w2);
    adam_update(m.b2, off_b2);
  }

  // report the deployed (clamped) fit
  double mse = 0.0;
  for (int i = 0; i < n; ++i) {
    double o[3];
    mapper_forward_pixel(m, digital.anchors[i].data(), hidden.data(), o);
    for (int j = 0; j < 3; ++j) {
      const double e = clamp01(o[j]) - physical.anchors[i][j];
      mse += e * e;
    }
  }
  result.final_mse = mse / (n * 3.0);
  result.mapper = std::move(m);
  return result;
}

namespace {

std::vector<double> gaussian_window_11() {
  std::vector<double> w(11);
  const double sigma = 1.5;
  double sum = 0.0;
  for (int i = 0; i < 11; ++i) {
    const double d = i - 5.0;
    w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

// separable valid-region Gaussian filtering of a single-channel plane
std::vector<double> gauss_valid(const std::vector<double>& plane, int h, int w,
                                const std::vector<double>& k) {
  const int r = static_cast<int>(k.size());
  const int wh = h, ww = w - r + 1;
  std::vector<double> horiz(static_cast<std::size_t>(wh) * ww);
  for (int y = 0; y < wh; ++y)
    for (int x = 0; x < ww; ++x) {
      double acc = 0.0;
      for (int i = 0; i < r; ++i) acc += k[i] * plane[static_cast<std::size_t>(y) * w + x + i];
      horiz[static_cast<std::size_t>(y) * ww + x] = acc;
    }
  const int vh = h - r + 1;
  std::vector<double> out(static_cast<std::size_t>(vh) * ww);
  for (int y = 0; y < vh; ++y)
    for (int x = 0; x < ww; ++x) {
      double acc = 0.0;
      for (int i = 0; i < r; ++i) acc += k[i] * horiz[static_cast<std::size_t>(y + i) * ww + x];
      out[static_cast<std::size_t>(y) * ww + x] = acc;
    }
  return out;
}

}  // namespace

ImageMetrics image_metrics(const ImageTensor& a, const ImageTensor& b) {
  if (!a.same_shape(b)) throw ShapeError("image_metrics: shape mismatch");
  if (a.size() == 0) throw ShapeError("image_metrics: empty images");
  if (a.height < 11 || a.width < 11)
    throw ShapeError("image_metrics: images smaller than the 11 x 11 SSIM window");

  ImageMetrics metrics;
  double mse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double e = a.data[i] - b.data[i];
    mse += e * e;
  }
  mse /= a.data.size();
  metrics.mse = mse;
  metrics.psnr = mse > 0.0 ? std::min(10.0 * std::log10(1.0 / mse), kPsnrCap) : kPsnrCap;

  const std::vector<double> window = gaussian_window_11();
  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  const int h = a.height, w = a.width;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  std::vector<double> pa(n), pb(n), paa(n), pbb(n), pab(n);
  double ssim_sum = 0.0;
  std::size_t ssim_count = 0;
  for (int c = 0; c < a.channels; ++c) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const double va = a.at(y, x, c);
        const double vb = b.at(y, x, c);
        pa[i] = va;
        pb[i] = vb;
        paa[i] = va * va;
        pbb[i] = vb * vb;
        pab[i] = va * vb;
      }
    const auto mu_a = gauss_valid(pa, h, w, window);
    const auto mu_b = gauss_valid(pb, h, w, window);
    const auto m_aa = gauss_valid(paa, h, w, window);
    const auto m_bb = gauss_valid(pbb, h, w, window);
    const auto m_ab = gauss_valid(pab, h, w, window);
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double va = m_aa[i] - ma * ma;
      const double vb = m_bb[i] - mb * mb;
      const double cov = m_ab[i] - ma * mb;
      const double num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
      const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
      ssim_sum += num / den;
      ++ssim_count;
    }
  }
  metrics.mssim = ssim_sum / ssim_count;
  return metrics;
}

}  // namespace advsticker
