#include "advsticker/embedding.hpp"

#include <cmath>

#include "advsticker/mathfn.hpp"
#include "advsticker/rng.hpp"

namespace advsticker {

namespace {
constexpr int kChannels[kEmbedStages + 1] = {3, 4, 8, 16, 32};
static_assert(kChannels[kEmbedStages] <= 64, "stack buffer in the conv adjoint");

int half_size(int s) { return (s - 1) / 2 + 1; }  // 3x3 conv, stride 2, pad 1

// conv y index range helper: output (oy, ox) reads input rows 2*oy-1..2*oy+1
void conv_stage_forward(const double* in, int in_size, int cin, const double* w, const double* b,
                        int cout, double* out, int out_size) {
  for (int oy = 0; oy < out_size; ++oy) {
    for (int ox = 0; ox < out_size; ++ox) {
      double* o = out + (static_cast<std::size_t>(oy) * out_size + ox) * cout;
      for (int oc = 0; oc < cout; ++oc) o[oc] = b[oc];
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = 2 * oy + ky - 1;
        if (iy < 0 || iy >= in_size) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = 2 * ox + kx - 1;
          if (ix < 0 || ix >= in_size) continue;
          const double* ip = in + (static_cast<std::size_t>(iy) * in_size + ix) * cin;
          const double* wp = w + ((static_cast<std::size_t>(ky) * 3 + kx) * cin) * cout;
          for (int ic = 0; ic < cin; ++ic) {
            const double v = ip[ic];
            const double* wc = wp + static_cast<std::size_t>(ic) * cout;
            for (int oc = 0; oc < cout; ++oc) o[oc] += wc[oc] * v;
          }
        }
      }
      for (int oc = 0; oc < cout; ++oc) o[oc] = sat_act(o[oc]);
    }
  }
}

// adjoint w.r.t. the stage input; g_out already includes the activation term
void conv_stage_backward_input(const double* post_act, const double* g_out_post, int out_size,
                               int cout, const double* w, double* g_in, int in_size, int cin) {
  for (int oy = 0; oy < out_size; ++oy) {
    for (int ox = 0; ox < out_size; ++ox) {
      const std::size_t oi = (static_cast<std::size_t>(oy) * out_size + ox) * cout;
      double gpre[64];
      for (int oc = 0; oc < cout; ++oc)
        gpre[oc] = g_out_post[oi + oc] * sat_act_grad_from_output(post_act[oi + oc]);
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = 2 * oy + ky - 1;
        if (iy < 0 || iy >= in_size) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = 2 * ox + kx - 1;
          if (ix < 0 || ix >= in_size) continue;
          double* gp = g_in + (static_cast<std::size_t>(iy) * in_size + ix) * cin;
          const double* wp = w + ((static_cast<std::size_t>(ky) * 3 + kx) * cin) * cout;
          for (int ic = 0; ic < cin; ++ic) {
            const double* wc = wp + static_cast<std::size_t>(ic) * cout;
            double acc = 0.0;
            for (int oc = 0; oc < cout; ++oc) acc += wc[oc] * gpre[oc];
            gp[ic] += acc;
          }
        }
      }
    }
  }
}

}  // namespace

int EmbeddingModel::stage_size(int stage) const {
  int s = input_size;
  for (int i = 0; i < stage; ++i) s = half_size(s);
  return s;
}

void init_model_layout(EmbeddingModel& model, int input_size, int output_dim) {
  if (input_size < kEmbedMinInput)
    throw ParamError("init_model_layout: input_size must be at least 32");
  if (output_dim <= 0) throw ParamError("init_model_layout: output_dim must be positive");

  model.input_size = input_size;
  model.output_dim = output_dim;
  std::size_t total = 0;
  for (int t = 0; t < kEmbedStages; ++t) {
    model.stage_channels[t] = kChannels[t + 1];
    model.conv_w_off[t] = total;
    total += static_cast<std::size_t>(9) * kChannels[t] * kChannels[t + 1];
    model.conv_b_off[t] = total;
    total += kChannels[t + 1];
  }
  model.head_off = total;
  total += static_cast<std::size_t>(output_dim) * kChannels[kEmbedStages];
  model.weights.assign(total, 0.0);
  model.descriptor = "conv4-8-16-32/sat/gap-centered/affine" + std::to_string(output_dim) +
                     "/l2/in" + std::to_string(input_size);
}

void compute_model_center(EmbeddingModel& model) {
  // gray-image pooled response; centering keeps unrelated images from
  // sharing a dominant common embedding component
  model.center.clear();
  const ImageTensor gray(model.input_size, model.input_size, 3, 0.5);
  EmbedContext ctx;
  embed_forward(model, gray, ctx);
  model.center = ctx.pooled;
}

EmbeddingModel make_toy_model(std::uint64_t seed, int input_size, int output_dim) {
  EmbeddingModel m;
  init_model_layout(m, input_size, output_dim);

  Rng rng(seed);
  for (int t = 0; t < kEmbedStages; ++t) {
    const double std_w = 1.0 / std::sqrt(9.0 * kChannels[t]);
    for (std::size_t i = m.conv_w_off[t]; i < m.conv_b_off[t]; ++i)
      m.weights[i] = rng.normal(0.0, std_w);
    for (int i = 0; i < kChannels[t + 1]; ++i)
      m.weights[m.conv_b_off[t] + i] = rng.normal(0.0, 0.05);
  }
  const double std_h = 1.0 / std::sqrt(static_cast<double>(kChannels[kEmbedStages]));
  for (std::size_t i = m.head_off; i < m.weights.size(); ++i)
    m.weights[i] = rng.normal(0.0, std_h);

  compute_model_center(m);
  return m;
}

std::vector<double> embed_forward(const EmbeddingModel& model, const ImageTensor& img,
                                  EmbedContext& ctx) {
  if (img.height != model.input_size || img.width != model.input_size || img.channels != 3)
    throw ShapeError("embed_forward: image does not match the model input size");

  int size_in = model.input_size;
  const double* in = img.data.data();
  for (int t = 0; t < kEmbedStages; ++t) {
    const int size_out = half_size(size_in);
    const int cin = kChannels[t], cout = kChannels[t + 1];
    ctx.act[t].assign(static_cast<std::size_t>(size_out) * size_out * cout, 0.0);
    conv_stage_forward(in, size_in, cin, &model.weights[model.conv_w_off[t]],
                       &model.weights[model.conv_b_off[t]], cout, ctx.act[t].data(), size_out);
    in = ctx.act[t].data();
    size_in = size_out;
  }

  const int cf = kChannels[kEmbedStages];
  const std::size_t plane = static_cast<std::size_t>(size_in) * size_in;
  ctx.pooled.assign(cf, 0.0);
  for (std::size_t p = 0; p < plane; ++p)
    for (int c = 0; c < cf; ++c) ctx.pooled[c] += ctx.act[kEmbedStages - 1][p * cf + c];
  for (int c = 0; c < cf; ++c) ctx.pooled[c] /= static_cast<double>(plane);

  const int d = model.output_dim;
  ctx.z.assign(d, 0.0);
  const bool centered = !model.center.empty();
  for (int j = 0; j < d; ++j) {
    double acc = 0.0;
    const double* w = &model.weights[model.head_off + static_cast<std::size_t>(j) * cf];
    for (int c = 0; c < cf; ++c)
      acc += w[c] * (ctx.pooled[c] - (centered ? model.center[c] : 0.0));
    ctx.z[j] = acc;
  }
  double norm = 0.0;
  for (double v : ctx.z) norm += v * v;
  norm = std::sqrt(norm);
  if (norm < 1e-12) throw EvalError("embed_forward: degenerate input, embedding norm ~ 0");
  ctx.z_norm = norm;

  std::vector<double> e(d);
  for (int j = 0; j < d; ++j) e[j] = ctx.z[j] / norm;
  return e;
}

std::vector<double> embed(const EmbeddingModel& model, const ImageTensor& img) {
  EmbedContext ctx;
  return embed_forward(model, img, ctx);
}

std::vector<double> embed_input_grad(const EmbeddingModel& model, const EmbedContext& ctx,
                                     const std::vector<double>& grad_embedding) {
  const int d = model.output_dim;
  if (grad_embedding.size() != static_cast<std::size_t>(d))
    throw ShapeError("embed_input_grad: gradient size mismatch");

  // through L2 normalization: g_z = (g - e (e.g)) / |z|
  double edotg = 0.0;
  std::vector<double> e(d);
  for (int j = 0; j < d; ++j) {
    e[j] = ctx.z[j] / ctx.z_norm;
    edotg += e[j] * grad_embedding[j];
  }
  std::vector<double> gz(d);
  for (int j = 0; j < d; ++j) gz[j] = (grad_embedding[j] - e[j] * edotg) / ctx.z_norm;

  const int cf = kChannels[kEmbedStages];
  std::vector<double> gpool(cf, 0.0);
  for (int j = 0; j < d; ++j) {
    const double* w = &model.weights[model.head_off + static_cast<std::size_t>(j) * cf];
    for (int c = 0; c < cf; ++c) gpool[c] += w[c] * gz[j];
  }

  const int s4 = model.stage_size(kEmbedStages);
  const std::size_t plane = static_cast<std::size_t>(s4) * s4;
  std::vector<double> g(plane * cf);
  for (std::size_t p = 0; p < plane; ++p)
    for (int c = 0; c < cf; ++c) g[p * cf + c] = gpool[c] / static_cast<double>(plane);

  for (int t = kEmbedStages - 1; t >= 0; --t) {
    const int size_out = model.stage_size(t + 1);
    const int size_in = model.stage_size(t);
    const int cin = kChannels[t], cout = kChannels[t + 1];
    std::vector<double> g_in(static_cast<std::size_t>(size_in) * size_in * cin, 0.0);
    conv_stage_backward_input(ctx.act[t].data(), g.data(), size_out, cout,
                              &model.weights[model.conv_w_off[t]], g_in.data(), size_in, cin);
    g = std::move(g_in);
  }
  return g;
}

double cosine(const std::vector<double>& u, const std::vector<double>& v) {
  if (u.size() != v.size() || u.empty()) throw ShapeError("cosine: dimension mismatch");
  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uu += u[i] * u[i];
    vv += v[i] * v[i];
    uv += u[i] * v[i];
  }
  if (uu < 1e-24 || vv < 1e-24) throw EvalError("cosine: zero-norm vector");
  return uv / (std::sqrt(uu) * std::sqrt(vv));
}

double attack_loss(AttackMode mode, const std::vector<double>& e_adv,
                   const std::vector<double>& e_anchor) {
  const double c = cosine(e_adv, e_anchor);
  return mode == AttackMode::kDodging ? 0.5 * (1.0 + c) : 0.5 * (1.0 - c);
}

double attack_loss_with_grad(AttackMode mode, const std::vector<double>& e_adv,
                             const std::vector<double>& e_anchor, std::vector<double>& grad_adv) {
  if (e_adv.size() != e_anchor.size() || e_adv.empty())
    throw ShapeError("attack_loss_with_grad: dimension mismatch");
  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (std::size_t i = 0; i < e_adv.size(); ++i) {
    uu += e_adv[i] * e_adv[i];
    vv += e_anchor[i] * e_anchor[i];
    uv += e_adv[i] * e_anchor[i];
  }
  if (uu < 1e-24 || vv < 1e-24) throw EvalError("attack_loss_with_grad: zero-norm vector");
  const double nu = std::sqrt(uu), nv = std::sqrt(vv);
  const double c = uv / (nu * nv);
  const double sign = mode == AttackMode::kDodging ? 0.5 : -0.5;
  grad_adv.resize(e_adv.size());
  for (std::size_t i = 0; i < e_adv.size(); ++i) {
    const double dc = e_anchor[i] / (nu * nv) - c * e_adv[i] / uu;
    grad_adv[i] = sign * dc;
  }
  return mode == AttackMode::kDodging ? 0.5 * (1.0 + c) : 0.5 * (1.0 - c);
}

std::vector<double> benign_similarity_report(const EmbeddingModel& model,
                                             const std::vector<ImageTensor>& faces,
                                             const std::vector<double>& anchor_embedding) {
  std::vector<double> out;
  out.reserve(faces.size());
  for (const ImageTensor& f : faces) out.push_back(cosine(embed(model, f), anchor_embedding));
  return out;
}

}  // namespace advsticker
