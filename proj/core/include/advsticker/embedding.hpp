#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advsticker/tensor.hpp"

namespace advsticker {

enum class AttackMode { kDodging, kImpersonation };

inline constexpr int kEmbedStages = 4;
inline constexpr int kEmbedMinInput = 32;

// Frozen toy face embedder: four stride-2 3x3 conv stages with a saturating
// nonlinearity, global average pooling centered on the gray-image response,
// an affine head and L2 normalization. Weights are drawn once from the seed
// and never trained.
struct EmbeddingModel {
  std::string descriptor;
  int input_size = 0;
  int output_dim = 0;
  int stage_channels[kEmbedStages] = {0, 0, 0, 0};
  std::vector<double> weights;  // conv kernels + biases per stage, then the head
  std::vector<double> center;   // pooled features of the mid-gray image

  // offsets into `weights`
  std::size_t conv_w_off[kEmbedStages] = {0, 0, 0, 0};
  std::size_t conv_b_off[kEmbedStages] = {0, 0, 0, 0};
  std::size_t head_off = 0;

  int stage_size(int stage) const;  // spatial edge after `stage` convolutions
};

EmbeddingModel make_toy_model(std::uint64_t seed, int input_size, int output_dim);

// Fixed-architecture bookkeeping: offsets, descriptor, weight storage.
void init_model_layout(EmbeddingModel& model, int input_size, int output_dim);

// Recompute the gray-reference centering constant from the current weights.
void compute_model_center(EmbeddingModel& model);

// Activations kept for the input-gradient pass.
struct EmbedContext {
  std::vector<double> act[kEmbedStages];  // post-activation planes
  std::vector<double> pooled;
  std::vector<double> z;  // head output before normalization
  double z_norm = 0.0;
};

std::vector<double> embed_forward(const EmbeddingModel& model, const ImageTensor& img,
                                  EmbedContext& ctx);

// Unit-norm embedding of an image matching the model input size.
std::vector<double> embed(const EmbeddingModel& model, const ImageTensor& img);

// Gradient of grad_embedding . embedding w.r.t. the input image, flat over
// the image layout.
std::vector<double> embed_input_grad(const EmbeddingModel& model, const EmbedContext& ctx,
                                     const std::vector<double>& grad_embedding);

double cosine(const std::vector<double>& u, const std::vector<double>& v);

// Dodging pulls the adversarial embedding away from the anchor,
// impersonation pulls it toward the anchor; both losses live in [0, 1].
double attack_loss(AttackMode mode, const std::vector<double>& e_adv,
                   const std::vector<double>& e_anchor);

// Loss plus its gradient w.r.t. e_adv.
double attack_loss_with_grad(AttackMode mode, const std::vector<double>& e_adv,
                             const std::vector<double>& e_anchor, std::vector<double>& grad_adv);

// Cosine of each face's embedding against the anchor embedding.
std::vector<double> benign_similarity_report(const EmbeddingModel& model,
                                             const std::vector<ImageTensor>& faces,
                                             const std::vector<double>& anchor_embedding);

}  // namespace advsticker
