#pragma once

#include <cstdint>
#include <vector>

#include "advsticker/tensor.hpp"

namespace advsticker {

// Procedural face-like test images: a smooth head blob with eyes, brow and
// mouth over a soft background, all parameters drawn from the identity seed.
// variation 0 is the neutral view; higher indices jitter expression-like
// parameters (eye openness, mouth shape, tone) around the same identity.
ImageTensor make_face(int size, std::uint64_t identity_seed, int variation = 0);

std::vector<ImageTensor> make_face_set(int size, std::uint64_t identity_seed, int count);

// Bilinear resize; used when ingesting external face images.
ImageTensor resize_bilinear(const ImageTensor& img, int height, int width);

}  // namespace advsticker
