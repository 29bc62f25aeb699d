#pragma once

#include <string>

#include "advsticker/d2p.hpp"
#include "advsticker/embedding.hpp"

namespace advsticker {

// Binary weight files: 8-byte magic, little-endian u32 layer sizes, then the
// flat double array, little-endian.
void save_mapper(const std::string& path, const D2PMapper& mapper);
D2PMapper load_mapper(const std::string& path);

void save_model(const std::string& path, const EmbeddingModel& model);
EmbeddingModel load_model(const std::string& path);

}  // namespace advsticker
