#include "advsticker/serialize.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace advsticker {

namespace {

constexpr char kMapperMagic[8] = {'A', 'S', 'T', 'K', 'M', 'A', 'P', '1'};
constexpr char kModelMagic[8] = {'A', 'S', 'T', 'K', 'M', 'D', 'L', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw IoError("weight file: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_doubles(std::ostream& out, const std::vector<double>& v) {
  for (double d : v) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
  }
}

void get_doubles(std::istream& in, std::vector<double>& v) {
  for (double& d : v) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw IoError("weight file: truncated payload");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    std::memcpy(&d, &bits, 8);
  }
}

}  // namespace

void save_mapper(const std::string& path, const D2PMapper& mapper) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_mapper: cannot open " + path);
  out.write(kMapperMagic, 8);
  put_u32(out, static_cast<std::uint32_t>(mapper.hidden));
  put_doubles(out, mapper.w1);
  put_doubles(out, mapper.b1);
  put_doubles(out, mapper.w2);
  put_doubles(out, mapper.b2);
  if (!out) throw IoError("save_mapper: short write to " + path);
}

D2PMapper load_mapper(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_mapper: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMapperMagic, 8) != 0)
    throw IoError("load_mapper: bad magic in " + path);
  D2PMapper m;
  m.hidden = static_cast<int>(get_u32(in));
  if (m.hidden <= 0 || m.hidden > 100000) throw IoError("load_mapper: implausible hidden size");
  m.w1.resize(static_cast<std::size_t>(m.hidden) * 3);
  m.b1.resize(m.hidden);
  m.w2.resize(static_cast<std::size_t>(m.hidden) * 3);
  m.b2.resize(3);
  get_doubles(in, m.w1);
  get_doubles(in, m.b1);
  get_doubles(in, m.w2);
  get_doubles(in, m.b2);
  return m;
}

void save_model(const std::string& path, const EmbeddingModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_model: cannot open " + path);
  out.write(kModelMagic, 8);
  put_u32(out, static_cast<std::uint32_t>(model.input_size));
  put_u32(out, static_cast<std::uint32_t>(model.output_dim));
  put_u32(out, static_cast<std::uint32_t>(model.weights.size()));
  put_doubles(out, model.weights);
  if (!out) throw IoError("save_model: short write to " + path);
}

EmbeddingModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_model: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kModelMagic, 8) != 0)
    throw IoError("load_model: bad magic in " + path);
  const int input_size = static_cast<int>(get_u32(in));
  const int output_dim = static_cast<int>(get_u32(in));
  const std::uint32_t count = get_u32(in);
  EmbeddingModel m;
  init_model_layout(m, input_size, output_dim);
  if (m.weights.size() != count) throw IoError("load_model: weight count mismatch");
  get_doubles(in, m.weights);
  compute_model_center(m);
  return m;
}

}  // namespace advsticker
