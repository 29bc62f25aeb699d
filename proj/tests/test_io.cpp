#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include "advsticker/d2p.hpp"
#include "advsticker/embedding.hpp"
#include "advsticker/error.hpp"
#include "advsticker/faces.hpp"
#include "advsticker/image_io.hpp"
#include "advsticker/rng.hpp"
#include "advsticker/serialize.hpp"
#include "doctest.h"

using namespace advsticker;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  fs::path dir = fs::temp_directory_path() / "advsticker_io_tests";
  fs::create_directories(dir);
  return dir;
}

ImageTensor noisy_image(int h, int w, int c, std::uint64_t seed) {
  Rng rng(seed);
  ImageTensor img(h, w, c);
  for (double& v : img.data) v = rng.uniform(0.0, 1.0);
  return img;
}

}  // namespace

TEST_CASE("png roundtrip quantizes by at most half a step") {
  fs::path p = temp_dir() / "rt.png";
  ImageTensor img = noisy_image(9, 13, 3, 1);
  write_png(p.string(), img);
  ImageTensor back = read_png(p.string());
  REQUIRE(back.height == 9);
  REQUIRE(back.width == 13);
  REQUIRE(back.channels == 3);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    CHECK(std::abs(back.data[i] - img.data[i]) <= 0.5 / 255.0 + 1e-9);
  // a second write of the read-back image is lossless
  write_png(p.string(), back);
  ImageTensor again = read_png(p.string());
  for (std::size_t i = 0; i < back.data.size(); ++i) CHECK(again.data[i] == back.data[i]);
}

TEST_CASE("ppm roundtrip matches png quantization") {
  fs::path p = temp_dir() / "rt.ppm";
  ImageTensor img = noisy_image(6, 5, 3, 2);
  write_ppm(p.string(), img);
  ImageTensor back = read_ppm(p.string());
  for (std::size_t i = 0; i < img.data.size(); ++i)
    CHECK(std::abs(back.data[i] - img.data[i]) <= 0.5 / 255.0 + 1e-9);
  // read_image dispatches on magic bytes
  ImageTensor dispatched = read_image(p.string());
  for (std::size_t i = 0; i < back.data.size(); ++i) CHECK(dispatched.data[i] == back.data[i]);
}

TEST_CASE("single-channel images take the gray path") {
  // gray PNGs expand to RGB on read (external face ingestion wants RGB)
  fs::path p = temp_dir() / "gray.png";
  ImageTensor img = noisy_image(7, 7, 1, 3);
  write_png(p.string(), img);
  ImageTensor back = read_png(p.string());
  CHECK(back.channels == 3);
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 7; ++x) {
      CHECK(back.at(y, x, 0) == back.at(y, x, 1));
      CHECK(back.at(y, x, 1) == back.at(y, x, 2));
      CHECK(std::abs(back.at(y, x, 0) - img.at(y, x, 0)) <= 0.5 / 255.0 + 1e-9);
    }

  // binary PGM keeps its single channel
  fs::path q = temp_dir() / "gray.pgm";
  write_ppm(q.string(), img);
  ImageTensor pgm = read_image(q.string());
  CHECK(pgm.channels == 1);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    CHECK(std::abs(pgm.data[i] - img.data[i]) <= 0.5 / 255.0 + 1e-9);
}

TEST_CASE("io errors carry the path") {
  CHECK_THROWS_AS(read_png("/nonexistent/nowhere.png"), IoError);
  CHECK_THROWS_AS(read_image("/nonexistent/nowhere.ppm"), IoError);
  fs::path p = temp_dir() / "corrupt.png";
  FILE* f = std::fopen(p.string().c_str(), "wb");
  std::fputs("this is not an image", f);
  std::fclose(f);
  CHECK_THROWS_AS(read_image(p.string()), IoError);
}

TEST_CASE("directory listing is sorted and filtered") {
  fs::path dir = temp_dir() / "listing";
  fs::create_directories(dir);
  ImageTensor img = noisy_image(4, 4, 3, 4);
  write_png((dir / "b.png").string(), img);
  write_png((dir / "a.png").string(), img);
  write_ppm((dir / "c.ppm").string(), img);
  FILE* f = std::fopen((dir / "notes.txt").string().c_str(), "wb");
  std::fputs("skip me", f);
  std::fclose(f);

  std::vector<std::string> files = list_image_files(dir.string());
  REQUIRE(files.size() == 3);
  CHECK(fs::path(files[0]).filename() == "a.png");
  CHECK(fs::path(files[1]).filename() == "b.png");
  CHECK(fs::path(files[2]).filename() == "c.ppm");
}

TEST_CASE("format_double roundtrips exactly") {
  for (double v : {0.1, 1.0 / 3.0, 1e-17, 123456.789, -0.0, 2.5e300}) {
    std::string s = format_double(v);
    CHECK(std::stod(s) == v);
  }
  CHECK(format_double(1.0) == "1");
}

TEST_CASE("csv roundtrip preserves rows and header") {
  fs::path p = temp_dir() / "table.csv";
  std::vector<std::string> header{"iteration", "loss"};
  std::vector<std::vector<std::string>> rows{{"0", format_double(0.987654321012345678)},
                                             {"1", format_double(1.0 / 3.0)}};
  write_csv(p.string(), header, rows);
  std::vector<std::string> got_header;
  std::vector<std::vector<std::string>> got = read_csv(p.string(), &got_header);
  CHECK(got_header == header);
  REQUIRE(got.size() == 2);
  CHECK(got[0][0] == "0");
  CHECK(std::stod(got[1][1]) == 1.0 / 3.0);
}

TEST_CASE("svg plot writes polylines for every series") {
  fs::path p = temp_dir() / "plot.svg";
  PlotSeries s1{"train", "#1f77b4", {0, 1, 2, 3}, {1.0, 0.8, 0.6, 0.5}};
  PlotSeries s2{"eval", "#d62728", {0, 2}, {0.9, 0.7}};
  write_line_plot_svg(p.string(), "loss", "iteration", "loss", {s1, s2});
  FILE* f = std::fopen(p.string().c_str(), "rb");
  REQUIRE(f != nullptr);
  std::string content;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) content.append(buf, n);
  std::fclose(f);
  CHECK(content.find("<svg") != std::string::npos);
  CHECK(content.find("polyline") != std::string::npos);
  CHECK(content.find("#d62728") != std::string::npos);
  CHECK(content.find("iteration") != std::string::npos);
}

TEST_CASE("mapper weights survive the binary file bitwise") {
  Rng rng(5);
  D2PMapper m;
  m.hidden = 9;
  m.w1.resize(27);
  m.b1.resize(9);
  m.w2.resize(27);
  m.b2.resize(3);
  for (double& v : m.w1) v = rng.normal(0.0, 1.0);
  for (double& v : m.b1) v = rng.normal(0.0, 1.0);
  for (double& v : m.w2) v = rng.normal(0.0, 1.0);
  for (double& v : m.b2) v = rng.normal(0.0, 1.0);

  fs::path p = temp_dir() / "mapper.bin";
  save_mapper(p.string(), m);
  D2PMapper back = load_mapper(p.string());
  CHECK(back.hidden == 9);
  CHECK(back.w1 == m.w1);
  CHECK(back.b1 == m.b1);
  CHECK(back.w2 == m.w2);
  CHECK(back.b2 == m.b2);

  CHECK_THROWS_AS(load_mapper("/nonexistent/mapper.bin"), IoError);
  fs::path bad = temp_dir() / "bad.bin";
  FILE* f = std::fopen(bad.string().c_str(), "wb");
  std::fputs("wrong magic bytes here", f);
  std::fclose(f);
  CHECK_THROWS_AS(load_mapper(bad.string()), IoError);
}

TEST_CASE("model files reproduce embeddings bitwise") {
  EmbeddingModel model = make_toy_model(7, 32, 16);
  fs::path p = temp_dir() / "model.bin";
  save_model(p.string(), model);
  EmbeddingModel back = load_model(p.string());
  CHECK(back.input_size == 32);
  CHECK(back.output_dim == 16);
  CHECK(back.weights == model.weights);
  CHECK(back.center == model.center);

  ImageTensor face = make_face(32, 123, 0);
  std::vector<double> e1 = embed(model, face);
  std::vector<double> e2 = embed(back, face);
  for (std::size_t i = 0; i < e1.size(); ++i) CHECK(e1[i] == e2[i]);

  CHECK_THROWS_AS(load_model("/nonexistent/model.bin"), IoError);
}
