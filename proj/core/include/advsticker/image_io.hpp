#pragma once

#include <string>
#include <vector>

#include "advsticker/tensor.hpp"

namespace advsticker {

// Images cross the file boundary as 8-bit PNG or binary PPM/PGM; in memory
// everything stays double. Quantization happens only here.
void write_png(const std::string& path, const ImageTensor& img);
void write_ppm(const std::string& path, const ImageTensor& img);
ImageTensor read_png(const std::string& path);
ImageTensor read_ppm(const std::string& path);

// dispatches on the file's magic bytes
ImageTensor read_image(const std::string& path);

// Sorted *.png / *.ppm / *.pgm files of a directory.
std::vector<std::string> list_image_files(const std::string& dir);

// Round-trip-stable double formatting for CSV output.
std::string format_double(double v);

// Comma-separated, LF line endings, header first.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

std::vector<std::vector<std::string>> read_csv(const std::string& path,
                                               std::vector<std::string>* header = nullptr);

struct PlotSeries {
  std::string label;
  std::string color;  // e.g. "#1f77b4"
  std::vector<double> x;
  std::vector<double> y;
};

// Minimal self-contained SVG line plot.
void write_line_plot_svg(const std::string& path, const std::string& title,
                         const std::string& x_label, const std::string& y_label,
                         const std::vector<PlotSeries>& series);

}  // namespace advsticker
