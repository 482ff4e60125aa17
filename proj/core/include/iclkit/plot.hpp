#pragma once

#include <optional>
#include <string>
#include <vector>

namespace iclkit::plot {

struct Series {
  std::string name;
  std::vector<double> xs;
  std::vector<double> ys;
};

struct ChartSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 720;
  int height = 440;
  std::optional<double> y_min;
  std::optional<double> y_max;
};

// 8-bit RGB rows, top to bottom.
void write_png_rgb(const std::string& path, int width, int height,
                   const std::vector<unsigned char>& rgb);

void write_line_chart_png(const std::string& path, const ChartSpec& spec,
                          const std::vector<Series>& series);

}  // namespace iclkit::plot
