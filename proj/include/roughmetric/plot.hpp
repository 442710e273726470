#pragma once

// Self-contained SVG line charts with byte-stable output.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace roughmetric {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;  // non-positive values are dropped on a log axis
};

std::string render_svg(const std::vector<Series>& series, const PlotOptions& options = {});
void emit_plot(const std::vector<Series>& series, const std::filesystem::path& path,
               const PlotOptions& options = {});

}  // namespace roughmetric
