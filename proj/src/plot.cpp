#include "roughmetric/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "roughmetric/error.hpp"

namespace roughmetric {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 160, kTop = 40, kBottom = 50;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f"};

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_svg(const std::vector<Series>& series, const PlotOptions& options) {
  if (series.empty()) throw ConfigError("a plot needs at least one series");
  const auto y_of = [&](double y) { return options.log_y ? std::log10(y) : y; };
  const auto usable = [&](const std::pair<double, double>& p) {
    return std::isfinite(p.first) && std::isfinite(p.second) && (!options.log_y || p.second > 0.0);
  };
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  std::size_t count = 0;
  for (const Series& s : series) {
    for (const auto& p : s.points) {
      if (!usable(p)) continue;
      ++count;
      x0 = std::min(x0, p.first);
      x1 = std::max(x1, p.first);
      y0 = std::min(y0, y_of(p.second));
      y1 = std::max(y1, y_of(p.second));
    }
  }
  if (count == 0) throw ConfigError("a plot needs at least one finite point");
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) y1 = y0 + 1.0;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  const auto sx = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  const auto sy = [&](double y) { return kTop + (1.0 - (y_of(y) - y0) / (y1 - y0)) * ph; };

  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" viewBox=\"0 0 640 420\">\n";
  out += "<rect width=\"640\" height=\"420\" fill=\"white\"/>\n";
  out += "<rect x=\"" + fmt("%.2f", kLeft) + "\" y=\"" + fmt("%.2f", kTop) + "\" width=\"" + fmt("%.2f", pw) +
         "\" height=\"" + fmt("%.2f", ph) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0;
    const double fy = y0 + (y1 - y0) * i / 4.0;
    const double px = kLeft + pw * i / 4.0, py = kTop + ph * (1.0 - i / 4.0);
    out += "<text x=\"" + fmt("%.2f", px) + "\" y=\"" + fmt("%.2f", kTop + ph + 16) +
           "\" font-size=\"11\" text-anchor=\"middle\">" + fmt("%.3g", fx) + "</text>\n";
    const std::string ylab = options.log_y ? "1e" + fmt("%.2f", fy) : fmt("%.3g", fy);
    out += "<text x=\"" + fmt("%.2f", kLeft - 6) + "\" y=\"" + fmt("%.2f", py + 4) +
           "\" font-size=\"11\" text-anchor=\"end\">" + ylab + "</text>\n";
  }
  out += "<text x=\"320\" y=\"22\" font-size=\"14\" text-anchor=\"middle\">" + escape(options.title) + "</text>\n";
  out += "<text x=\"" + fmt("%.2f", kLeft + pw / 2) + "\" y=\"410\" font-size=\"12\" text-anchor=\"middle\">" +
         escape(options.x_label) + "</text>\n";
  out += "<text x=\"14\" y=\"" + fmt("%.2f", kTop + ph / 2) + "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
         fmt("%.2f", kTop + ph / 2) + ")\">" + escape(options.y_label) + "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* colour = kPalette[i % 8];
    std::string pts;
    for (const auto& p : series[i].points) {
      if (!usable(p)) continue;
      if (!pts.empty()) pts += ' ';
      pts += fmt("%.2f", sx(p.first)) + "," + fmt("%.2f", sy(p.second));
    }
    out += "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    const double ly = kTop + 14.0 * (i + 1);
    out += "<line x1=\"" + fmt("%.2f", kWidth - kRight + 10) + "\" y1=\"" + fmt("%.2f", ly - 4) + "\" x2=\"" +
           fmt("%.2f", kWidth - kRight + 30) + "\" y2=\"" + fmt("%.2f", ly - 4) + "\" stroke=\"" + colour + "\"/>\n";
    out += "<text x=\"" + fmt("%.2f", kWidth - kRight + 34) + "\" y=\"" + fmt("%.2f", ly) + "\" font-size=\"11\">" +
           escape(series[i].label) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

void emit_plot(const std::vector<Series>& series, const std::filesystem::path& path,
               const PlotOptions& options) {
  const std::string svg = render_svg(series, options);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write " + path.string());
  f << svg;
}

}  // namespace roughmetric
