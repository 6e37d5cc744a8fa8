#pragma once

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "uot/common.hpp"

namespace uot {

/// Minimal hand-rolled SVG line plot: axes with ticks, polylines, an optional
/// vertical marker, a legend. Coordinates are mapped linearly; callers wanting
/// log scales pass logged data.
class SvgPlot {
public:
  SvgPlot(double x_lo, double x_hi, double y_lo, double y_hi, std::string x_label,
          std::string y_label)
      : x_lo_(x_lo), x_hi_(x_hi), y_lo_(y_lo), y_hi_(y_hi), x_label_(std::move(x_label)),
        y_label_(std::move(y_label)) {
    if (!(x_hi_ > x_lo_) || !(y_hi_ > y_lo_)) throw Error("SvgPlot: empty axis range");
  }

  void polyline(const std::vector<double>& xs, const std::vector<double>& ys,
                const std::string& color, const std::string& label) {
    if (xs.size() != ys.size() || xs.empty()) throw Error("SvgPlot: bad polyline data");
    series_.push_back({xs, ys, color, label});
  }

  void vline(double x, const std::string& color, const std::string& label) {
    markers_.push_back({x, color, label});
  }

  void write(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw Error("SvgPlot: cannot open " + path);
    os << render();
    if (!os) throw Error("SvgPlot: failed writing " + path);
  }

  std::string render() const {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
       << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
    os << "<rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";

    // axes
    os << "<line x1=\"" << kML << "\" y1=\"" << kH - kMB << "\" x2=\"" << kW - kMR << "\" y2=\""
       << kH - kMB << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << kML << "\" y1=\"" << kMT << "\" x2=\"" << kML << "\" y2=\""
       << kH - kMB << "\" stroke=\"black\"/>\n";

    for (int t = 0; t <= kTicks; ++t) {
      const double fx = x_lo_ + (x_hi_ - x_lo_) * t / kTicks;
      const double px = map_x(fx);
      os << "<line x1=\"" << px << "\" y1=\"" << kH - kMB << "\" x2=\"" << px << "\" y2=\""
         << kH - kMB + 5 << "\" stroke=\"black\"/>\n";
      os << "<text x=\"" << px << "\" y=\"" << kH - kMB + 18
         << "\" font-size=\"11\" text-anchor=\"middle\">" << short_num(fx) << "</text>\n";
      const double fy = y_lo_ + (y_hi_ - y_lo_) * t / kTicks;
      const double py = map_y(fy);
      os << "<line x1=\"" << kML - 5 << "\" y1=\"" << py << "\" x2=\"" << kML << "\" y2=\"" << py
         << "\" stroke=\"black\"/>\n";
      os << "<text x=\"" << kML - 8 << "\" y=\"" << py + 4
         << "\" font-size=\"11\" text-anchor=\"end\">" << short_num(fy) << "</text>\n";
    }

    os << "<text x=\"" << (kML + kW - kMR) / 2 << "\" y=\"" << kH - 8
       << "\" font-size=\"13\" text-anchor=\"middle\">" << x_label_ << "</text>\n";
    os << "<text x=\"14\" y=\"" << (kMT + kH - kMB) / 2
       << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
       << (kMT + kH - kMB) / 2 << ")\">" << y_label_ << "</text>\n";

    for (const auto& m : markers_) {
      const double px = map_x(m.x);
      os << "<line x1=\"" << px << "\" y1=\"" << kMT << "\" x2=\"" << px << "\" y2=\""
         << kH - kMB << "\" stroke=\"" << m.color << "\" stroke-dasharray=\"4 3\"/>\n";
      os << "<text x=\"" << px + 4 << "\" y=\"" << kMT + 12 << "\" font-size=\"11\" fill=\""
         << m.color << "\">" << m.label << "</text>\n";
    }

    for (const auto& s : series_) {
      os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < s.xs.size(); ++i)
        os << map_x(s.xs[i]) << "," << map_y(s.ys[i]) << " ";
      os << "\"/>\n";
    }

    // legend, top-right
    double ly = kMT + 10;
    for (const auto& s : series_) {
      const double lx = kW - kMR - 150;
      os << "<line x1=\"" << lx << "\" y1=\"" << ly << "\" x2=\"" << lx + 24 << "\" y2=\"" << ly
         << "\" stroke=\"" << s.color << "\" stroke-width=\"1.5\"/>\n";
      os << "<text x=\"" << lx + 30 << "\" y=\"" << ly + 4 << "\" font-size=\"12\">" << s.label
         << "</text>\n";
      ly += 18;
    }

    os << "</svg>\n";
    return os.str();
  }

private:
  static constexpr int kW = 640, kH = 480;
  static constexpr int kML = 64, kMR = 24, kMT = 20, kMB = 48;
  static constexpr int kTicks = 5;

  struct Series {
    std::vector<double> xs, ys;
    std::string color, label;
  };
  struct Marker {
    double x;
    std::string color, label;
  };

  double map_x(double x) const {
    return kML + (x - x_lo_) / (x_hi_ - x_lo_) * (kW - kML - kMR);
  }
  double map_y(double y) const {
    return kH - kMB - (y - y_lo_) / (y_hi_ - y_lo_) * (kH - kMT - kMB);
  }

  static std::string short_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
  }

  double x_lo_, x_hi_, y_lo_, y_hi_;
  std::string x_label_, y_label_;
  std::vector<Series> series_;
  std::vector<Marker> markers_;
};

}  // namespace uot
