// Copyright (c) 2026 The rnndyn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimal static SVG charts. Every chart is written next to a CSV holding the same
// numbers; the writers here only handle geometry.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "rnndyn/numerics.hpp"

namespace rnndyn::svg {

inline const std::vector<std::string>& palette() {
  static const std::vector<std::string> colors{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                               "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return colors;
}

inline std::string color(std::size_t i) { return palette()[i % palette().size()]; }

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (!(lo <= hi)) lo = 0, hi = 1;
    if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
    const double m = 0.05 * (hi - lo);
    lo -= m;
    hi += m;
  }
};

/// Plot area with linear axes; maps data coordinates to pixels.
class Canvas {
 public:
  Canvas(std::string title, std::string xlabel, std::string ylabel, Range x, Range y, int width = 640, int height = 480)
      : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)), x_(x), y_(y), w_(width), h_(height) {
    x_.pad();
    y_.pad();
  }

  double px(double x) const { return left_ + (x - x_.lo) / (x_.hi - x_.lo) * (w_ - left_ - right_); }
  double py(double y) const { return h_ - bottom_ - (y - y_.lo) / (y_.hi - y_.lo) * (h_ - top_ - bottom_); }

  void circle(double x, double y, double r, const std::string& fill, double opacity = 0.6) {
    body_ << "<circle cx=\"" << num(px(x)) << "\" cy=\"" << num(py(y)) << "\" r=\"" << r << "\" fill=\"" << fill
          << "\" fill-opacity=\"" << opacity << "\"/>\n";
  }

  void marker(double x, double y, const std::string& fill, const std::string& shape) {
    if (shape == "x") {
      const double cx = px(x), cy = py(y), s = 5;
      body_ << "<path d=\"M" << num(cx - s) << ' ' << num(cy - s) << "L" << num(cx + s) << ' ' << num(cy + s) << "M"
            << num(cx - s) << ' ' << num(cy + s) << "L" << num(cx + s) << ' ' << num(cy - s) << "\" stroke=\"" << fill
            << "\" stroke-width=\"2\"/>\n";
    } else if (shape == "square") {
      body_ << "<rect x=\"" << num(px(x) - 5) << "\" y=\"" << num(py(y) - 5) << "\" width=\"10\" height=\"10\" fill=\""
            << fill << "\"/>\n";
    } else {
      circle(x, y, 6, fill, 1.0);
    }
  }

  void polyline(const std::vector<double>& xs, const std::vector<double>& ys, const std::string& stroke,
                double width = 1.5, bool dashed = false) {
    body_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"" << width << "\""
          << (dashed ? " stroke-dasharray=\"6,4\"" : "") << " points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) body_ << num(px(xs[i])) << ',' << num(py(ys[i])) << ' ';
    body_ << "\"/>\n";
  }

  void legend(const std::vector<std::string>& names, const std::vector<std::string>& colors) {
    int row = 0;
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i].empty()) continue;
      const double y = top_ + 14.0 * row++;
      legend_ << "<rect x=\"" << w_ + 8 << "\" y=\"" << num(y) << "\" width=\"10\" height=\"10\" fill=\""
              << colors[i] << "\"/><text x=\"" << w_ + 22 << "\" y=\"" << num(y + 9) << "\" font-size=\"11\">"
              << escape(names[i]) << "</text>\n";
    }
    legend_width_ = std::max(legend_width_, 160);
  }

  void write(std::ostream& os) const {
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w_ + legend_width_ << "\" height=\"" << h_
       << "\" font-family=\"sans-serif\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << w_ / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title_) << "</text>\n";
    const double x0 = left_, x1 = w_ - right_, y0 = h_ - bottom_, y1 = top_;
    os << "<rect x=\"" << x0 << "\" y=\"" << y1 << "\" width=\"" << x1 - x0 << "\" height=\"" << y0 - y1
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
      const double xv = x_.lo + (x_.hi - x_.lo) * t / 4.0, yv = y_.lo + (y_.hi - y_.lo) * t / 4.0;
      os << "<text x=\"" << num(px(xv)) << "\" y=\"" << y0 + 16 << "\" text-anchor=\"middle\" font-size=\"10\">"
         << tick(xv) << "</text>\n";
      os << "<text x=\"" << x0 - 6 << "\" y=\"" << num(py(yv) + 3) << "\" text-anchor=\"end\" font-size=\"10\">"
         << tick(yv) << "</text>\n";
    }
    os << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << h_ - 8 << "\" text-anchor=\"middle\" font-size=\"12\">"
       << escape(xlabel_) << "</text>\n";
    os << "<text transform=\"translate(14," << (y0 + y1) / 2 << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"12\">"
       << escape(ylabel_) << "</text>\n";
    os << body_.str() << legend_.str() << "</svg>\n";
  }

 private:
  static std::string tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
  }

  std::string title_, xlabel_, ylabel_;
  Range x_, y_;
  int w_, h_;
  int left_ = 60, right_ = 20, top_ = 32, bottom_ = 44, legend_width_ = 0;
  std::ostringstream body_, legend_;
};

/// Scatter of (x, y) pairs coloured by group id.
inline void scatter(std::ostream& os, const std::string& title, const std::string& xlabel, const std::string& ylabel,
                    const std::vector<double>& xs, const std::vector<double>& ys, const std::vector<int>& groups,
                    const std::vector<std::string>& group_names) {
  Range rx, ry;
  for (double x : xs) rx.add(x);
  for (double y : ys) ry.add(y);
  Canvas c(title, xlabel, ylabel, rx, ry);
  const double r = xs.size() > 2000 ? 1.5 : 3.0;
  for (std::size_t i = 0; i < xs.size(); ++i) c.circle(xs[i], ys[i], r, color(static_cast<std::size_t>(groups[i])));
  std::vector<std::string> colors;
  for (std::size_t g = 0; g < group_names.size(); ++g) colors.push_back(color(g));
  c.legend(group_names, colors);
  c.write(os);
}

struct Series {
  std::string name;
  std::vector<double> xs, ys;
  int group = 0;
  bool dashed = false;
};

struct Marker {
  double x = 0, y = 0;
  int group = 0;
  std::string shape = "circle";  // circle | square | x
};

/// Polylines (one per series) plus optional point markers.
inline void lines(std::ostream& os, const std::string& title, const std::string& xlabel, const std::string& ylabel,
                  const std::vector<Series>& series, const std::vector<std::string>& group_names,
                  const std::vector<Marker>& markers = {}) {
  Range rx, ry;
  for (const auto& s : series) {
    for (double x : s.xs) rx.add(x);
    for (double y : s.ys) ry.add(y);
  }
  for (const auto& m : markers) rx.add(m.x), ry.add(m.y);
  Canvas c(title, xlabel, ylabel, rx, ry);
  for (const auto& s : series) c.polyline(s.xs, s.ys, color(static_cast<std::size_t>(s.group)), 1.5, s.dashed);
  for (const auto& m : markers) c.marker(m.x, m.y, color(static_cast<std::size_t>(m.group)), m.shape);
  std::vector<std::string> colors;
  for (std::size_t g = 0; g < group_names.size(); ++g) colors.push_back(color(g));
  c.legend(group_names, colors);
  c.write(os);
}

/// Cell-coloured matrix (blue for low, red for high) with the value printed in each cell.
inline void heatmap(std::ostream& os, const std::string& title, const Matrix& m, const std::vector<std::string>& rows,
                    const std::vector<std::string>& cols, const std::string& row_label, const std::string& col_label) {
  const int cell = 48, left = 130, top = 50;
  const int w = left + cell * static_cast<int>(m.cols()) + 20, h = top + cell * static_cast<int>(m.rows()) + 60;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (!std::isfinite(m.data()[i])) continue;
    lo = std::min(lo, m.data()[i]);
    hi = std::max(hi, m.data()[i]);
  }
  if (!(hi > lo)) hi = lo + 1.0;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title) << "</text>\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      const double t = std::isfinite(v) ? (v - lo) / (hi - lo) : 0.0;
      char fill[8];
      std::snprintf(fill, sizeof fill, "#%02x%02x%02x", static_cast<int>(255 * t), 64, static_cast<int>(255 * (1 - t)));
      const int x = left + cell * static_cast<int>(j), y = top + cell * static_cast<int>(i);
      os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\""
         << (std::isfinite(v) ? fill : "#dddddd") << "\" stroke=\"white\"/>\n";
      char text[32];
      std::snprintf(text, sizeof text, "%.2f", v);
      os << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4
         << "\" text-anchor=\"middle\" font-size=\"11\" fill=\"white\">" << (std::isfinite(v) ? text : "-") << "</text>\n";
    }
    os << "<text x=\"" << left - 6 << "\" y=\"" << top + cell * static_cast<int>(i) + cell / 2 + 4
       << "\" text-anchor=\"end\" font-size=\"11\">" << escape(rows.at(static_cast<std::size_t>(i))) << "</text>\n";
  }
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    os << "<text x=\"" << left + cell * static_cast<int>(j) + cell / 2 << "\" y=\""
       << top + cell * static_cast<int>(m.rows()) + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
       << escape(cols.at(static_cast<std::size_t>(j))) << "</text>\n";
  }
  os << "<text x=\"" << left + cell * static_cast<int>(m.cols()) / 2 << "\" y=\"" << h - 12
     << "\" text-anchor=\"middle\" font-size=\"12\">" << escape(col_label) << "</text>\n";
  os << "<text transform=\"translate(14," << top + cell * static_cast<int>(m.rows()) / 2
     << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"12\">" << escape(row_label) << "</text>\n";
  os << "</svg>\n";
}

}  // namespace rnndyn::svg
