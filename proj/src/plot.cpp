#include "kbnet/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "kbnet/data_io.hpp"
#include "kbnet/tensor.hpp"

namespace kbnet {

namespace {

// 5x7 glyphs for the characters needed by numeric tick labels.
struct Glyph {
  char ch;
  const char* rows[7];
};

const Glyph kGlyphs[] = {
    {'0', {"01110", "10001", "10011", "10101", "11001", "10001", "01110"}},
    {'1', {"00100", "01100", "00100", "00100", "00100", "00100", "01110"}},
    {'2', {"01110", "10001", "00001", "00010", "00100", "01000", "11111"}},
    {'3', {"11110", "00001", "00001", "01110", "00001", "00001", "11110"}},
    {'4', {"00010", "00110", "01010", "10010", "11111", "00010", "00010"}},
    {'5', {"11111", "10000", "11110", "00001", "00001", "10001", "01110"}},
    {'6', {"00110", "01000", "10000", "11110", "10001", "10001", "01110"}},
    {'7', {"11111", "00001", "00010", "00100", "01000", "01000", "01000"}},
    {'8', {"01110", "10001", "10001", "01110", "10001", "10001", "01110"}},
    {'9', {"01110", "10001", "10001", "01111", "00001", "00010", "01100"}},
    {'.', {"00000", "00000", "00000", "00000", "00000", "01100", "01100"}},
    {'-', {"00000", "00000", "00000", "01110", "00000", "00000", "00000"}},
    {'+', {"00000", "00100", "00100", "11111", "00100", "00100", "00000"}},
    {'e', {"00000", "00000", "01110", "10001", "11111", "10000", "01110"}},
    {' ', {"00000", "00000", "00000", "00000", "00000", "00000", "00000"}},
};

const Glyph* find_glyph(char c) {
  for (const Glyph& g : kGlyphs) {
    if (g.ch == c) return &g;
  }
  return nullptr;
}

struct Canvas {
  int w, h;
  std::vector<double> rgb;  // 3 planes

  Canvas(int w_, int h_) : w(w_), h(h_), rgb(static_cast<std::size_t>(3) * w_ * h_, 1.0) {}

  void set(int x, int y, double r, double g, double b) {
    if (x < 0 || x >= w || y < 0 || y >= h) return;
    const std::int64_t plane = static_cast<std::int64_t>(w) * h;
    const std::int64_t i = static_cast<std::int64_t>(y) * w + x;
    rgb[i] = r;
    rgb[plane + i] = g;
    rgb[2 * plane + i] = b;
  }

  void line(double x0, double y0, double x1, double y1, double r, double g, double b) {
    const int steps = static_cast<int>(std::max(std::abs(x1 - x0), std::abs(y1 - y0))) * 2 + 2;
    for (int i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / steps;
      set(static_cast<int>(std::lround(x0 + t * (x1 - x0))),
          static_cast<int>(std::lround(y0 + t * (y1 - y0))), r, g, b);
    }
  }

  void text(int x, int y, const std::string& s) {
    for (char c : s) {
      const Glyph* g = find_glyph(c);
      if (g) {
        for (int ry = 0; ry < 7; ++ry)
          for (int rx = 0; rx < 5; ++rx)
            if (g->rows[ry][rx] == '1') set(x + rx, y + ry, 0.15, 0.15, 0.15);
      }
      x += 6;
    }
  }
};

std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

void save_line_plot(const std::string& path, const std::string& x_label,
                    const std::string& y_label, const std::vector<double>& x,
                    const std::vector<double>& y) {
  if (x.size() != y.size() || x.empty()) {
    throw std::invalid_argument("save_line_plot: x and y must be non-empty and equal-sized");
  }
  (void)x_label;
  (void)y_label;
  const int w = 480, h = 320;
  const int ml = 70, mr = 20, mt = 20, mb = 40;
  Canvas cv(w, h);

  double x_lo = *std::min_element(x.begin(), x.end());
  double x_hi = *std::max_element(x.begin(), x.end());
  double y_lo = *std::min_element(y.begin(), y.end());
  double y_hi = *std::max_element(y.begin(), y.end());
  if (x_hi - x_lo < 1e-12) x_hi = x_lo + 1.0;
  if (y_hi - y_lo < 1e-12) y_hi = y_lo + 1.0;
  const double ypad = 0.05 * (y_hi - y_lo);
  y_lo -= ypad;
  y_hi += ypad;

  auto px = [&](double v) { return ml + (v - x_lo) / (x_hi - x_lo) * (w - ml - mr); };
  auto py = [&](double v) { return h - mb - (v - y_lo) / (y_hi - y_lo) * (h - mt - mb); };

  // grid and ticks
  for (int i = 0; i <= 4; ++i) {
    const double xv = x_lo + (x_hi - x_lo) * i / 4.0;
    const double yv = y_lo + (y_hi - y_lo) * i / 4.0;
    cv.line(px(xv), mt, px(xv), h - mb, 0.9, 0.9, 0.9);
    cv.line(ml, py(yv), w - mr, py(yv), 0.9, 0.9, 0.9);
    cv.text(static_cast<int>(px(xv)) - 12, h - mb + 8, fmt_tick(xv));
    cv.text(4, static_cast<int>(py(yv)) - 3, fmt_tick(yv));
  }
  cv.line(ml, h - mb, w - mr, h - mb, 0.2, 0.2, 0.2);
  cv.line(ml, mt, ml, h - mb, 0.2, 0.2, 0.2);

  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    cv.line(px(x[i]), py(y[i]), px(x[i + 1]), py(y[i + 1]), 0.13, 0.36, 0.75);
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (int dy = -2; dy <= 2; ++dy)
      for (int dx = -2; dx <= 2; ++dx)
        cv.set(static_cast<int>(px(x[i])) + dx, static_cast<int>(py(y[i])) + dy, 0.13, 0.36,
               0.75);
  }

  Tensor img = Tensor::from_data({1, 3, h, w}, cv.rgb);
  write_rgb_png(img, path);
}

}  // namespace kbnet
