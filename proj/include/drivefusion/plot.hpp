#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "drivefusion/core/error.hpp"
#include "drivefusion/core/strings.hpp"
#include "drivefusion/evaluate.hpp"
#include "drivefusion/trajectory.hpp"

namespace df {

// Minimal SVG chart emitter: line charts, bar charts, equal-scale path plots.
// Files only; there is no interactive viewer.
namespace svg {

struct Series {
  std::string label;
  std::string color;
  std::vector<double> x, y;
};

struct Limits {
  double lo = 0, hi = 1;
};

inline Limits nice_limits(double lo, double hi) {
  if (!(hi > lo)) {
    hi = lo + 1;
    lo -= 1;
  }
  double pad = (hi - lo) * 0.05;
  return {lo - pad, hi + pad};
}

inline double nice_tick_step(double range, int target = 6) {
  double raw = range / target;
  double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double norm = raw / mag;
  double step = norm < 1.5 ? 1 : (norm < 3.5 ? 2 : (norm < 7.5 ? 5 : 10));
  return step * mag;
}

inline std::string format_tick(double v) {
  std::string s = strfmt("%.6g", v);
  return s == "-0" ? "0" : s;
}

class Canvas {
public:
  Canvas(int width, int height) : w_(width), h_(height) {
    body_ += strfmt(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
        "viewBox=\"0 0 %d %d\">\n<rect width=\"%d\" height=\"%d\" fill=\"white\"/>\n",
        w_, h_, w_, h_, w_, h_);
  }

  void line(double x1, double y1, double x2, double y2, const std::string& color, double sw = 1.0) {
    body_ += strfmt("<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"%s\" "
                    "stroke-width=\"%.2f\"/>\n",
                    x1, y1, x2, y2, color.c_str(), sw);
  }

  void polyline(const std::vector<double>& xs, const std::vector<double>& ys,
                const std::string& color, double sw = 1.5) {
    if (xs.empty()) return;
    body_ += strfmt("<polyline fill=\"none\" stroke=\"%s\" stroke-width=\"%.2f\" points=\"",
                    color.c_str(), sw);
    for (size_t i = 0; i < xs.size(); ++i) body_ += strfmt("%.2f,%.2f ", xs[i], ys[i]);
    body_ += "\"/>\n";
  }

  void rect(double x, double y, double w, double h, const std::string& fill) {
    body_ += strfmt("<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"%s\"/>\n", x,
                    y, w, h, fill.c_str());
  }

  void text(double x, double y, const std::string& s, int size = 11,
            const std::string& anchor = "start", const std::string& color = "#222") {
    body_ += strfmt("<text x=\"%.2f\" y=\"%.2f\" font-family=\"sans-serif\" font-size=\"%d\" "
                    "text-anchor=\"%s\" fill=\"%s\">%s</text>\n",
                    x, y, size, anchor.c_str(), color.c_str(), s.c_str());
  }

  std::string finish() { return body_ + "</svg>\n"; }

  int width() const { return w_; }
  int height() const { return h_; }

private:
  int w_, h_;
  std::string body_;
};

struct Frame {
  double x0, y0, x1, y1;  // pixel box of the data area
  Limits xlim, ylim;

  double px(double x) const { return x0 + (x - xlim.lo) / (xlim.hi - xlim.lo) * (x1 - x0); }
  double py(double y) const { return y1 - (y - ylim.lo) / (ylim.hi - ylim.lo) * (y1 - y0); }
};

inline void draw_axes(Canvas& c, const Frame& f, const std::string& xlabel,
                      const std::string& ylabel) {
  c.line(f.x0, f.y1, f.x1, f.y1, "#444");
  c.line(f.x0, f.y0, f.x0, f.y1, "#444");
  double xstep = nice_tick_step(f.xlim.hi - f.xlim.lo);
  for (double v = std::ceil(f.xlim.lo / xstep) * xstep; v <= f.xlim.hi + 1e-12; v += xstep) {
    c.line(f.px(v), f.y1, f.px(v), f.y1 + 4, "#444");
    c.text(f.px(v), f.y1 + 16, format_tick(v), 10, "middle");
  }
  double ystep = nice_tick_step(f.ylim.hi - f.ylim.lo);
  for (double v = std::ceil(f.ylim.lo / ystep) * ystep; v <= f.ylim.hi + 1e-12; v += ystep) {
    c.line(f.x0 - 4, f.py(v), f.x0, f.py(v), "#444");
    c.text(f.x0 - 7, f.py(v) + 3, format_tick(v), 10, "end");
  }
  c.text((f.x0 + f.x1) / 2, f.y1 + 32, xlabel, 11, "middle");
  c.text(f.x0 - 38, f.y0 - 8, ylabel, 11, "start");
}

inline void draw_legend(Canvas& c, const Frame& f, const std::vector<Series>& series) {
  double x = f.x0 + 10, y = f.y0 + 14;
  for (const auto& s : series) {
    c.line(x, y - 4, x + 18, y - 4, s.color, 2.0);
    c.text(x + 24, y, s.label, 11);
    y += 16;
  }
}

inline std::string line_chart(const std::vector<Series>& series, const std::string& title,
                              const std::string& xlabel, const std::string& ylabel, int width = 760,
                              int height = 300) {
  Canvas c(width, height);
  Frame f;
  f.x0 = 60;
  f.y0 = 30;
  f.x1 = width - 15;
  f.y1 = height - 45;
  double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
  for (const auto& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      xlo = std::min(xlo, s.x[i]);
      xhi = std::max(xhi, s.x[i]);
      ylo = std::min(ylo, s.y[i]);
      yhi = std::max(yhi, s.y[i]);
    }
  f.xlim = nice_limits(xlo, xhi);
  f.ylim = nice_limits(ylo, yhi);
  draw_axes(c, f, xlabel, ylabel);
  c.text((f.x0 + f.x1) / 2, 18, title, 13, "middle");
  for (const auto& s : series) {
    std::vector<double> xs(s.x.size()), ys(s.y.size());
    for (size_t i = 0; i < s.x.size(); ++i) {
      xs[i] = f.px(s.x[i]);
      ys[i] = f.py(s.y[i]);
    }
    c.polyline(xs, ys, s.color);
  }
  draw_legend(c, f, series);
  return c.finish();
}

}  // namespace svg

// Ground truth and prediction overlaid, one panel per target, as in the
// published prediction figures (truth blue, prediction red).
inline std::string plot_predictions(const std::vector<double>& t_sec,
                                    const std::vector<double>& truth_angle,
                                    const std::vector<double>& pred_angle,
                                    const std::vector<double>& truth_speed,
                                    const std::vector<double>& pred_speed,
                                    const std::string& title) {
  svg::Series ta{"truth", "#1f4fbf", t_sec, truth_angle};
  svg::Series pa{"prediction", "#c0392b", t_sec, pred_angle};
  svg::Series ts{"truth", "#1f4fbf", t_sec, truth_speed};
  svg::Series ps{"prediction", "#c0392b", t_sec, pred_speed};
  std::string top = svg::line_chart({ta, pa}, title + " - steering angle", "time [s]", "angle [deg]");
  std::string bottom = svg::line_chart({ts, ps}, title + " - speed", "time [s]", "speed [km/h]");
  // stack the two panels into one svg
  std::string out = strfmt(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"760\" height=\"610\" viewBox=\"0 0 760 610\">\n"
      "<g>%s</g>\n<g transform=\"translate(0,305)\">%s</g>\n</svg>\n",
      top.c_str(), bottom.c_str());
  return out;
}

// Equal-scale trajectory plot with kilometer axes.
inline std::string plot_path(const Path& p, const std::string& title, int size = 520) {
  svg::Canvas c(size, size);
  svg::Frame f;
  f.x0 = 60;
  f.y0 = 30;
  f.x1 = size - 20;
  f.y1 = size - 50;
  double xlo = 0, xhi = 0, ylo = 0, yhi = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    xlo = std::min(xlo, p.x[i] / 1000.0);
    xhi = std::max(xhi, p.x[i] / 1000.0);
    ylo = std::min(ylo, p.y[i] / 1000.0);
    yhi = std::max(yhi, p.y[i] / 1000.0);
  }
  // force equal scale on both axes
  double cx = (xlo + xhi) / 2, cy = (ylo + yhi) / 2;
  double half = std::max({(xhi - xlo) / 2, (yhi - ylo) / 2, 1e-4}) * 1.1;
  f.xlim = {cx - half, cx + half};
  f.ylim = {cy - half, cy + half};
  svg::draw_axes(c, f, "x [km]", "y [km]");
  c.text((f.x0 + f.x1) / 2, 18, title, 13, "middle");
  std::vector<double> xs(p.size()), ys(p.size());
  for (size_t i = 0; i < p.size(); ++i) {
    xs[i] = f.px(p.x[i] / 1000.0);
    ys[i] = f.py(p.y[i] / 1000.0);
  }
  c.polyline(xs, ys, "#c0392b");
  c.rect(f.px(0) - 3, f.py(0) - 3, 6, 6, "#1f4fbf");
  c.text(f.px(0) + 6, f.py(0) - 6, "start", 10);
  return c.finish();
}

inline std::string plot_angle_histogram(const std::vector<int64_t>& counts, double bin_width_deg,
                                        const std::string& title) {
  svg::Canvas c(760, 300);
  svg::Frame f;
  f.x0 = 60;
  f.y0 = 30;
  f.x1 = 745;
  f.y1 = 255;
  int64_t maxc = 1;
  for (int64_t v : counts) maxc = std::max(maxc, v);
  f.xlim = {0, bin_width_deg * static_cast<double>(counts.size())};
  f.ylim = {0, static_cast<double>(maxc) * 1.05};
  svg::draw_axes(c, f, "|angle| [deg]", "count");
  c.text((f.x0 + f.x1) / 2, 18, title, 13, "middle");
  for (size_t i = 0; i < counts.size(); ++i) {
    double x0 = f.px(static_cast<double>(i) * bin_width_deg);
    double x1 = f.px(static_cast<double>(i + 1) * bin_width_deg);
    double y = f.py(static_cast<double>(counts[i]));
    if (counts[i] > 0) c.rect(x0 + 0.5, y, std::max(0.5, x1 - x0 - 1.0), f.y1 - y, "#4a7ebb");
  }
  return c.finish();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << content;
}

}  // namespace df
