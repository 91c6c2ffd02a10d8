#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "drivefusion/core/error.hpp"
#include "drivefusion/io/csv.hpp"

namespace df {

struct KinematicsConfig {
  double dt = 0.1;              // seconds between measurements
  double gain_k = 1.0;          // heading degrees per steering degree per second
  double initial_heading = 0;   // radians, along +x
};

struct Path {
  std::vector<double> x;        // meters, starts at 0
  std::vector<double> y;
  std::vector<double> heading;  // radians, one per point

  size_t size() const { return x.size(); }
};

// Dead-reckoning integration with angle and speed held constant within each
// step; position advances along the pre-step heading (forward Euler).
inline Path integrate_path(const std::vector<double>& angles_deg,
                           const std::vector<double>& speeds_kmh, const KinematicsConfig& cfg) {
  if (angles_deg.size() != speeds_kmh.size())
    throw DataError(strfmt("integrate_path: %zu angles but %zu speeds", angles_deg.size(),
                           speeds_kmh.size()));
  if (cfg.dt <= 0 || cfg.gain_k <= 0) throw UsageError("integrate_path: dt and gain must be > 0");
  Path p;
  p.x.reserve(angles_deg.size() + 1);
  p.y.reserve(angles_deg.size() + 1);
  p.heading.reserve(angles_deg.size() + 1);
  double x = 0, y = 0, theta = cfg.initial_heading;
  p.x.push_back(x);
  p.y.push_back(y);
  p.heading.push_back(theta);
  for (size_t i = 0; i < angles_deg.size(); ++i) {
    const double v = speeds_kmh[i] / 3.6;
    x += v * cfg.dt * std::cos(theta);
    y += v * cfg.dt * std::sin(theta);
    theta += cfg.gain_k * angles_deg[i] * cfg.dt * M_PI / 180.0;
    p.x.push_back(x);
    p.y.push_back(y);
    p.heading.push_back(theta);
  }
  return p;
}

inline double path_length(const Path& p) {
  double len = 0;
  for (size_t i = 1; i < p.size(); ++i)
    len += std::hypot(p.x[i] - p.x[i - 1], p.y[i] - p.y[i - 1]);
  return len;
}

inline void save_path_csv(const std::string& path_file, const Path& p) {
  CsvTable t;
  t.header = {"step", "x_m", "y_m", "heading_rad"};
  for (size_t i = 0; i < p.size(); ++i)
    t.rows.push_back({strfmt("%zu", i), fmt_double(p.x[i]), fmt_double(p.y[i]), fmt_double(p.heading[i])});
  write_csv(path_file, t);
}

}  // namespace df
