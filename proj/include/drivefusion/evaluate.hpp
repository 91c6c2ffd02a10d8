#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "drivefusion/core/error.hpp"
#include "drivefusion/core/strings.hpp"

namespace df {

inline double mse(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.empty() || pred.size() != truth.size())
    throw DataError(strfmt("mse: series misaligned (%zu vs %zu)", pred.size(), truth.size()));
  double acc = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    double d = pred[i] - truth[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

struct ZoneMetrics {
  double mse_angle = 0;
  double mse_speed = 0;
  int64_t count = 0;
};

struct EvalReport {
  double mse_angle = 0;
  double mse_speed = 0;
  double combined = 0;
  std::map<std::string, ZoneMetrics> per_zone;
  int64_t n_samples = 0;
};

// Overall and per-zone raw-unit MSE. Tags may overlap (a frame can be both
// Zone30 and Pedestrian); tags with no frames simply do not appear.
inline EvalReport per_zone_report(const std::vector<double>& pred_angle,
                                  const std::vector<double>& truth_angle,
                                  const std::vector<double>& pred_speed,
                                  const std::vector<double>& truth_speed,
                                  const std::vector<std::vector<std::string>>& zone_tags) {
  const size_t n = pred_angle.size();
  if (n == 0 || truth_angle.size() != n || pred_speed.size() != n || truth_speed.size() != n ||
      zone_tags.size() != n)
    throw DataError("per_zone_report: misaligned inputs");
  EvalReport rep;
  rep.n_samples = static_cast<int64_t>(n);
  for (size_t i = 0; i < n; ++i) {
    const double da = pred_angle[i] - truth_angle[i];
    const double ds = pred_speed[i] - truth_speed[i];
    rep.mse_angle += da * da;
    rep.mse_speed += ds * ds;
    for (const auto& tag : zone_tags[i]) {
      ZoneMetrics& z = rep.per_zone[tag];
      z.mse_angle += da * da;
      z.mse_speed += ds * ds;
      z.count += 1;
    }
  }
  rep.mse_angle /= static_cast<double>(n);
  rep.mse_speed /= static_cast<double>(n);
  rep.combined = rep.mse_angle + rep.mse_speed;
  for (auto& [tag, z] : rep.per_zone) {
    z.mse_angle /= static_cast<double>(z.count);
    z.mse_speed /= static_cast<double>(z.count);
  }
  return rep;
}

// Histogram of |angle| in fixed-width bins over [0, 180].
inline std::vector<int64_t> angle_histogram(const std::vector<double>& values,
                                            double bin_width_deg = 5.0) {
  if (bin_width_deg <= 0) throw UsageError("angle_histogram: bin width must be > 0");
  const int n_bins = static_cast<int>(std::ceil(180.0 / bin_width_deg));
  std::vector<int64_t> counts(static_cast<size_t>(n_bins), 0);
  for (double v : values) {
    if (v < -180.0 || v > 180.0)
      throw DataError(strfmt("angle_histogram: value %g outside [-180, 180]", v));
    int idx = static_cast<int>(std::floor(std::abs(v) / bin_width_deg));
    if (idx >= n_bins) idx = n_bins - 1;  // |v| == 180 lands in the top bin
    counts[static_cast<size_t>(idx)]++;
  }
  return counts;
}

inline nlohmann::json report_to_json(const EvalReport& rep) {
  nlohmann::json zones;
  for (const auto& [tag, z] : rep.per_zone)
    zones[tag] = {{"mse_angle", z.mse_angle}, {"mse_speed", z.mse_speed}, {"count", z.count}};
  return {{"overall",
           {{"mse_angle", rep.mse_angle}, {"mse_speed", rep.mse_speed}, {"combined", rep.combined}}},
          {"per_zone", zones},
          {"n_samples", rep.n_samples}};
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport rep;
  try {
    rep.mse_angle = j.at("overall").at("mse_angle").get<double>();
    rep.mse_speed = j.at("overall").at("mse_speed").get<double>();
    rep.combined = j.at("overall").at("combined").get<double>();
    rep.n_samples = j.at("n_samples").get<int64_t>();
    for (const auto& [tag, z] : j.at("per_zone").items()) {
      ZoneMetrics zm;
      zm.mse_angle = z.at("mse_angle").get<double>();
      zm.mse_speed = z.at("mse_speed").get<double>();
      zm.count = z.at("count").get<int64_t>();
      rep.per_zone[tag] = zm;
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(strfmt("report: malformed json (%s)", e.what()));
  }
  return rep;
}

inline void save_report(const std::string& path, const EvalReport& rep) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_report: cannot write " + path);
  out << report_to_json(rep).dump(2) << "\n";
}

// Aligned plain-text table, one row per zone after the overall row.
inline std::string report_table(const EvalReport& rep) {
  std::string out;
  out += strfmt("%-14s %12s %12s %8s\n", "Zone", "MSE Angle", "MSE Speed", "Count");
  out += strfmt("%-14s %12.3f %12.3f %8lld\n", "Overall", rep.mse_angle, rep.mse_speed,
                static_cast<long long>(rep.n_samples));
  for (const auto& [tag, z] : rep.per_zone)
    out += strfmt("%-14s %12.3f %12.3f %8lld\n", tag.c_str(), z.mse_angle, z.mse_speed,
                  static_cast<long long>(z.count));
  return out;
}

}  // namespace df
