#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "drivefusion/core/error.hpp"
#include "drivefusion/io/csv.hpp"

namespace df {

// Normalized histogram of training targets over evenly spaced bins. The
// ensemble weights each member's prediction by the training mass of the bin
// that prediction falls into.
struct BinPrior {
  double lo = 0;
  double hi = 1;
  int n_bins = 1;
  std::vector<double> probs;

  double width() const { return (hi - lo) / n_bins; }
};

inline BinPrior build_prior(const std::vector<double>& train_values, int n_bins) {
  if (train_values.empty()) throw DataError("build_prior: no training values");
  if (n_bins < 1) throw UsageError("build_prior: n_bins must be >= 1");
  BinPrior p;
  p.n_bins = n_bins;
  p.lo = train_values[0];
  p.hi = train_values[0];
  for (double v : train_values) {
    p.lo = std::min(p.lo, v);
    p.hi = std::max(p.hi, v);
  }
  if (p.hi == p.lo) p.hi = std::nextafter(p.hi, std::numeric_limits<double>::infinity());
  std::vector<int64_t> counts(static_cast<size_t>(n_bins), 0);
  const double w = (p.hi - p.lo) / n_bins;
  for (double v : train_values) {
    auto idx = static_cast<int64_t>(std::floor((v - p.lo) / w));
    idx = std::max<int64_t>(0, std::min<int64_t>(n_bins - 1, idx));
    counts[static_cast<size_t>(idx)]++;
  }
  p.probs.resize(static_cast<size_t>(n_bins));
  for (int i = 0; i < n_bins; ++i)
    p.probs[static_cast<size_t>(i)] =
        static_cast<double>(counts[static_cast<size_t>(i)]) / static_cast<double>(train_values.size());
  return p;
}

inline int bin_index(const BinPrior& p, double v) {
  auto idx = static_cast<int64_t>(std::floor((v - p.lo) / p.width()));
  return static_cast<int>(std::max<int64_t>(0, std::min<int64_t>(p.n_bins - 1, idx)));
}

inline double prior_weighted_average(const std::vector<double>& preds, const BinPrior& prior) {
  if (preds.empty()) throw UsageError("prior_weighted_average: no predictions");
  double num = 0, den = 0;
  double lo = preds[0], hi = preds[0];
  for (double v : preds) {
    double w = prior.probs[static_cast<size_t>(bin_index(prior, v))];
    num += w * v;
    den += w;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo == hi) return lo;  // agreement is a fixed point, exactly
  double out;
  if (den == 0) {
    double mean = 0;
    for (double v : preds) mean += v;
    out = mean / static_cast<double>(preds.size());
  } else {
    out = num / den;
  }
  // the result is a convex combination; keep it inside the span despite rounding
  return std::min(hi, std::max(lo, out));
}

inline nlohmann::json prior_to_json(const BinPrior& p) {
  return {{"lo", p.lo}, {"hi", p.hi}, {"n_bins", p.n_bins}, {"probs", p.probs}};
}

inline BinPrior prior_from_json(const nlohmann::json& j) {
  BinPrior p;
  try {
    p.lo = j.at("lo").get<double>();
    p.hi = j.at("hi").get<double>();
    p.n_bins = j.at("n_bins").get<int>();
    p.probs = j.at("probs").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(strfmt("prior: malformed json (%s)", e.what()));
  }
  if (static_cast<int>(p.probs.size()) != p.n_bins || p.hi <= p.lo)
    throw DataError("prior: inconsistent fields");
  return p;
}

inline void save_prior(const std::string& path, const BinPrior& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_prior: cannot write " + path);
  out << prior_to_json(p).dump(2) << "\n";
}

inline BinPrior load_prior(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_prior: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(strfmt("load_prior: corrupt file %s (%s)", path.c_str(), e.what()));
  }
  return prior_from_json(j);
}

// One model's per-frame predictions for a set of chapters.
struct PredPoint {
  std::string chapter_id;
  int64_t frame_index = 0;
  int64_t timestamp_ms = 0;
  double angle_deg = 0;
  double speed_kmh = 0;
};

using PredictionSeries = std::vector<PredPoint>;

inline void save_series(const std::string& path, const PredictionSeries& series) {
  CsvTable t;
  t.header = {"chapter_id", "frame_index", "timestamp_ms", "angle_deg", "speed_kmh"};
  for (const auto& p : series)
    t.rows.push_back({p.chapter_id, strfmt("%lld", static_cast<long long>(p.frame_index)),
                      strfmt("%lld", static_cast<long long>(p.timestamp_ms)), fmt_double(p.angle_deg),
                      fmt_double(p.speed_kmh)});
  write_csv(path, t);
}

inline PredictionSeries load_series(const std::string& path) {
  CsvTable t = read_csv(path);
  const int ci_ch = t.col("chapter_id"), ci_fi = t.col("frame_index"), ci_ts = t.col("timestamp_ms");
  const int ci_a = t.col("angle_deg"), ci_s = t.col("speed_kmh");
  PredictionSeries out;
  out.reserve(t.rows.size());
  for (const auto& r : t.rows) {
    PredPoint p;
    p.chapter_id = r[static_cast<size_t>(ci_ch)];
    p.frame_index = parse_int(r[static_cast<size_t>(ci_fi)]);
    p.timestamp_ms = parse_int(r[static_cast<size_t>(ci_ts)]);
    p.angle_deg = parse_double(r[static_cast<size_t>(ci_a)]);
    p.speed_kmh = parse_double(r[static_cast<size_t>(ci_s)]);
    out.push_back(std::move(p));
  }
  return out;
}

inline void check_aligned(const std::vector<PredictionSeries>& series) {
  if (series.empty()) throw UsageError("ensemble: no member series");
  for (size_t m = 1; m < series.size(); ++m) {
    if (series[m].size() != series[0].size())
      throw DataError("ensemble: member series lengths differ");
    for (size_t i = 0; i < series[m].size(); ++i) {
      const PredPoint& a = series[0][i];
      const PredPoint& b = series[m][i];
      if (a.chapter_id != b.chapter_id || a.frame_index != b.frame_index ||
          a.timestamp_ms != b.timestamp_ms)
        throw DataError(strfmt("ensemble: misaligned series at row %zu (%s#%lld vs %s#%lld)", i,
                               a.chapter_id.c_str(), static_cast<long long>(a.frame_index),
                               b.chapter_id.c_str(), static_cast<long long>(b.frame_index)));
    }
  }
}

inline PredictionSeries plain_average(const std::vector<PredictionSeries>& series) {
  check_aligned(series);
  PredictionSeries out = series[0];
  const double n = static_cast<double>(series.size());
  for (size_t i = 0; i < out.size(); ++i) {
    double a = 0, s = 0;
    for (const auto& member : series) {
      a += member[i].angle_deg;
      s += member[i].speed_kmh;
    }
    out[i].angle_deg = a / n;
    out[i].speed_kmh = s / n;
  }
  return out;
}

inline PredictionSeries ensemble_series(const std::vector<PredictionSeries>& series,
                                        const BinPrior& angle_prior, const BinPrior& speed_prior) {
  check_aligned(series);
  PredictionSeries out = series[0];
  std::vector<double> a(series.size()), s(series.size());
  for (size_t i = 0; i < out.size(); ++i) {
    for (size_t m = 0; m < series.size(); ++m) {
      a[m] = series[m][i].angle_deg;
      s[m] = series[m][i].speed_kmh;
    }
    out[i].angle_deg = prior_weighted_average(a, angle_prior);
    out[i].speed_kmh = prior_weighted_average(s, speed_prior);
  }
  return out;
}

}  // namespace df
