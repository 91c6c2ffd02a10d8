#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "drivefusion/core/rng.hpp"
#include "drivefusion/data/types.hpp"
#include "drivefusion/io/csv.hpp"

namespace df {

namespace fs = std::filesystem;

inline std::vector<std::string> parse_zone_tags(const std::string& field) {
  if (field.empty()) return {};
  return split(field, '|');
}

inline void write_labels_csv(const std::string& path, const std::vector<LabelRow>& rows) {
  CsvTable t;
  t.header = {"frame_index", "timestamp_ms", "angle_deg", "speed_kmh", "zone_tags"};
  for (int k = 0; k < kSemanticFields; ++k) t.header.push_back(strfmt("sem_%02d", k));
  for (int k = 0; k < kSemanticFields; ++k) t.header.push_back(strfmt("miss_%02d", k));
  for (const auto& r : rows) {
    std::vector<std::string> row;
    row.push_back(strfmt("%lld", static_cast<long long>(r.frame_index)));
    row.push_back(strfmt("%lld", static_cast<long long>(r.timestamp_ms)));
    row.push_back(fmt_double(r.angle_deg));
    row.push_back(fmt_double(r.speed_kmh));
    row.push_back(join(r.zone_tags, '|'));
    for (int k = 0; k < kSemanticFields; ++k)
      row.push_back(fmt_double(r.semantic.values[static_cast<size_t>(k)]));
    for (int k = 0; k < kSemanticFields; ++k)
      row.push_back(r.semantic.missing[static_cast<size_t>(k)] ? "1" : "0");
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

inline std::vector<LabelRow> load_labels(const DatasetManifest& m, const ChapterInfo& info) {
  fs::path path = m.chapter_dir(info) / "labels.csv";
  CsvTable t = read_csv(path.string());
  const int ci_frame = t.col("frame_index"), ci_ts = t.col("timestamp_ms");
  const int ci_angle = t.col("angle_deg"), ci_speed = t.col("speed_kmh");
  const int ci_zones = t.col("zone_tags");
  const int ci_sem0 = t.col("sem_00"), ci_miss0 = t.col("miss_00");
  std::vector<LabelRow> rows;
  rows.reserve(t.rows.size());
  for (const auto& r : t.rows) {
    LabelRow row;
    row.frame_index = parse_int(r[static_cast<size_t>(ci_frame)]);
    row.timestamp_ms = parse_int(r[static_cast<size_t>(ci_ts)]);
    row.angle_deg = parse_double(r[static_cast<size_t>(ci_angle)]);
    row.speed_kmh = parse_double(r[static_cast<size_t>(ci_speed)]);
    row.zone_tags = parse_zone_tags(r[static_cast<size_t>(ci_zones)]);
    for (int k = 0; k < kSemanticFields; ++k) {
      row.semantic.values[static_cast<size_t>(k)] = parse_double(r[static_cast<size_t>(ci_sem0 + k)]);
      row.semantic.missing[static_cast<size_t>(k)] = parse_int(r[static_cast<size_t>(ci_miss0 + k)]) != 0;
    }
    row.semantic.folder_onehot = folder_onehot_for(info.route_id);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void validate_chapter_files(const DatasetManifest& m, const ChapterInfo& info) {
  fs::path dir = m.chapter_dir(info);
  if (!fs::is_directory(dir)) throw DataError("dataset integrity: missing chapter directory " + dir.string());
  std::vector<LabelRow> rows = load_labels(m, info);
  if (static_cast<int64_t>(rows.size()) != info.frame_count)
    throw DataError(strfmt("dataset integrity: %s lists %lld frames but labels.csv has %zu rows",
                           info.chapter_id.c_str(), static_cast<long long>(info.frame_count), rows.size()));
  int64_t prev_index = -1, step = 0;
  for (const auto& r : rows) {
    if (prev_index >= 0) {
      int64_t d = r.frame_index - prev_index;
      if (d <= 0) throw DataError("dataset integrity: frame indices not strictly increasing in " + info.chapter_id);
      if (step == 0)
        step = d;
      else if (d != step)
        throw DataError("dataset integrity: non-uniform frame spacing in " + info.chapter_id);
    }
    prev_index = r.frame_index;
    fs::path f = dir / frame_file("front", r.frame_index);
    if (!fs::exists(f)) throw DataError("dataset integrity: missing image file " + f.string());
    fs::path s = dir / frame_file("seg", r.frame_index);
    if (!fs::exists(s)) throw DataError("dataset integrity: missing mask file " + s.string());
    if (m.with_map) {
      fs::path mp = dir / frame_file("map", r.frame_index);
      if (!fs::exists(mp)) throw DataError("dataset integrity: missing map file " + mp.string());
    }
  }
}

inline DatasetManifest load_manifest(const std::string& root, bool validate_files = true) {
  fs::path mf = fs::path(root) / "manifest.json";
  std::ifstream in(mf);
  if (!in) throw DataError("load_manifest: no manifest at " + mf.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(strfmt("load_manifest: corrupt manifest %s (%s)", mf.string().c_str(), e.what()));
  }
  DatasetManifest m = manifest_from_json(j, root);
  std::vector<std::string> seen;
  for (const auto& c : m.chapters) {
    if (std::find(seen.begin(), seen.end(), c.chapter_id) != seen.end())
      throw DataError("load_manifest: duplicate chapter id " + c.chapter_id);
    seen.push_back(c.chapter_id);
  }
  if (validate_files)
    for (const auto& c : m.chapters) validate_chapter_files(m, c);
  return m;
}

inline Chapter load_chapter(const DatasetManifest& m, const ChapterInfo& info, bool with_images) {
  Chapter ch;
  ch.info = info;
  ch.rows = load_labels(m, info);
  if (with_images) {
    fs::path dir = m.chapter_dir(info);
    ch.front.reserve(ch.rows.size());
    ch.seg.reserve(ch.rows.size());
    for (const auto& r : ch.rows) {
      ch.front.push_back(read_png((dir / frame_file("front", r.frame_index)).string()));
      ch.seg.push_back(read_png((dir / frame_file("seg", r.frame_index)).string()));
      if (m.with_map) ch.map.push_back(read_png((dir / frame_file("map", r.frame_index)).string()));
    }
  }
  return ch;
}

// Largest-remainder apportionment of n items to the given fractions.
inline std::vector<int64_t> apportion(int64_t n, const std::vector<double>& fractions) {
  std::vector<int64_t> base(fractions.size());
  std::vector<double> rem(fractions.size());
  int64_t assigned = 0;
  for (size_t i = 0; i < fractions.size(); ++i) {
    double q = static_cast<double>(n) * fractions[i];
    base[i] = static_cast<int64_t>(std::floor(q));
    rem[i] = q - static_cast<double>(base[i]);
    assigned += base[i];
  }
  std::vector<size_t> order(fractions.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return rem[a] > rem[b]; });
  for (size_t k = 0; assigned < n; ++k, ++assigned) base[order[k % order.size()]] += 1;
  return base;
}

// Whole-chapter split assignment, deterministic in the seed.
inline DatasetManifest split_chapters(DatasetManifest m, double train_frac, double val_frac,
                                      double test_frac, uint64_t seed, bool allow_empty = false) {
  const std::vector<double> fr{train_frac, val_frac, test_frac};
  for (double f : fr)
    if (f < 0 || (!allow_empty && f <= 0)) throw UsageError("split_chapters: fractions must be positive");
  double total = train_frac + val_frac + test_frac;
  if (std::abs(total - 1.0) > 1e-9) throw UsageError("split_chapters: fractions must sum to 1");
  const int64_t n = static_cast<int64_t>(m.chapters.size());
  int64_t n_splits = 0;
  for (double f : fr) n_splits += f > 0 ? 1 : 0;
  if (n < n_splits) throw DataError("split_chapters: fewer chapters than splits");

  std::vector<size_t> order(m.chapters.size());
  std::iota(order.begin(), order.end(), size_t{0});
  Pcg32 rng(mix_seed(seed, 0x5914u));
  shuffle(order.begin(), order.end(), rng);

  std::vector<int64_t> sizes = apportion(n, fr);
  for (size_t i = 0; i < fr.size(); ++i)
    if (fr[i] > 0 && sizes[i] == 0)
      throw DataError("split_chapters: fewer chapters than splits");
  size_t pos = 0;
  const Split kinds[3] = {Split::train, Split::validation, Split::test};
  for (int s = 0; s < 3; ++s)
    for (int64_t k = 0; k < sizes[static_cast<size_t>(s)]; ++k) m.chapters[order[pos++]].split = kinds[s];
  return m;
}

// `length` frames ending at list position `end_pos`, spaced `stride` apart,
// oldest first. Positions index the chapter's frame list so the same call
// works on native and temporally strided chapters.
inline std::vector<int64_t> load_sequence(const Chapter& ch, int64_t end_pos, int length,
                                          int stride) {
  if (length < 1 || stride < 1) throw UsageError("load_sequence: length and stride must be >= 1");
  if (end_pos >= static_cast<int64_t>(ch.rows.size()))
    throw DataError(strfmt("load_sequence: end %lld beyond chapter %s of %zu frames",
                           static_cast<long long>(end_pos), ch.info.chapter_id.c_str(), ch.rows.size()));
  int64_t first = end_pos - static_cast<int64_t>(length - 1) * stride;
  if (first < 0)
    throw DataError(strfmt("load_sequence: insufficient history at end %lld (need %d frames at stride %d)",
                           static_cast<long long>(end_pos), length, stride));
  std::vector<int64_t> positions(static_cast<size_t>(length));
  for (int i = 0; i < length; ++i) positions[static_cast<size_t>(i)] = first + static_cast<int64_t>(i) * stride;
  return positions;
}

}  // namespace df
