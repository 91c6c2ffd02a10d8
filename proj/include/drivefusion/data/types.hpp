#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "drivefusion/core/error.hpp"
#include "drivefusion/core/strings.hpp"
#include "drivefusion/io/png.hpp"

namespace df {

constexpr int kSemanticFields = 20;
constexpr int kFolderOnehot = 27;
constexpr int64_t kFrameIntervalMs = 100;  // 10 fps

enum class Split { train, validation, test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    default: return "test";
  }
}

inline Split split_from_name(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  throw DataError("unknown split: " + s);
}

// Zone tag vocabulary emitted by the generator. Evaluation is open-vocabulary
// and reports any tag it encounters verbatim.
namespace zones {
inline constexpr const char* kZone30 = "Zone30";
inline constexpr const char* kZone50 = "Zone50";
inline constexpr const char* kZone80 = "Zone80";
inline constexpr const char* kStraight = "Straight";
inline constexpr const char* kLeft = "Left";
inline constexpr const char* kRight = "Right";
inline constexpr const char* kPedestrian = "Pedestrian";
inline constexpr const char* kTrafficLight = "TrafficLight";
inline constexpr const char* kYield = "Yield";
}  // namespace zones

struct SemanticRecord {
  std::array<double, kSemanticFields> values{};
  std::array<bool, kSemanticFields> missing{};
  std::optional<std::array<double, kFolderOnehot>> folder_onehot;
};

// Field indices inside SemanticRecord::values.
namespace sem {
enum : int {
  latitude = 0,
  longitude,
  speed_limit,
  free_flow_speed,
  heading,
  road_index,
  dist_to_signal,
  dist_to_yield,
  dist_to_pedestrian_crossing,
  dist_to_intersection,
  curvature,
  elevation,
  lane_width,
  num_lanes,
  traffic_density,
  visibility,
  road_grade,
  ambient_temp,
  route_progress,
  noise,
};
}

struct LabelRow {
  int64_t frame_index = 0;
  int64_t timestamp_ms = 0;
  double angle_deg = 0;
  double speed_kmh = 0;
  std::vector<std::string> zone_tags;
  SemanticRecord semantic;
};

struct ChapterInfo {
  std::string chapter_id;
  std::string route_id;
  Split split = Split::train;
  int64_t frame_count = 0;
};

// A chapter with labels and (optionally) decoded images, aligned by position.
struct Chapter {
  ChapterInfo info;
  std::vector<LabelRow> rows;
  std::vector<ImageU8> front;  // empty unless images loaded
  std::vector<ImageU8> seg;
  std::vector<ImageU8> map;  // empty when dataset has no map imagery

  bool has_images() const { return !front.empty(); }
};

struct GenConfig {
  int n_routes = 2;
  int chapters_per_route = 4;
  int frames_per_chapter = 300;
  int width = 160;
  int height = 90;
  int n_seg_classes = 20;
  uint64_t seed = 0;
  bool with_map = true;
  double train_frac = 0.8;
  double val_frac = 0.1;
  double test_frac = 0.1;
  double max_angle_step_deg = 5.0;
};

struct DatasetManifest {
  std::string root;
  std::vector<ChapterInfo> chapters;
  int width = 0;
  int height = 0;
  int n_seg_classes = 20;
  uint64_t seed = 0;
  bool with_map = true;
  int64_t frame_interval_ms = kFrameIntervalMs;
  nlohmann::json gen_config;  // echo of the generating config, for no-op checks

  const ChapterInfo* find(const std::string& chapter_id) const {
    for (const auto& c : chapters)
      if (c.chapter_id == chapter_id) return &c;
    return nullptr;
  }

  std::vector<const ChapterInfo*> split_chapters_of(Split s) const {
    std::vector<const ChapterInfo*> out;
    for (const auto& c : chapters)
      if (c.split == s) out.push_back(&c);
    return out;
  }

  std::filesystem::path chapter_dir(const ChapterInfo& c) const {
    return std::filesystem::path(root) / c.chapter_id;
  }
};

inline std::string frame_file(const char* prefix, int64_t index) {
  return strfmt("%s_%05lld.png", prefix, static_cast<long long>(index));
}

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["format"] = "drivefusion-dataset-v1";
  j["resolution"] = {{"width", m.width}, {"height", m.height}};
  j["n_seg_classes"] = m.n_seg_classes;
  j["seed"] = m.seed;
  j["with_map"] = m.with_map;
  j["frame_interval_ms"] = m.frame_interval_ms;
  if (!m.gen_config.is_null()) j["gen_config"] = m.gen_config;
  nlohmann::json chapters = nlohmann::json::array();
  for (const auto& c : m.chapters) {
    chapters.push_back({{"chapter_id", c.chapter_id},
                        {"route_id", c.route_id},
                        {"split", split_name(c.split)},
                        {"frame_count", c.frame_count}});
  }
  j["chapters"] = chapters;
  return j;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j, const std::string& root) {
  DatasetManifest m;
  m.root = root;
  try {
    m.width = j.at("resolution").at("width").get<int>();
    m.height = j.at("resolution").at("height").get<int>();
    m.n_seg_classes = j.at("n_seg_classes").get<int>();
    m.seed = j.at("seed").get<uint64_t>();
    m.with_map = j.at("with_map").get<bool>();
    m.frame_interval_ms = j.at("frame_interval_ms").get<int64_t>();
    if (j.contains("gen_config")) m.gen_config = j.at("gen_config");
    for (const auto& c : j.at("chapters")) {
      ChapterInfo info;
      info.chapter_id = c.at("chapter_id").get<std::string>();
      info.route_id = c.at("route_id").get<std::string>();
      info.split = split_from_name(c.at("split").get<std::string>());
      info.frame_count = c.at("frame_count").get<int64_t>();
      m.chapters.push_back(std::move(info));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(strfmt("manifest: malformed json (%s)", e.what()));
  }
  return m;
}

inline void save_manifest(const DatasetManifest& m) {
  std::filesystem::create_directories(m.root);
  std::ofstream out(std::filesystem::path(m.root) / "manifest.json", std::ios::binary);
  if (!out) throw DataError("manifest: cannot write under " + m.root);
  out << manifest_to_json(m).dump(2) << "\n";
}

inline int route_index(const std::string& route_id) {
  size_t pos = route_id.find_first_of("0123456789");
  if (pos == std::string::npos) return 0;
  return static_cast<int>(std::strtol(route_id.c_str() + pos, nullptr, 10));
}

// Route-folder dummy encoding: one of 27 slots, as in the full dataset's
// 27 unique routes.
inline std::array<double, kFolderOnehot> folder_onehot_for(const std::string& route_id) {
  std::array<double, kFolderOnehot> oh{};
  oh[static_cast<size_t>(route_index(route_id) % kFolderOnehot)] = 1.0;
  return oh;
}

}  // namespace df
