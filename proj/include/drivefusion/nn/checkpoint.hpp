#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "drivefusion/nn/model.hpp"
#include "drivefusion/preprocess.hpp"

namespace df {

// Single-file checkpoint: magic, little-endian header length, JSON header
// (spec, norm stats, training metadata, tensor directory), raw tensor data.
inline constexpr char kCheckpointMagic[8] = {'D', 'F', 'C', 'K', 'P', 'T', '0', '1'};

template <typename T>
void save_checkpoint(const std::string& path, const Model<T>& model, const NormStats& stats,
                     const nlohmann::json& meta) {
  nlohmann::json header;
  header["spec"] = model_spec_to_json(model.spec);
  header["norm_stats"] = norm_stats_to_json(stats);
  header["meta"] = meta;
  nlohmann::json tensors = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& p : model.store.params) {
    nlohmann::json t;
    t["name"] = p->name;
    t["dtype"] = sizeof(T) == 4 ? "f32" : "f64";
    t["shape"] = p->value.shape;
    t["offset"] = offset;
    t["trainable"] = p->trainable;
    offset += static_cast<uint64_t>(p->value.numel()) * sizeof(T);
    tensors.push_back(std::move(t));
  }
  header["tensors"] = tensors;
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_checkpoint: cannot write " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& p : model.store.params)
    out.write(reinterpret_cast<const char*>(p->value.ptr()),
              static_cast<std::streamsize>(p->value.numel() * static_cast<int64_t>(sizeof(T))));
  if (!out) throw DataError("save_checkpoint: write failed for " + path);
}

template <typename T>
struct LoadedCheckpoint {
  std::unique_ptr<Model<T>> model;
  NormStats stats;
  nlohmann::json meta;
};

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw DataError("load_checkpoint: not a checkpoint file: " + path);
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw DataError("load_checkpoint: truncated header in " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(strfmt("load_checkpoint: corrupt header in %s (%s)", path.c_str(), e.what()));
  }

  LoadedCheckpoint<T> out;
  ModelSpec spec = model_spec_from_json(header.at("spec"));
  uint64_t build_seed = header.at("meta").value("build_seed", 0ull);
  out.model = build_model<T>(spec, build_seed);
  out.stats = norm_stats_from_json(header.at("norm_stats"));
  out.meta = header.at("meta");

  const std::string want_dtype = sizeof(T) == 4 ? "f32" : "f64";
  for (const auto& tj : header.at("tensors")) {
    const std::string name = tj.at("name").get<std::string>();
    Parameter<T>* p = out.model->store.find(name);
    if (!p) throw DataError("load_checkpoint: unknown tensor " + name + " in " + path);
    if (tj.at("dtype").get<std::string>() != want_dtype)
      throw DataError("load_checkpoint: dtype mismatch for " + name);
    auto shape = tj.at("shape").get<std::vector<int64_t>>();
    if (shape != p->value.shape)
      throw DataError("load_checkpoint: shape mismatch for " + name);
    in.read(reinterpret_cast<char*>(p->value.ptr()),
            static_cast<std::streamsize>(p->value.numel() * static_cast<int64_t>(sizeof(T))));
    if (!in) throw DataError("load_checkpoint: truncated tensor data in " + path);
  }
  return out;
}

}  // namespace df
