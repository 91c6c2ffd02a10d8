#pragma once

#include <string>
#include <vector>

#include "drivefusion/nn/model.hpp"
#include "drivefusion/trainer.hpp"

namespace df {

// Named experiment presets: one per published variant row, binding that
// variant's architecture and training hyperparameters. Width scale, backbone
// family, tier, stride, epochs and seed remain overridable for desk-scale runs.
struct Preset {
  std::string name;
  ModelSpec model;
  TrainConfig train;
};

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {
      "model1",        "model1-r152",    "model1-sem20",    "model1-sem47",
      "model2-single", "model2-stacked", "model2-sequence", "model3"};
  return names;
}

inline Preset make_preset(const std::string& name) {
  Preset p;
  p.name = name;
  if (name == "model1") {
    p.model = default_spec(Variant::m1);
    p.model.use_semantic = false;
    p.train.lr0 = 1e-4;
    p.train.batch_size = 64;
    p.train.epochs = 2;
    p.train.schedule = Schedule::constant;
    p.train.tier = "s2";
  } else if (name == "model1-r152") {
    p.model = default_spec(Variant::m1);
    p.model.use_semantic = false;
    p.model.backbones["front"].family = Family::residual152;
    p.train.lr0 = 1e-4;
    p.train.batch_size = 8;
    p.train.epochs = 1;
    p.train.schedule = Schedule::constant;
    p.train.tier = "s2";
  } else if (name == "model1-sem20") {
    p.model = default_spec(Variant::m1);
    p.model.use_semantic = true;
    p.model.semantic_dim = 20;
    p.train.lr0 = 1e-4;
    p.train.batch_size = 8;
    p.train.epochs = 5;
    p.train.schedule = Schedule::constant;
    p.train.tier = "s3";
  } else if (name == "model1-sem47") {
    p.model = default_spec(Variant::m1);
    p.model.use_semantic = true;
    p.model.semantic_dim = 47;
    p.train.lr0 = 1e-4;
    p.train.batch_size = 64;
    p.train.epochs = 1;
    p.train.schedule = Schedule::constant;
    p.train.tier = "s2";
  } else if (name == "model2-single") {
    p.model = default_spec(Variant::m2_single);
    p.train.lr0 = 3e-4;
    p.train.batch_size = 13;
    p.train.epochs = 90;
    p.train.schedule = Schedule::m2_single_decay;
    p.train.tier = "s3";
  } else if (name == "model2-stacked") {
    p.model = default_spec(Variant::m2_stacked);
    p.train.lr0 = 3e-4;
    p.train.batch_size = 13;
    p.train.epochs = 90;
    p.train.schedule = Schedule::m2_single_decay;
    p.train.tier = "s3";
  } else if (name == "model2-sequence") {
    p.model = default_spec(Variant::m2_sequence);
    p.train.lr0 = 3e-3;
    p.train.batch_size = 13;
    p.train.epochs = 45;
    p.train.schedule = Schedule::halve_20_30_40;
    p.train.tier = "s3";
  } else if (name == "model3") {
    p.model = default_spec(Variant::m3);
    p.train.lr0 = 1e-4;
    p.train.batch_size = 64;
    p.train.epochs = 10;
    p.train.schedule = Schedule::constant;
    p.train.tier = "s3";
  } else {
    throw UsageError("unknown preset '" + name + "'; available: " + join(preset_names(), ' '));
  }
  return p;
}

// Swaps every branch backbone to the given family while keeping channel
// counts; the desk-scale path swaps in toy_conv this way.
inline void override_backbone_family(ModelSpec& spec, Family family) {
  for (auto& [name, b] : spec.backbones) b.family = family;
}

}  // namespace df
