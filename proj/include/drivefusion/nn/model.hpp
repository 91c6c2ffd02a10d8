#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "drivefusion/nn/backbone.hpp"
#include "drivefusion/nn/modules.hpp"

namespace df {

enum class Variant { m1, m2_single, m2_stacked, m2_sequence, m3 };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::m1: return "m1";
    case Variant::m2_single: return "m2_single";
    case Variant::m2_stacked: return "m2_stacked";
    case Variant::m2_sequence: return "m2_sequence";
    default: return "m3";
  }
}

inline Variant variant_from_name(const std::string& s) {
  for (Variant v : {Variant::m1, Variant::m2_single, Variant::m2_stacked, Variant::m2_sequence,
                    Variant::m3})
    if (s == variant_name(v)) return v;
  throw UsageError("unknown model variant: " + s);
}

struct ModelSpec {
  Variant variant = Variant::m1;
  std::map<std::string, BackboneSpec> backbones;  // branch name -> spec
  int semantic_dim = 20;                          // 20 or 47
  bool use_semantic = true;                       // semantic branch toggle (m1, m3)
  int sequence_length = 2;
  int sequence_stride = 4;  // frames between steps
  int recurrent_hidden = 128;
  double head_dropout = -1;  // <0: variant default
  double scale = 1.0;
  int n_mask_classes = 20;
};

// Variant defaults: branch backbones, sequence geometry, recurrent width.
inline ModelSpec default_spec(Variant v) {
  ModelSpec s;
  s.variant = v;
  switch (v) {
    case Variant::m1:
      s.backbones["front"] = {Family::residual34, false, 3, 0};
      s.sequence_length = 2;
      s.sequence_stride = 4;
      break;
    case Variant::m2_single:
      s.backbones["trunk"] = {Family::dense121, false, 23, 0};
      s.sequence_length = 1;
      s.sequence_stride = 1;
      s.use_semantic = false;
      break;
    case Variant::m2_stacked:
      s.backbones["trunk"] = {Family::dense121, false, 230, 0};
      s.sequence_length = 10;
      s.sequence_stride = 1;
      s.use_semantic = false;
      break;
    case Variant::m2_sequence:
      s.backbones["seq_res"] = {Family::residual34, false, 3, 0};
      s.backbones["seq_dense"] = {Family::dense201, false, 3, 0};
      s.backbones["trunk"] = {Family::dense121, false, 23, 0};
      s.sequence_length = 10;
      s.sequence_stride = 1;
      s.use_semantic = false;
      break;
    case Variant::m3:
      s.backbones["front"] = {Family::residual50, false, 3, 0};
      s.backbones["map"] = {Family::residual34, false, 3, 0};
      s.sequence_length = 2;
      s.sequence_stride = 4;
      break;
  }
  return s;
}

inline double variant_head_dropout(const ModelSpec& s) {
  if (s.head_dropout >= 0) return s.head_dropout;
  switch (s.variant) {
    case Variant::m1: return 0.10;
    case Variant::m3: return 0.20;
    default: return 0.0;
  }
}

inline nlohmann::json backbone_spec_to_json(const BackboneSpec& b) {
  return {{"family", family_name(b.family)},
          {"pretrained", b.pretrained},
          {"in_channels", b.in_channels},
          {"feature_dim", b.feature_dim}};
}

inline BackboneSpec backbone_spec_from_json(const nlohmann::json& j) {
  BackboneSpec b;
  b.family = family_from_name(j.at("family").get<std::string>());
  b.pretrained = j.at("pretrained").get<bool>();
  b.in_channels = j.at("in_channels").get<int>();
  b.feature_dim = j.at("feature_dim").get<int>();
  return b;
}

inline nlohmann::json model_spec_to_json(const ModelSpec& s) {
  nlohmann::json backbones;
  for (const auto& [name, b] : s.backbones) backbones[name] = backbone_spec_to_json(b);
  return {{"variant", variant_name(s.variant)},
          {"backbones", backbones},
          {"semantic_dim", s.semantic_dim},
          {"use_semantic", s.use_semantic},
          {"sequence_length", s.sequence_length},
          {"sequence_stride", s.sequence_stride},
          {"recurrent_hidden", s.recurrent_hidden},
          {"head_dropout", s.head_dropout},
          {"scale", s.scale},
          {"n_mask_classes", s.n_mask_classes}};
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  try {
    s.variant = variant_from_name(j.at("variant").get<std::string>());
    for (const auto& [name, b] : j.at("backbones").items())
      s.backbones[name] = backbone_spec_from_json(b);
    s.semantic_dim = j.at("semantic_dim").get<int>();
    s.use_semantic = j.at("use_semantic").get<bool>();
    s.sequence_length = j.at("sequence_length").get<int>();
    s.sequence_stride = j.at("sequence_stride").get<int>();
    s.recurrent_hidden = j.at("recurrent_hidden").get<int>();
    s.head_dropout = j.at("head_dropout").get<double>();
    s.scale = j.at("scale").get<double>();
    s.n_mask_classes = j.at("n_mask_classes").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(strfmt("model spec: malformed json (%s)", e.what()));
  }
  return s;
}

// Assembled network inputs for one minibatch. Only the fields a variant
// consumes need to be populated; everything is normalized already.
template <typename T>
struct Batch {
  int64_t B = 0;
  std::vector<Tensor<T>> rgb_steps;      // S x [B,3,H,W]
  std::vector<Tensor<T>> rgbm_steps;     // S x [B,3+classes,H,W]
  Tensor<T> rgbm_stacked;                // [B,(3+classes)*10,H,W]
  Tensor<T> map_rgb;                     // [B,3,H,W]
  std::vector<Tensor<T>> semantic_steps; // S x [B,semantic_dim]
  Tensor<T> targets;                     // [B,2] normalized (angle, speed); optional
  std::vector<std::vector<std::string>> zones;  // per-sample tags, passed through
};

template <typename T>
struct ForwardIds {
  int angle = -1;  // [B,1] normalized
  int speed = -1;  // [B,1] normalized
};

struct Prediction {
  std::vector<double> angle_norm;
  std::vector<double> speed_norm;
};

template <typename T>
class Model {
public:
  ModelSpec spec;
  ParamStore<T> store;

  std::map<std::string, Backbone<T>> backbones;
  LinearM<T> sem_fc1, sem_fc2;  // semantic encoder (m1, m3)
  int64_t sem_out_dim = 0;
  LstmM<T> lstm;  // m1, m3
  std::vector<GruM<T>> gru_fw, gru_bw;
  LinearM<T> seq_fc1, seq_fc2;  // m2_sequence intermediate
  int64_t seq_feat_dim = 0;
  HeadM<T> head_angle, head_speed;

  int64_t parameter_count() const { return store.count_trainable(); }

  const Backbone<T>& branch(const std::string& name) const {
    auto it = backbones.find(name);
    if (it == backbones.end())
      throw DataError(strfmt("model %s has no branch '%s'", variant_name(spec.variant), name.c_str()));
    return it->second;
  }

  ForwardIds<T> forward(Tape<T>& t, const Batch<T>& batch, bool training, Pcg32& rng) const {
    switch (spec.variant) {
      case Variant::m1: return forward_m1(t, batch, training, rng);
      case Variant::m2_single: return forward_m2_flat(t, batch, training, rng, false);
      case Variant::m2_stacked: return forward_m2_flat(t, batch, training, rng, true);
      case Variant::m2_sequence: return forward_m2_sequence(t, batch, training, rng);
      default: return forward_m3(t, batch, training, rng);
    }
  }

private:
  int semantic_encode(Tape<T>& t, int sem_input) const {
    int y = t.relu(sem_fc1.forward(t, sem_input));
    return t.relu(sem_fc2.forward(t, y));
  }

  static int input_step(Tape<T>& t, const std::vector<Tensor<T>>& steps, size_t s,
                        const char* branch_name, int want_channels) {
    if (s >= steps.size())
      throw DataError(strfmt("branch %s: missing input step %zu", branch_name, s));
    const Tensor<T>& v = steps[s];
    if (v.rank() != 4 || v.dim(1) != want_channels)
      throw DataError(strfmt("branch %s expects [B,%d,H,W], got %s", branch_name, want_channels,
                             v.shape_str().c_str()));
    return t.input(v);
  }

  ForwardIds<T> forward_m1(Tape<T>& t, const Batch<T>& batch, bool training, Pcg32& rng) const {
    const auto S = static_cast<size_t>(spec.sequence_length);
    const Backbone<T>& front = branch("front");
    std::vector<int> sem_feats(S, -1);
    int h = -1, c = -1;
    for (size_t s = 0; s < S; ++s) {
      int img = input_step(t, batch.rgb_steps, s, "front", 3);
      int feat = front.forward(t, img, training, rng);
      int step_in = feat;
      if (spec.use_semantic) {
        if (s >= batch.semantic_steps.size())
          throw DataError("branch semantic: missing input step");
        sem_feats[s] = semantic_encode(t, t.input(batch.semantic_steps[s]));
        step_in = t.concat_axis1({feat, sem_feats[s]});
      }
      if (h < 0) {
        Tensor<T> z({batch.B, lstm.hidden});
        h = t.input(z);
        c = t.input(z);
      }
      auto [h2, c2] = lstm.step(t, step_in, h, c);
      h = h2;
      c = c2;
    }
    int head_in = spec.use_semantic ? t.concat_axis1({h, sem_feats[S - 1]}) : h;
    return {head_angle.forward(t, head_in, training, rng), head_speed.forward(t, head_in, training, rng)};
  }

  ForwardIds<T> forward_m2_flat(Tape<T>& t, const Batch<T>& batch, bool training, Pcg32& rng,
                                bool stacked) const {
    const Backbone<T>& trunk = branch("trunk");
    int x;
    if (stacked) {
      if (batch.rgbm_stacked.numel() == 0)
        throw DataError("branch trunk: missing stacked image+mask input");
      if (batch.rgbm_stacked.dim(1) != trunk.spec.in_channels)
        throw DataError(strfmt("branch trunk expects [B,%d,H,W], got %s", trunk.spec.in_channels,
                               batch.rgbm_stacked.shape_str().c_str()));
      x = t.input(batch.rgbm_stacked);
    } else {
      x = input_step(t, batch.rgbm_steps, 0, "trunk", trunk.spec.in_channels);
    }
    int feat = trunk.forward(t, x, training, rng);
    return {head_angle.forward(t, feat, training, rng), head_speed.forward(t, feat, training, rng)};
  }

  ForwardIds<T> forward_m2_sequence(Tape<T>& t, const Batch<T>& batch, bool training,
                                    Pcg32& rng) const {
    const auto S = static_cast<size_t>(spec.sequence_length);
    const Backbone<T>& res = branch("seq_res");
    const Backbone<T>& dense = branch("seq_dense");
    const Backbone<T>& trunk = branch("trunk");
    std::vector<int> step_feats(S);
    const double drop = 0.2;  // intermediate dropout; the decoder heads have none
    for (size_t s = 0; s < S; ++s) {
      int rgb = input_step(t, batch.rgb_steps, s, "seq_res", 3);
      int rgbm = input_step(t, batch.rgbm_steps, s, "trunk", trunk.spec.in_channels);
      int fa = res.forward(t, rgb, training, rng);
      int fb = dense.forward(t, rgb, training, rng);
      int fc = trunk.forward(t, rgbm, training, rng);
      int y = t.concat_axis1({fa, fb, fc});
      y = t.relu(seq_fc1.forward(t, y));
      if (training) y = t.dropout(y, drop, rng);
      y = t.relu(seq_fc2.forward(t, y));
      if (training) y = t.dropout(y, drop, rng);
      step_feats[s] = y;
    }
    // 3-layer bidirectional GRU over the step features
    std::vector<int> layer_in(step_feats.begin(), step_feats.end());
    int last_fw = -1, last_bw = -1;
    for (size_t l = 0; l < gru_fw.size(); ++l) {
      Tensor<T> z({batch.B, gru_fw[l].hidden});
      std::vector<int> fw(S), bw(S);
      int h = t.input(z);
      for (size_t s = 0; s < S; ++s) {
        h = gru_fw[l].step(t, layer_in[s], h);
        fw[s] = h;
      }
      h = t.input(z);
      for (size_t s = S; s-- > 0;) {
        h = gru_bw[l].step(t, layer_in[s], h);
        bw[s] = h;
      }
      for (size_t s = 0; s < S; ++s) layer_in[s] = t.concat_axis1({fw[s], bw[s]});
      last_fw = fw[S - 1];
      last_bw = bw[S - 1];
    }
    (void)last_fw;
    (void)last_bw;
    int gru_out = layer_in[S - 1];
    int head_in = t.concat_axis1({gru_out, step_feats[S - 1]});
    return {head_angle.forward(t, head_in, training, rng),
            head_speed.forward(t, head_in, training, rng)};
  }

  ForwardIds<T> forward_m3(Tape<T>& t, const Batch<T>& batch, bool training, Pcg32& rng) const {
    const auto S = static_cast<size_t>(spec.sequence_length);
    const Backbone<T>& front = branch("front");
    const Backbone<T>& map_bb = branch("map");
    int h = -1, c = -1;
    for (size_t s = 0; s < S; ++s) {
      int img = input_step(t, batch.rgb_steps, s, "front", 3);
      int feat = front.forward(t, img, training, rng);
      if (h < 0) {
        Tensor<T> z({batch.B, lstm.hidden});
        h = t.input(z);
        c = t.input(z);
      }
      auto [h2, c2] = lstm.step(t, feat, h, c);
      h = h2;
      c = c2;
    }
    if (batch.map_rgb.numel() == 0) throw DataError("branch map: missing map image input");
    if (batch.map_rgb.dim(1) != 3)
      throw DataError(strfmt("branch map expects [B,3,H,W], got %s",
                             batch.map_rgb.shape_str().c_str()));
    int fmap = map_bb.forward(t, t.input(batch.map_rgb), training, rng);
    std::vector<int> cat = {h, fmap};
    if (spec.use_semantic) {
      if (batch.semantic_steps.empty()) throw DataError("branch semantic: missing input");
      cat.push_back(semantic_encode(t, t.input(batch.semantic_steps.back())));
    }
    int head_in = t.concat_axis1(cat);
    return {head_angle.forward(t, head_in, training, rng),
            head_speed.forward(t, head_in, training, rng)};
  }
};

// Constructs the variant graph with deterministic, seed-derived initialization.
template <typename T>
std::unique_ptr<Model<T>> build_model(const ModelSpec& spec, uint64_t seed) {
  if (spec.scale <= 0) throw UsageError("build_model: scale must be > 0");
  if (spec.semantic_dim != 20 && spec.semantic_dim != 47)
    throw UsageError("build_model: semantic_dim must be 20 or 47");
  auto model = std::make_unique<Model<T>>();
  model->spec = spec;
  model->store.seed = seed;
  ParamStore<T>& ps = model->store;
  const double scale = spec.scale;

  for (const auto& [name, bspec] : spec.backbones)
    model->backbones.emplace(name, build_backbone<T>(ps, name, bspec, scale));

  auto sdim = [&](int64_t d) { return scaled_dim(d, scale); };

  switch (spec.variant) {
    case Variant::m1: {
      const int64_t F = model->branch("front").feature_dim;
      int64_t step_in = F;
      if (spec.use_semantic) {
        model->sem_fc1 = LinearM<T>::create(ps, "sem.fc1", spec.semantic_dim, sdim(256));
        model->sem_fc2 = LinearM<T>::create(ps, "sem.fc2", sdim(256), sdim(128));
        model->sem_out_dim = sdim(128);
        step_in += model->sem_out_dim;
      }
      const int64_t H = sdim(spec.recurrent_hidden);
      model->lstm = LstmM<T>::create(ps, "lstm", step_in, H);
      const int64_t head_in = H + (spec.use_semantic ? model->sem_out_dim : 0);
      const std::vector<int64_t> dims = {sdim(1024), sdim(512), sdim(256)};
      const double drop = variant_head_dropout(spec);
      model->head_angle = HeadM<T>::create(ps, "head_angle", head_in, dims, drop, false);
      model->head_speed = HeadM<T>::create(ps, "head_speed", head_in, dims, drop, false);
      break;
    }
    case Variant::m2_single:
    case Variant::m2_stacked: {
      const int64_t F = model->branch("trunk").feature_dim;
      const std::vector<int64_t> dims = {sdim(200), sdim(50), sdim(10)};
      model->head_angle = HeadM<T>::create(ps, "head_angle", F, dims, 0.0, true);
      model->head_speed = HeadM<T>::create(ps, "head_speed", F, dims, 0.0, true);
      break;
    }
    case Variant::m2_sequence: {
      const int64_t F = model->branch("seq_res").feature_dim +
                        model->branch("seq_dense").feature_dim +
                        model->branch("trunk").feature_dim;
      model->seq_fc1 = LinearM<T>::create(ps, "seq.fc1", F, sdim(512));
      model->seq_fc2 = LinearM<T>::create(ps, "seq.fc2", sdim(512), sdim(128));
      model->seq_feat_dim = sdim(128);
      const int64_t G = sdim(64);
      int64_t in = model->seq_feat_dim;
      for (int l = 0; l < 3; ++l) {
        model->gru_fw.push_back(GruM<T>::create(ps, strfmt("gru.fw%d", l), in, G));
        model->gru_bw.push_back(GruM<T>::create(ps, strfmt("gru.bw%d", l), in, G));
        in = 2 * G;
      }
      const int64_t head_in = 2 * G + model->seq_feat_dim;
      const std::vector<int64_t> dims = {sdim(256), sdim(128), sdim(32)};
      model->head_angle = HeadM<T>::create(ps, "head_angle", head_in, dims, 0.0, false);
      model->head_speed = HeadM<T>::create(ps, "head_speed", head_in, dims, 0.0, false);
      break;
    }
    case Variant::m3: {
      const int64_t Ff = model->branch("front").feature_dim;
      const int64_t Fm = model->branch("map").feature_dim;
      const int64_t H = sdim(spec.recurrent_hidden);
      model->lstm = LstmM<T>::create(ps, "lstm", Ff, H);
      int64_t head_in = H + Fm;
      if (spec.use_semantic) {
        model->sem_fc1 = LinearM<T>::create(ps, "sem.fc1", spec.semantic_dim, sdim(256));
        model->sem_fc2 = LinearM<T>::create(ps, "sem.fc2", sdim(256), sdim(128));
        model->sem_out_dim = sdim(128);
        head_in += model->sem_out_dim;
      }
      const std::vector<int64_t> dims = {sdim(64), sdim(32)};
      const double drop = variant_head_dropout(spec);
      model->head_angle = HeadM<T>::create(ps, "head_angle", head_in, dims, drop, false);
      model->head_speed = HeadM<T>::create(ps, "head_speed", head_in, dims, drop, false);
      break;
    }
  }
  return model;
}

template <typename T>
Prediction extract_prediction(const Tape<T>& t, const ForwardIds<T>& ids) {
  Prediction p;
  const Tensor<T>& a = t.val(ids.angle);
  const Tensor<T>& s = t.val(ids.speed);
  p.angle_norm.resize(static_cast<size_t>(a.dim(0)));
  p.speed_norm.resize(static_cast<size_t>(s.dim(0)));
  for (int64_t i = 0; i < a.dim(0); ++i) p.angle_norm[static_cast<size_t>(i)] = a[i];
  for (int64_t i = 0; i < s.dim(0); ++i) p.speed_norm[static_cast<size_t>(i)] = s[i];
  return p;
}

}  // namespace df
