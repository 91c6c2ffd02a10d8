#include "catch_amalgamated.hpp"

#include <cmath>

#include "drivefusion/nn/checkpoint.hpp"
#include "drivefusion/nn/model.hpp"
#include "testutil.hpp"

using namespace df;
using testutil::TempDir;

namespace {

Tensor<float> random_tensor(std::vector<int64_t> shape, uint64_t seed, float scale = 1.0f) {
  Tensor<float> t(std::move(shape));
  Pcg32 rng(seed);
  for (auto& v : t.data) v = static_cast<float>(rng.normal()) * scale;
  return t;
}

ModelSpec toy_spec(Variant v, double scale = 0.25) {
  ModelSpec s = default_spec(v);
  for (auto& [name, b] : s.backbones) b.family = Family::toy_conv;
  s.scale = scale;
  s.recurrent_hidden = 32;
  return s;
}

Batch<float> toy_batch(const ModelSpec& spec, int64_t B, int H, int W, uint64_t seed) {
  Batch<float> batch;
  batch.B = B;
  const auto S = static_cast<size_t>(spec.sequence_length);
  const int mask_ch = 3 + spec.n_mask_classes;
  const bool needs_rgb = spec.variant == Variant::m1 || spec.variant == Variant::m2_sequence ||
                         spec.variant == Variant::m3;
  const bool needs_rgbm = spec.variant == Variant::m2_single || spec.variant == Variant::m2_sequence;
  for (size_t s = 0; s < S; ++s) {
    if (needs_rgb) batch.rgb_steps.push_back(random_tensor({B, 3, H, W}, seed + s, 0.5f));
    if (needs_rgbm) batch.rgbm_steps.push_back(random_tensor({B, mask_ch, H, W}, seed + 100 + s, 0.5f));
    if (spec.use_semantic)
      batch.semantic_steps.push_back(random_tensor({B, spec.semantic_dim}, seed + 200 + s));
  }
  if (spec.variant == Variant::m2_stacked)
    batch.rgbm_stacked = random_tensor({B, static_cast<int64_t>(mask_ch) * spec.sequence_length, H, W},
                                       seed + 300, 0.5f);
  if (spec.variant == Variant::m3) batch.map_rgb = random_tensor({B, 3, H, W}, seed + 400, 0.5f);
  batch.targets = random_tensor({B, 2}, seed + 500);
  return batch;
}

Prediction run_forward(const Model<float>& model, const Batch<float>& batch, bool training = false,
                       uint64_t rng_seed = 0) {
  Tape<float> tape;
  Pcg32 rng(rng_seed);
  ForwardIds<float> ids = model.forward(tape, batch, training, rng);
  return extract_prediction(tape, ids);
}

}  // namespace

TEST_CASE("every variant builds and produces finite per-sample outputs") {
  for (Variant v : {Variant::m1, Variant::m2_single, Variant::m2_stacked, Variant::m2_sequence,
                    Variant::m3}) {
    ModelSpec spec = toy_spec(v);
    auto model = build_model<float>(spec, 42);
    Batch<float> batch = toy_batch(spec, 3, 18, 32, 7);
    Prediction p = run_forward(*model, batch);
    INFO(variant_name(v));
    REQUIRE(p.angle_norm.size() == 3);
    REQUIRE(p.speed_norm.size() == 3);
    for (double x : p.angle_norm) REQUIRE(std::isfinite(x));
    for (double x : p.speed_norm) REQUIRE(std::isfinite(x));
  }
}

TEST_CASE("identical spec and seed give identical parameters") {
  ModelSpec spec = toy_spec(Variant::m1);
  auto a = build_model<float>(spec, 11);
  auto b = build_model<float>(spec, 11);
  REQUIRE(a->store.params.size() == b->store.params.size());
  for (size_t i = 0; i < a->store.params.size(); ++i) {
    REQUIRE(a->store.params[i]->name == b->store.params[i]->name);
    REQUIRE(a->store.params[i]->value.data == b->store.params[i]->value.data);
  }
  auto c = build_model<float>(spec, 12);
  bool differs = false;
  for (size_t i = 0; i < a->store.params.size(); ++i)
    differs = differs || a->store.params[i]->value.data != c->store.params[i]->value.data;
  REQUIRE(differs);
}

TEST_CASE("evaluation-mode forward is deterministic") {
  ModelSpec spec = toy_spec(Variant::m2_sequence);
  auto model = build_model<float>(spec, 3);
  Batch<float> batch = toy_batch(spec, 2, 18, 32, 5);
  Prediction p1 = run_forward(*model, batch, false, 1);
  Prediction p2 = run_forward(*model, batch, false, 999);
  REQUIRE(p1.angle_norm == p2.angle_norm);
  REQUIRE(p1.speed_norm == p2.speed_norm);
}

TEST_CASE("training-mode dropout is stochastic under the rng") {
  ModelSpec spec = toy_spec(Variant::m1);
  auto model = build_model<float>(spec, 3);
  Batch<float> batch = toy_batch(spec, 2, 18, 32, 5);
  Prediction p1 = run_forward(*model, batch, true, 1);
  Prediction p2 = run_forward(*model, batch, true, 2);
  Prediction p3 = run_forward(*model, batch, true, 1);
  REQUIRE(p1.angle_norm != p2.angle_norm);
  REQUIRE(p1.angle_norm == p3.angle_norm);
}

TEST_CASE("published head widths at scale 1") {
  ModelSpec spec = toy_spec(Variant::m1, 1.0);
  auto model = build_model<float>(spec, 1);
  auto shape_of = [&](const std::string& name) {
    Parameter<float>* p = model->store.find(name);
    REQUIRE(p != nullptr);
    return p->value.shape;
  };
  // three hidden blocks 1024, 512, 256, then a final linear to 1
  REQUIRE(shape_of("head_angle.fc0.w")[0] == 1024);
  REQUIRE(shape_of("head_angle.fc1.w") == std::vector<int64_t>{512, 1024});
  REQUIRE(shape_of("head_angle.fc2.w") == std::vector<int64_t>{256, 512});
  REQUIRE(shape_of("head_angle.out.w")[0] == 1);
  // the closed-form parameter count of the 1024->512 layer
  REQUIRE(model->store.find("head_angle.fc1.w")->value.numel() == 1024 * 512);
  REQUIRE(model->store.find("head_angle.fc1.b")->value.numel() == 512);

  ModelSpec m2 = toy_spec(Variant::m2_single, 1.0);
  auto model2 = build_model<float>(m2, 1);
  REQUIRE(model2->store.find("head_speed.fc0.w")->value.shape[0] == 200);
  REQUIRE(model2->store.find("head_speed.fc1.w")->value.shape[0] == 50);
  REQUIRE(model2->store.find("head_speed.fc2.w")->value.shape[0] == 10);
  REQUIRE(model2->store.find("head_speed.bn0.gamma") != nullptr);

  ModelSpec m2s = toy_spec(Variant::m2_sequence, 1.0);
  auto model3 = build_model<float>(m2s, 1);
  REQUIRE(model3->store.find("seq.fc1.w")->value.shape[0] == 512);
  REQUIRE(model3->store.find("seq.fc2.w")->value.shape[0] == 128);
  REQUIRE(model3->store.find("gru.fw0.wx")->value.shape[0] == 3 * 64);
  REQUIRE(model3->store.find("head_angle.fc0.w")->value.shape[0] == 256);

  ModelSpec m3 = toy_spec(Variant::m3, 1.0);
  auto model4 = build_model<float>(m3, 1);
  REQUIRE(model4->store.find("head_angle.fc0.w")->value.shape[0] == 64);
  REQUIRE(model4->store.find("head_angle.fc1.w")->value.shape[0] == 32);
}

TEST_CASE("m2 variants expect 23 and 230 input channels") {
  ModelSpec single = default_spec(Variant::m2_single);
  REQUIRE(single.backbones.at("trunk").in_channels == 23);
  ModelSpec stacked = default_spec(Variant::m2_stacked);
  REQUIRE(stacked.backbones.at("trunk").in_channels == 230);
}

TEST_CASE("shape mismatches raise errors naming the branch") {
  ModelSpec spec = toy_spec(Variant::m2_single);
  auto model = build_model<float>(spec, 2);
  Batch<float> batch = toy_batch(spec, 2, 18, 32, 3);
  batch.rgbm_steps[0] = random_tensor({2, 7, 18, 32}, 1);
  Pcg32 rng(0);
  Tape<float> tape;
  REQUIRE_THROWS_WITH(model->forward(tape, batch, false, rng),
                      Catch::Matchers::ContainsSubstring("trunk") &&
                          Catch::Matchers::ContainsSubstring("23"));
}

TEST_CASE("zero-initialized final layers give exactly zero outputs") {
  ModelSpec spec = toy_spec(Variant::m1);
  auto model = build_model<float>(spec, 4);
  for (const char* name : {"head_angle.out.w", "head_angle.out.b", "head_speed.out.w",
                           "head_speed.out.b"})
    model->store.find(name)->value.fill(0.0f);
  Batch<float> batch = toy_batch(spec, 3, 18, 32, 5);
  // both input frames identical
  batch.rgb_steps[1] = batch.rgb_steps[0];
  batch.semantic_steps[1] = batch.semantic_steps[0];
  Prediction p = run_forward(*model, batch);
  for (double v : p.angle_norm) REQUIRE(v == 0.0);
  for (double v : p.speed_norm) REQUIRE(v == 0.0);
}

TEST_CASE("parameter count is monotone in scale and zero for an empty model") {
  ModelSpec small = toy_spec(Variant::m2_single, 0.25);
  ModelSpec big = toy_spec(Variant::m2_single, 0.5);
  auto a = build_model<float>(small, 1);
  auto b = build_model<float>(big, 1);
  REQUIRE(a->parameter_count() > 0);
  REQUIRE(b->parameter_count() > a->parameter_count());
  Model<float> empty;
  REQUIRE(empty.parameter_count() == 0);
}

TEST_CASE("deep families construct and run at reduced scale") {
  struct Case {
    Family family;
    int64_t feature_at_scale1;
  };
  for (const auto& c : std::vector<Case>{{Family::residual34, 512},
                                         {Family::residual50, 2048},
                                         {Family::dense121, 0},
                                         {Family::dense201, 0}}) {
    ParamStore<float> ps;
    ps.seed = 5;
    BackboneSpec bs;
    bs.family = c.family;
    bs.in_channels = 3;
    Backbone<float> bb = build_backbone(ps, "bb", bs, 0.125);
    REQUIRE(bb.feature_dim > 0);
    Tape<float> tape;
    Pcg32 rng(1);
    int x = tape.input(random_tensor({1, 3, 45, 80}, 3, 0.3f));
    int feat = bb.forward(tape, x, false, rng);
    INFO(family_name(c.family));
    REQUIRE(tape.val(feat).shape == std::vector<int64_t>{1, bb.feature_dim});
    for (float v : tape.val(feat).data) REQUIRE(std::isfinite(v));
  }
  // residual152 is just deeper; construct only
  ParamStore<float> ps;
  ps.seed = 6;
  BackboneSpec bs;
  bs.family = Family::residual152;
  Backbone<float> bb = build_backbone(ps, "bb", bs, 0.0625);
  REQUIRE(bb.res_blocks.size() == 3 + 8 + 36 + 3);
}

TEST_CASE("adapt_first_layer zero-extends kernels exactly") {
  ParamStore<float> ps;
  ps.seed = 9;
  BackboneSpec bs;
  bs.family = Family::toy_conv;
  bs.in_channels = 3;
  Backbone<float> bb = build_backbone(ps, "bb", bs, 0.25);
  Tensor<float> rgb = random_tensor({2, 3, 18, 32}, 11, 0.5f);

  Tape<float> t0;
  Pcg32 rng(0);
  Tensor<float> base = t0.val(bb.forward(t0, t0.input(rgb), false, rng));

  adapt_first_layer(bb, 23);
  REQUIRE(bb.spec.in_channels == 23);
  REQUIRE(bb.first_conv_weight()->value.shape[1] == 23);
  // zero-extended input reproduces the original activations exactly
  Tensor<float> wide({2, 23, 18, 32});
  std::copy_n(rgb.ptr(), 3 * 18 * 32, wide.ptr());
  std::copy_n(rgb.ptr() + 3 * 18 * 32, 3 * 18 * 32, wide.ptr() + 23 * 18 * 32);
  Tape<float> t1;
  Tensor<float> adapted = t1.val(bb.forward(t1, t1.input(wide), false, rng));
  REQUIRE(adapted.data == base.data);

  // widening to 230 keeps the kernel count, depth becomes 230
  adapt_first_layer(bb, 230);
  REQUIRE(bb.first_conv_weight()->value.shape[0] == scaled_dim(16, 0.25));
  REQUIRE(bb.first_conv_weight()->value.shape[1] == 230);

  // in_channels == current -> unchanged
  auto before = bb.first_conv_weight()->value.data;
  adapt_first_layer(bb, 230);
  REQUIRE(bb.first_conv_weight()->value.data == before);
}

TEST_CASE("checkpoints round-trip spec, stats and parameters") {
  TempDir dir("ckpt");
  ModelSpec spec = toy_spec(Variant::m2_single);
  auto model = build_model<float>(spec, 21);
  NormStats stats;
  stats.angle_mean = 1.25;
  stats.angle_std = 30;
  stats.speed_mean = 42;
  stats.speed_std = 11;
  stats.provenance = "train";
  nlohmann::json meta = {{"epoch", 3}, {"build_seed", 21}, {"val_angle_mse", 12.5}};
  std::string path = dir.sub("model.ckpt");
  save_checkpoint(path, *model, stats, meta);

  LoadedCheckpoint<float> loaded = load_checkpoint<float>(path);
  REQUIRE(model_spec_to_json(loaded.model->spec) == model_spec_to_json(spec));
  REQUIRE(loaded.stats.angle_mean == 1.25);
  REQUIRE(loaded.meta.at("epoch") == 3);
  REQUIRE(loaded.model->store.params.size() == model->store.params.size());
  for (size_t i = 0; i < model->store.params.size(); ++i)
    REQUIRE(loaded.model->store.params[i]->value.data == model->store.params[i]->value.data);

  Batch<float> batch = toy_batch(spec, 2, 18, 32, 9);
  Prediction a = run_forward(*model, batch);
  Prediction b = run_forward(*loaded.model, batch);
  REQUIRE(a.angle_norm == b.angle_norm);

  REQUIRE_THROWS_AS(load_checkpoint<float>(dir.sub("missing.ckpt")), DataError);
}

TEST_CASE("model spec json round-trips") {
  ModelSpec spec = default_spec(Variant::m2_sequence);
  spec.scale = 0.37;
  spec.semantic_dim = 47;
  nlohmann::json j = model_spec_to_json(spec);
  ModelSpec back = model_spec_from_json(j);
  REQUIRE(model_spec_to_json(back) == j);
  REQUIRE(back.backbones.at("seq_dense").family == Family::dense201);
}
