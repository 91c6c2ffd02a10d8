#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "drivefusion/data/load.hpp"
#include "drivefusion/ensemble.hpp"
#include "drivefusion/nn/checkpoint.hpp"
#include "drivefusion/nn/model.hpp"
#include "drivefusion/preprocess.hpp"

namespace df {

enum class Schedule { constant, m2_single_decay, halve_20_30_40 };

inline const char* schedule_name(Schedule s) {
  switch (s) {
    case Schedule::constant: return "constant";
    case Schedule::m2_single_decay: return "m2_single_decay";
    default: return "halve_20_30_40";
  }
}

inline Schedule schedule_from_name(const std::string& s) {
  if (s == "constant") return Schedule::constant;
  if (s == "m2_single_decay") return Schedule::m2_single_decay;
  if (s == "halve_20_30_40") return Schedule::halve_20_30_40;
  throw UsageError("unknown lr schedule: " + s);
}

// Epoch-granular learning rate. m2_single_decay steps to the fixed rates
// 1e-4 / 5e-5 / 3e-5 after epochs 5 / 15 / 20; halve_20_30_40 halves at each
// passed threshold.
inline double lr_at(Schedule s, double lr0, int epoch) {
  if (epoch < 0) throw UsageError("lr_at: epoch must be >= 0");
  switch (s) {
    case Schedule::constant:
      return lr0;
    case Schedule::m2_single_decay:
      if (epoch < 5) return lr0;
      if (epoch < 15) return 1e-4;
      if (epoch < 20) return 5e-5;
      return 3e-5;
    default: {
      int halvings = (epoch >= 20 ? 1 : 0) + (epoch >= 30 ? 1 : 0) + (epoch >= 40 ? 1 : 0);
      return lr0 * std::pow(0.5, halvings);
    }
  }
}

// Sum of per-target mean squared errors in normalized units.
inline double loss_value(const Prediction& pred, const std::vector<double>& target_angle,
                         const std::vector<double>& target_speed) {
  if (pred.angle_norm.size() != target_angle.size() || pred.speed_norm.size() != target_speed.size() ||
      pred.angle_norm.empty())
    throw DataError("loss: prediction/target size mismatch");
  double sa = 0, ss = 0;
  for (size_t i = 0; i < pred.angle_norm.size(); ++i) {
    double da = pred.angle_norm[i] - target_angle[i];
    double ds = pred.speed_norm[i] - target_speed[i];
    sa += da * da;
    ss += ds * ds;
  }
  return sa / static_cast<double>(pred.angle_norm.size()) +
         ss / static_cast<double>(pred.speed_norm.size());
}

struct TrainConfig {
  double lr0 = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0;
  int batch_size = 32;
  int epochs = 5;
  Schedule schedule = Schedule::constant;
  uint64_t seed = 0;
  AugmentConfig augment;
  bool augment_enabled = true;
  std::string tier = "s3";
  int temporal_stride = 1;
};

template <typename T>
struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 0;
  std::vector<Tensor<T>> m, v;
  int64_t t = 0;

  void init(const ParamStore<T>& ps) {
    m.clear();
    v.clear();
    for (const auto& p : ps.params) {
      m.push_back(Tensor<T>(p->value.shape));
      v.push_back(Tensor<T>(p->value.shape));
    }
  }

  void step(ParamStore<T>& ps, double lr) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t i = 0; i < ps.params.size(); ++i) {
      Parameter<T>& p = *ps.params[i];
      if (!p.trainable) continue;
      Tensor<T>& mi = m[i];
      Tensor<T>& vi = v[i];
      for (int64_t k = 0; k < p.value.numel(); ++k) {
        double g = p.grad[k];
        if (weight_decay > 0) g += weight_decay * p.value[k];
        double mk = beta1 * mi[k] + (1 - beta1) * g;
        double vk = beta2 * vi[k] + (1 - beta2) * g * g;
        mi[k] = static_cast<T>(mk);
        vi[k] = static_cast<T>(vk);
        p.value[k] -= static_cast<T>(lr * (mk / c1) / (std::sqrt(vk / c2) + eps));
      }
    }
  }
};

// ---- prepared in-memory dataset ----

struct PreparedData {
  std::vector<Chapter> chapters;
  int width = 0, height = 0;
  int n_seg_classes = 20;
  bool has_map = false;
};

// Loads a split with images, applying spatial/temporal down-sampling when the
// on-disk dataset is not already at the requested tier and stride.
inline PreparedData prepare_split(const DatasetManifest& m, Split split, const ResolutionTier& tier,
                                  int stride) {
  PreparedData out;
  out.width = tier.width;
  out.height = tier.height;
  out.n_seg_classes = m.n_seg_classes;
  out.has_map = m.with_map;
  std::vector<const ChapterInfo*> infos = m.split_chapters_of(split);
  out.chapters.resize(infos.size());
  std::string error;
  const int n = static_cast<int>(infos.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    try {
      Chapter ch = load_chapter(m, *infos[static_cast<size_t>(i)], true);
      if (stride > 1) ch = downsample_temporal(ch, stride);
      if (m.width != tier.width || m.height != tier.height) {
        for (size_t k = 0; k < ch.rows.size(); ++k) {
          ch.front[k] = chw_to_image(downsample_spatial(image_to_chw(ch.front[k]), tier));
          ch.seg[k] = downsample_mask(ch.seg[k], tier.width, tier.height, m.n_seg_classes);
          if (!ch.map.empty())
            ch.map[k] = chw_to_image(downsample_spatial(image_to_chw(ch.map[k]), tier));
        }
      }
      out.chapters[static_cast<size_t>(i)] = std::move(ch);
    } catch (const std::exception& e) {
#pragma omp critical
      if (error.empty()) error = e.what();
    }
  }
  if (!error.empty()) throw DataError("prepare_split: " + error);
  return out;
}

struct SampleRef {
  int chapter = 0;
  int64_t end_pos = 0;
};

inline int64_t history_frames(const ModelSpec& spec) {
  return static_cast<int64_t>(spec.sequence_length - 1) * spec.sequence_stride;
}

inline std::vector<SampleRef> enumerate_samples(const PreparedData& data, const ModelSpec& spec) {
  std::vector<SampleRef> refs;
  const int64_t hist = history_frames(spec);
  for (size_t c = 0; c < data.chapters.size(); ++c)
    for (int64_t e = hist; e < static_cast<int64_t>(data.chapters[c].rows.size()); ++e)
      refs.push_back({static_cast<int>(c), e});
  return refs;
}

namespace detail {

inline void normalize_image_inplace(Tensor<float>& chw, const NormStats& stats) {
  const int64_t plane = chw.dim(1) * chw.dim(2);
  for (int c = 0; c < 3; ++c) {
    const float mean = static_cast<float>(stats.image_mean[static_cast<size_t>(c)]);
    const float inv = static_cast<float>(1.0 / stats.image_std[static_cast<size_t>(c)]);
    float* p = chw.ptr() + c * plane;
    for (int64_t i = 0; i < plane; ++i) p[i] = (p[i] - mean) * inv;
  }
}

// Missing fields enter the network as zeros in normalized space; z-scoring a
// raw zero against far-from-zero field statistics would inject huge outliers.
// A horizontal flip mirrors the world, so the sign-coupled channels
// (curvature, heading) are negated to stay consistent with the negated angle.
inline std::vector<double> semantic_vector(const SemanticRecord& rec, const NormStats& stats,
                                           int semantic_dim, bool mirrored = false) {
  SemanticRecord imp = impute(rec);
  if (mirrored) {
    imp.values[sem::curvature] = -imp.values[sem::curvature];
    imp.values[sem::heading] = -imp.values[sem::heading];
  }
  std::vector<double> v;
  v.reserve(static_cast<size_t>(semantic_dim));
  for (int k = 0; k < kSemanticFields; ++k) {
    const auto i = static_cast<size_t>(k);
    v.push_back(imp.missing[i] ? 0.0
                               : normalize(imp.values[i], stats.semantic_mean[i], stats.semantic_std[i]));
  }
  if (semantic_dim == kSemanticFields + kFolderOnehot) {
    if (!imp.folder_onehot) throw DataError("semantic: folder one-hot requested but unavailable");
    for (double d : *imp.folder_onehot) v.push_back(d);
  }
  return v;
}

}  // namespace detail

// Materializes network inputs for the given samples. `transforms`, when
// non-null, holds one augmentation per sample applied uniformly to all frames
// of that sample (and to its angle label).
template <typename T>
Batch<T> assemble_batch(const PreparedData& data, const ModelSpec& spec, const NormStats& stats,
                        const std::vector<SampleRef>& refs,
                        const std::vector<Transform>* transforms) {
  const auto S = static_cast<size_t>(spec.sequence_length);
  const int64_t B = static_cast<int64_t>(refs.size());
  const int H = data.height, W = data.width;
  const bool needs_rgb = spec.variant == Variant::m1 || spec.variant == Variant::m2_sequence ||
                         spec.variant == Variant::m3;
  const bool needs_rgbm = spec.variant == Variant::m2_single || spec.variant == Variant::m2_sequence;
  const bool needs_stacked = spec.variant == Variant::m2_stacked;
  const bool needs_map = spec.variant == Variant::m3;
  const bool needs_sem = spec.use_semantic;
  const int mask_ch = 3 + spec.n_mask_classes;

  Batch<T> batch;
  batch.B = B;
  batch.targets = Tensor<T>({B, 2});
  batch.zones.resize(static_cast<size_t>(B));
  if (needs_rgb)
    for (size_t s = 0; s < S; ++s) batch.rgb_steps.emplace_back(std::vector<int64_t>{B, 3, H, W});
  if (needs_rgbm)
    for (size_t s = 0; s < S; ++s)
      batch.rgbm_steps.emplace_back(std::vector<int64_t>{B, mask_ch, H, W});
  if (needs_stacked)
    batch.rgbm_stacked = Tensor<T>({B, static_cast<int64_t>(mask_ch) * static_cast<int64_t>(S), H, W});
  if (needs_map) batch.map_rgb = Tensor<T>({B, 3, H, W});
  if (needs_sem)
    for (size_t s = 0; s < S; ++s)
      batch.semantic_steps.emplace_back(std::vector<int64_t>{B, spec.semantic_dim});

  for (int64_t b = 0; b < B; ++b) {
    const SampleRef& ref = refs[static_cast<size_t>(b)];
    const Chapter& ch = data.chapters[static_cast<size_t>(ref.chapter)];
    if (!ch.has_images()) throw DataError("assemble_batch: chapter images not loaded");
    std::vector<int64_t> positions =
        load_sequence(ch, ref.end_pos, spec.sequence_length, spec.sequence_stride);
    const Transform* tf = transforms ? &(*transforms)[static_cast<size_t>(b)] : nullptr;

    double angle = ch.rows[static_cast<size_t>(ref.end_pos)].angle_deg;
    double speed = ch.rows[static_cast<size_t>(ref.end_pos)].speed_kmh;
    if (tf && tf->flip) angle = -angle;
    batch.targets[b * 2 + 0] = static_cast<T>(normalize(angle, stats.angle_mean, stats.angle_std));
    batch.targets[b * 2 + 1] = static_cast<T>(normalize(speed, stats.speed_mean, stats.speed_std));
    batch.zones[static_cast<size_t>(b)] = ch.rows[static_cast<size_t>(ref.end_pos)].zone_tags;

    std::vector<Tensor<float>> stacked_frames;
    for (size_t s = 0; s < S; ++s) {
      const auto pos = static_cast<size_t>(positions[s]);
      FrameSample fs;
      fs.front = image_to_chw(ch.front[pos]);
      fs.seg = ch.seg[pos];
      if (tf) fs = apply_transform(std::move(fs), *tf);
      detail::normalize_image_inplace(fs.front, stats);

      if (needs_rgb) {
        Tensor<T>& dst = batch.rgb_steps[s];
        for (int64_t i = 0; i < fs.front.numel(); ++i)
          dst[b * fs.front.numel() + i] = static_cast<T>(fs.front[i]);
      }
      if (needs_rgbm || needs_stacked) {
        Tensor<float> rgbm = stack_mask(fs.front, fs.seg, spec.n_mask_classes);
        if (needs_rgbm) {
          Tensor<T>& dst = batch.rgbm_steps[s];
          for (int64_t i = 0; i < rgbm.numel(); ++i)
            dst[b * rgbm.numel() + i] = static_cast<T>(rgbm[i]);
        } else {
          stacked_frames.push_back(std::move(rgbm));
        }
      }
      if (needs_sem) {
        std::vector<double> v = detail::semantic_vector(ch.rows[pos].semantic, stats,
                                                        spec.semantic_dim, tf && tf->flip);
        Tensor<T>& dst = batch.semantic_steps[s];
        for (int64_t i = 0; i < spec.semantic_dim; ++i)
          dst[b * spec.semantic_dim + i] = static_cast<T>(v[static_cast<size_t>(i)]);
      }
    }
    if (needs_stacked) {
      Tensor<float> stacked = stack_sequence(stacked_frames);
      for (int64_t i = 0; i < stacked.numel(); ++i)
        batch.rgbm_stacked[b * stacked.numel() + i] = static_cast<T>(stacked[i]);
    }
    if (needs_map) {
      if (ch.map.empty())
        throw DataError("assemble_batch: model needs map imagery but dataset has none");
      Tensor<float> mp = image_to_chw(ch.map[static_cast<size_t>(ref.end_pos)]);
      detail::normalize_image_inplace(mp, stats);
      for (int64_t i = 0; i < mp.numel(); ++i)
        batch.map_rgb[b * mp.numel() + i] = static_cast<T>(mp[i]);
    }
  }
  return batch;
}

// ---- training ----

struct EpochStats {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double val_angle_mse = 0;
  double val_speed_mse = 0;
};

struct CheckpointSnapshot {
  std::vector<Tensor<float>> values;  // aligned with ParamStore order
  nlohmann::json meta;
};

struct CheckpointSet {
  ModelSpec spec;
  uint64_t build_seed = 0;
  NormStats stats;
  CheckpointSnapshot best_angle, best_speed, last;
  double best_angle_mse = std::numeric_limits<double>::infinity();
  double best_speed_mse = std::numeric_limits<double>::infinity();
  std::vector<EpochStats> history;
};

template <typename T>
std::vector<Tensor<float>> snapshot_params(const ParamStore<T>& ps) {
  std::vector<Tensor<float>> out;
  out.reserve(ps.params.size());
  for (const auto& p : ps.params) {
    Tensor<float> t(p->value.shape);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(p->value[i]);
    out.push_back(std::move(t));
  }
  return out;
}

template <typename T>
void restore_params(ParamStore<T>& ps, const std::vector<Tensor<float>>& snap) {
  if (snap.size() != ps.params.size()) throw DataError("restore_params: snapshot size mismatch");
  for (size_t i = 0; i < snap.size(); ++i) {
    if (snap[i].shape != ps.params[i]->value.shape)
      throw DataError("restore_params: shape mismatch for " + ps.params[i]->name);
    for (int64_t k = 0; k < snap[i].numel(); ++k)
      ps.params[i]->value[k] = static_cast<T>(snap[i][k]);
  }
}

// Evaluation-mode predictions for the given samples, in raw units.
template <typename T>
void predict_samples(const Model<T>& model, const PreparedData& data, const NormStats& stats,
                     const std::vector<SampleRef>& refs, int batch_size,
                     std::vector<double>& angle_out, std::vector<double>& speed_out) {
  angle_out.clear();
  speed_out.clear();
  Pcg32 rng(0);  // unused in evaluation mode
  for (size_t start = 0; start < refs.size(); start += static_cast<size_t>(batch_size)) {
    std::vector<SampleRef> chunk(refs.begin() + static_cast<int64_t>(start),
                                 refs.begin() + static_cast<int64_t>(std::min(
                                                    refs.size(), start + static_cast<size_t>(batch_size))));
    Batch<T> batch = assemble_batch<T>(data, model.spec, stats, chunk, nullptr);
    Tape<T> tape;
    ForwardIds<T> ids = model.forward(tape, batch, false, rng);
    Prediction pred = extract_prediction(tape, ids);
    for (size_t i = 0; i < chunk.size(); ++i) {
      angle_out.push_back(denormalize(pred.angle_norm[i], stats.angle_mean, stats.angle_std));
      speed_out.push_back(denormalize(pred.speed_norm[i], stats.speed_mean, stats.speed_std));
    }
  }
}

struct ValMse {
  double angle = 0;
  double speed = 0;
};

template <typename T>
ValMse validation_mse(const Model<T>& model, const PreparedData& data, const NormStats& stats,
                      const std::vector<SampleRef>& refs, int batch_size) {
  std::vector<double> pa, psd;
  predict_samples(model, data, stats, refs, batch_size, pa, psd);
  ValMse out;
  for (size_t i = 0; i < refs.size(); ++i) {
    const Chapter& ch = data.chapters[static_cast<size_t>(refs[i].chapter)];
    const LabelRow& row = ch.rows[static_cast<size_t>(refs[i].end_pos)];
    double da = pa[i] - row.angle_deg;
    double ds = psd[i] - row.speed_kmh;
    out.angle += da * da;
    out.speed += ds * ds;
  }
  if (!refs.empty()) {
    out.angle /= static_cast<double>(refs.size());
    out.speed /= static_cast<double>(refs.size());
  }
  return out;
}

// Full training run: adaptive-moment optimization, augmentation on the train
// split only, per-epoch validation in deterministic mode, best-checkpoint
// tracking per target. Bit-reproducible for a fixed (spec, data, config).
template <typename T = float>
CheckpointSet train_model(const ModelSpec& spec, const PreparedData& train_data,
                          const PreparedData& val_data, const TrainConfig& cfg,
                          std::ostream* log = nullptr) {
  if (cfg.batch_size < 1 || cfg.lr0 <= 0) throw UsageError("train: bad batch size or lr");
  std::vector<const Chapter*> train_ptrs;
  for (const auto& ch : train_data.chapters) train_ptrs.push_back(&ch);
  if (train_ptrs.empty()) throw DataError("train: empty training split");
  if (val_data.chapters.empty()) throw DataError("train: empty validation split");
  NormStats stats = fit_norm_stats(train_ptrs);
  if (stats.provenance != "train") throw DataError("train: norm stats must come from the train split");

  auto model = build_model<T>(spec, cfg.seed);
  Adam<T> adam;
  adam.beta1 = cfg.beta1;
  adam.beta2 = cfg.beta2;
  adam.weight_decay = cfg.weight_decay;
  adam.init(model->store);

  std::vector<SampleRef> train_refs = enumerate_samples(train_data, spec);
  std::vector<SampleRef> val_refs = enumerate_samples(val_data, spec);
  if (train_refs.empty()) throw DataError("train: no training samples (chapters shorter than history)");
  if (val_refs.empty()) throw DataError("train: no validation samples");

  CheckpointSet set;
  set.spec = spec;
  set.build_seed = cfg.seed;
  set.stats = stats;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(cfg.schedule, cfg.lr0, epoch);
    Pcg32 shuffle_rng(mix_seed(cfg.seed, static_cast<uint64_t>(epoch), 0xDA7A));
    shuffle(train_refs.begin(), train_refs.end(), shuffle_rng);
    Pcg32 aug_rng(mix_seed(cfg.augment.seed ^ cfg.seed, static_cast<uint64_t>(epoch), 0xAE61));
    Pcg32 drop_rng(mix_seed(cfg.seed, static_cast<uint64_t>(epoch), 0xD80));

    double loss_sum = 0;
    int64_t seen = 0;
    int batch_index = 0;
    for (size_t start = 0; start < train_refs.size();
         start += static_cast<size_t>(cfg.batch_size), ++batch_index) {
      std::vector<SampleRef> chunk(
          train_refs.begin() + static_cast<int64_t>(start),
          train_refs.begin() +
              static_cast<int64_t>(std::min(train_refs.size(), start + static_cast<size_t>(cfg.batch_size))));
      std::vector<Transform> transforms;
      if (cfg.augment_enabled) {
        transforms.reserve(chunk.size());
        for (size_t i = 0; i < chunk.size(); ++i) transforms.push_back(draw_transform(cfg.augment, aug_rng));
      }
      Batch<T> batch = assemble_batch<T>(train_data, spec, stats, chunk,
                                         cfg.augment_enabled ? &transforms : nullptr);
      Tape<T> tape;
      ForwardIds<T> ids = model->forward(tape, batch, true, drop_rng);
      int targets = tape.input(batch.targets);
      int ta = tape.slice_axis1(targets, 0, 1);
      int ts = tape.slice_axis1(targets, 1, 1);
      int loss = tape.add(tape.mean_all(tape.square(tape.sub(ids.angle, ta))),
                          tape.mean_all(tape.square(tape.sub(ids.speed, ts))));
      const double loss_val = tape.val(loss)[0];
      if (!std::isfinite(loss_val))
        throw DataError(strfmt("train: non-finite loss at epoch %d batch %d", epoch, batch_index));
      model->store.zero_grads();
      tape.backward(loss);
      adam.step(model->store, lr);
      loss_sum += loss_val * static_cast<double>(chunk.size());
      seen += static_cast<int64_t>(chunk.size());
    }

    ValMse val = validation_mse(*model, val_data, stats, val_refs, cfg.batch_size);
    EpochStats es;
    es.epoch = epoch;
    es.lr = lr;
    es.train_loss = loss_sum / static_cast<double>(seen);
    es.val_angle_mse = val.angle;
    es.val_speed_mse = val.speed;
    set.history.push_back(es);
    if (log)
      (*log) << strfmt("epoch %d lr %.6g train_loss %.6f val_angle_mse %.4f val_speed_mse %.4f\n",
                       epoch, lr, es.train_loss, es.val_angle_mse, es.val_speed_mse);

    nlohmann::json meta = {{"epoch", epoch},
                           {"build_seed", cfg.seed},
                           {"val_angle_mse", val.angle},
                           {"val_speed_mse", val.speed},
                           {"train_loss", es.train_loss}};
    if (val.angle < set.best_angle_mse) {
      set.best_angle_mse = val.angle;
      set.best_angle.values = snapshot_params(model->store);
      set.best_angle.meta = meta;
      set.best_angle.meta["selected_for"] = "angle";
    }
    if (val.speed < set.best_speed_mse) {
      set.best_speed_mse = val.speed;
      set.best_speed.values = snapshot_params(model->store);
      set.best_speed.meta = meta;
      set.best_speed.meta["selected_for"] = "speed";
    }
    set.last.values = snapshot_params(model->store);
    set.last.meta = meta;
    set.last.meta["selected_for"] = "last";
  }
  return set;
}

inline void write_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
  CsvTable t;
  t.header = {"epoch", "lr", "train_loss", "val_angle_mse", "val_speed_mse"};
  for (const auto& e : history)
    t.rows.push_back({strfmt("%d", e.epoch), fmt_double(e.lr), fmt_double(e.train_loss),
                      fmt_double(e.val_angle_mse), fmt_double(e.val_speed_mse)});
  write_csv(path, t);
}

// One denormalized prediction per frame with enough history; earlier frames
// are simply absent from the series.
template <typename T>
PredictionSeries predict_chapter(const Model<T>& model, const NormStats& stats,
                                 const PreparedData& data, int chapter_index, int batch_size = 32) {
  if (stats.angle_std <= 0 || stats.speed_std <= 0) throw DataError("predict: missing norm stats");
  const Chapter& ch = data.chapters[static_cast<size_t>(chapter_index)];
  std::vector<SampleRef> refs;
  const int64_t hist = history_frames(model.spec);
  for (int64_t e = hist; e < static_cast<int64_t>(ch.rows.size()); ++e)
    refs.push_back({chapter_index, e});
  std::vector<double> pa, ps;
  predict_samples(model, data, stats, refs, batch_size, pa, ps);
  PredictionSeries series;
  series.reserve(refs.size());
  for (size_t i = 0; i < refs.size(); ++i) {
    const LabelRow& row = ch.rows[static_cast<size_t>(refs[i].end_pos)];
    PredPoint p;
    p.chapter_id = ch.info.chapter_id;
    p.frame_index = row.frame_index;
    p.timestamp_ms = row.timestamp_ms;
    p.angle_deg = pa[i];
    p.speed_kmh = ps[i];
    series.push_back(std::move(p));
  }
  return series;
}

}  // namespace df
