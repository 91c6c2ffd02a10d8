#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "drivefusion/core/rng.hpp"
#include "drivefusion/core/tensor.hpp"
#include "drivefusion/data/load.hpp"
#include "drivefusion/data/types.hpp"
#include "drivefusion/ensemble.hpp"
#include "drivefusion/io/png.hpp"

namespace df {

struct ResolutionTier {
  std::string name;
  int width = 0;
  int height = 0;
};

inline const std::vector<ResolutionTier>& resolution_tiers() {
  static const std::vector<ResolutionTier> tiers = {
      {"full", 1920, 1080}, {"s1", 640, 360}, {"s2", 320, 180}, {"s3", 160, 90}};
  return tiers;
}

inline ResolutionTier tier_by_name(const std::string& name) {
  for (const auto& t : resolution_tiers())
    if (t.name == name) return t;
  throw UsageError("unknown resolution tier: " + name + " (use full, s1, s2, s3)");
}

// ---- image <-> tensor ----

inline Tensor<float> image_to_chw(const ImageU8& img) {
  Tensor<float> t({img.channels, img.height, img.width});
  const int64_t plane = static_cast<int64_t>(img.height) * img.width;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        t[c * plane + y * img.width + x] = static_cast<float>(img.at(y, x, c)) / 255.0f;
  return t;
}

inline ImageU8 chw_to_image(const Tensor<float>& t) {
  if (t.rank() != 3) throw DataError("chw_to_image: expected [C,H,W]");
  const int C = static_cast<int>(t.dim(0)), H = static_cast<int>(t.dim(1)), W = static_cast<int>(t.dim(2));
  ImageU8 img = make_image(W, H, C);
  const int64_t plane = static_cast<int64_t>(H) * W;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < C; ++c) {
        float v = t[c * plane + y * W + x];
        long q = std::lround(static_cast<double>(v) * 255.0);
        img.at(y, x, c) = static_cast<uint8_t>(q < 0 ? 0 : (q > 255 ? 255 : q));
      }
  return img;
}

// ---- spatial / temporal down-sampling ----

// Exact area-average resampling to the given size. Fractional pixel coverage
// is weighted so constants are preserved and values stay in [0,1].
inline Tensor<float> downsample_area(const Tensor<float>& chw, int out_w, int out_h) {
  const int C = static_cast<int>(chw.dim(0)), H = static_cast<int>(chw.dim(1)), W = static_cast<int>(chw.dim(2));
  if (out_w == W && out_h == H) return chw;
  Tensor<float> out({C, out_h, out_w});
  const double sy = static_cast<double>(H) / out_h;
  const double sx = static_cast<double>(W) / out_w;
  const int64_t plane_in = static_cast<int64_t>(H) * W;
  const int64_t plane_out = static_cast<int64_t>(out_h) * out_w;
  for (int oy = 0; oy < out_h; ++oy) {
    const double y0 = oy * sy, y1 = (oy + 1) * sy;
    const int iy0 = static_cast<int>(std::floor(y0)), iy1 = std::min(H, static_cast<int>(std::ceil(y1)));
    for (int ox = 0; ox < out_w; ++ox) {
      const double x0 = ox * sx, x1 = (ox + 1) * sx;
      const int ix0 = static_cast<int>(std::floor(x0)), ix1 = std::min(W, static_cast<int>(std::ceil(x1)));
      for (int c = 0; c < C; ++c) {
        double acc = 0, wsum = 0;
        for (int iy = iy0; iy < iy1; ++iy) {
          double wy = std::min<double>(iy + 1, y1) - std::max<double>(iy, y0);
          for (int ix = ix0; ix < ix1; ++ix) {
            double wx = std::min<double>(ix + 1, x1) - std::max<double>(ix, x0);
            acc += wy * wx * chw[c * plane_in + iy * W + ix];
            wsum += wy * wx;
          }
        }
        out[c * plane_out + oy * out_w + ox] = static_cast<float>(acc / wsum);
      }
    }
  }
  return out;
}

inline Tensor<float> downsample_spatial(const Tensor<float>& chw, const ResolutionTier& tier) {
  if (chw.rank() != 3) throw DataError("downsample_spatial: expected [C,H,W]");
  const int H = static_cast<int>(chw.dim(1)), W = static_cast<int>(chw.dim(2));
  if (W * 9 != H * 16)
    throw DataError(strfmt("downsample_spatial: input %dx%d is not 16:9", W, H));
  if (tier.width > W || tier.height > H)
    throw DataError(strfmt("downsample_spatial: cannot go up from %dx%d to tier %s", W, H,
                           tier.name.c_str()));
  return downsample_area(chw, tier.width, tier.height);
}

// Majority-vote label downsample for segmentation masks (labels are not
// averageable). Identity when sizes match.
inline ImageU8 downsample_mask(const ImageU8& mask, int out_w, int out_h, int n_classes) {
  if (mask.width == out_w && mask.height == out_h) return mask;
  ImageU8 out = make_image(out_w, out_h, 1);
  const double sy = static_cast<double>(mask.height) / out_h;
  const double sx = static_cast<double>(mask.width) / out_w;
  std::vector<int> votes(static_cast<size_t>(n_classes));
  for (int oy = 0; oy < out_h; ++oy)
    for (int ox = 0; ox < out_w; ++ox) {
      std::fill(votes.begin(), votes.end(), 0);
      int iy0 = static_cast<int>(std::floor(oy * sy)), iy1 = std::max(iy0 + 1, static_cast<int>(std::ceil((oy + 1) * sy)));
      int ix0 = static_cast<int>(std::floor(ox * sx)), ix1 = std::max(ix0 + 1, static_cast<int>(std::ceil((ox + 1) * sx)));
      for (int iy = iy0; iy < std::min(iy1, mask.height); ++iy)
        for (int ix = ix0; ix < std::min(ix1, mask.width); ++ix) {
          uint8_t c = mask.at(iy, ix, 0);
          if (c < n_classes) votes[c]++;
        }
      int best = 0;
      for (int c = 1; c < n_classes; ++c)
        if (votes[static_cast<size_t>(c)] > votes[static_cast<size_t>(best)]) best = c;
      out.at(oy, ox, 0) = static_cast<uint8_t>(best);
    }
  return out;
}

// Keeps every stride-th frame by list position (equal to frame_index mod
// stride on native chapters); repeated application composes multiplicatively.
inline Chapter downsample_temporal(const Chapter& ch, int stride) {
  if (stride < 1) throw UsageError("downsample_temporal: stride must be >= 1");
  if (stride == 1) return ch;
  Chapter out;
  out.info = ch.info;
  for (size_t i = 0; i < ch.rows.size(); i += static_cast<size_t>(stride)) {
    out.rows.push_back(ch.rows[i]);
    if (!ch.front.empty()) out.front.push_back(ch.front[i]);
    if (!ch.seg.empty()) out.seg.push_back(ch.seg[i]);
    if (!ch.map.empty()) out.map.push_back(ch.map[i]);
  }
  out.info.frame_count = static_cast<int64_t>(out.rows.size());
  return out;
}

// ---- normalization ----

struct NormStats {
  std::array<double, 3> image_mean{};
  std::array<double, 3> image_std{{1, 1, 1}};
  double angle_mean = 0, angle_std = 1;
  double speed_mean = 0, speed_std = 1;
  std::array<double, kSemanticFields> semantic_mean{};
  std::array<double, kSemanticFields> semantic_std{};
  std::string provenance;  // "train" when fit on the training split
};

inline double normalize(double x, double mean, double std) { return (x - mean) / std; }
inline double denormalize(double z, double mean, double std) { return z * std + mean; }

namespace detail {
struct Welford {
  double n = 0, mean = 0, m2 = 0;
  void add(double x) {
    n += 1;
    double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }
  double var() const { return n > 0 ? m2 / n : 0; }
  double stddev() const { return std::sqrt(var()); }
};
inline double floor_std(double s) { return s < 1e-6 ? 1e-6 : s; }
}  // namespace detail

inline NormStats fit_norm_stats(const std::vector<const Chapter*>& train_chapters) {
  NormStats stats;
  detail::Welford img[3], angle, speed, sem[kSemanticFields];
  for (const Chapter* ch : train_chapters) {
    if (!ch->has_images()) throw DataError("fit_norm_stats: chapter images not loaded");
    for (size_t i = 0; i < ch->rows.size(); ++i) {
      const ImageU8& f = ch->front[i];
      for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x)
          for (int c = 0; c < 3; ++c) img[c].add(f.at(y, x, c) / 255.0);
      angle.add(ch->rows[i].angle_deg);
      speed.add(ch->rows[i].speed_kmh);
      for (int k = 0; k < kSemanticFields; ++k)
        if (!ch->rows[i].semantic.missing[static_cast<size_t>(k)])
          sem[k].add(ch->rows[i].semantic.values[static_cast<size_t>(k)]);
    }
  }
  if (angle.n == 0) throw DataError("fit_norm_stats: empty training set");
  for (int c = 0; c < 3; ++c) {
    stats.image_mean[static_cast<size_t>(c)] = img[c].mean;
    stats.image_std[static_cast<size_t>(c)] = detail::floor_std(img[c].stddev());
  }
  stats.angle_mean = angle.mean;
  stats.angle_std = detail::floor_std(angle.stddev());
  stats.speed_mean = speed.mean;
  stats.speed_std = detail::floor_std(speed.stddev());
  for (int k = 0; k < kSemanticFields; ++k) {
    stats.semantic_mean[static_cast<size_t>(k)] = sem[k].mean;
    stats.semantic_std[static_cast<size_t>(k)] = detail::floor_std(sem[k].stddev());
  }
  stats.provenance = "train";
  return stats;
}

inline nlohmann::json norm_stats_to_json(const NormStats& s) {
  return {{"image_mean", s.image_mean},
          {"image_std", s.image_std},
          {"angle_mean", s.angle_mean},
          {"angle_std", s.angle_std},
          {"speed_mean", s.speed_mean},
          {"speed_std", s.speed_std},
          {"semantic_mean", s.semantic_mean},
          {"semantic_std", s.semantic_std},
          {"provenance", s.provenance}};
}

inline NormStats norm_stats_from_json(const nlohmann::json& j) {
  NormStats s;
  try {
    s.image_mean = j.at("image_mean").get<std::array<double, 3>>();
    s.image_std = j.at("image_std").get<std::array<double, 3>>();
    s.angle_mean = j.at("angle_mean").get<double>();
    s.angle_std = j.at("angle_std").get<double>();
    s.speed_mean = j.at("speed_mean").get<double>();
    s.speed_std = j.at("speed_std").get<double>();
    s.semantic_mean = j.at("semantic_mean").get<std::array<double, kSemanticFields>>();
    s.semantic_std = j.at("semantic_std").get<std::array<double, kSemanticFields>>();
    s.provenance = j.value("provenance", "");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(strfmt("norm_stats: malformed json (%s)", e.what()));
  }
  return s;
}

inline void save_norm_stats(const std::string& path, const NormStats& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_norm_stats: cannot write " + path);
  out << norm_stats_to_json(s).dump(2) << "\n";
}

inline NormStats load_norm_stats(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_norm_stats: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(strfmt("load_norm_stats: corrupt file %s (%s)", path.c_str(), e.what()));
  }
  return norm_stats_from_json(j);
}

// ---- imputation ----

inline SemanticRecord impute(SemanticRecord record) {
  for (int k = 0; k < kSemanticFields; ++k)
    if (record.missing[static_cast<size_t>(k)]) record.values[static_cast<size_t>(k)] = 0.0;
  return record;
}

// ---- augmentation ----

struct AugmentConfig {
  double p_flip = 0.5;
  double p_brightness = 0.1;
  double brightness_lo = 0.2;
  double brightness_hi = 0.75;
  double p_affine = 0.25;
  double max_translate_frac = 0.05;
  double max_rotate_deg = 5.0;
  uint64_t seed = 0;
};

struct Transform {
  bool flip = false;
  bool brighten = false;
  double factor = 1.0;
  bool affine = false;
  double tx = 0, ty = 0;  // fractions of width/height
  double rot_deg = 0;
};

// Always consumes the same number of draws so the rng stream stays aligned
// regardless of which transforms fire.
inline Transform draw_transform(const AugmentConfig& cfg, Pcg32& rng) {
  Transform t;
  t.flip = rng.uniform() < cfg.p_flip;
  t.brighten = rng.uniform() < cfg.p_brightness;
  t.factor = rng.uniform(cfg.brightness_lo, cfg.brightness_hi);
  t.affine = rng.uniform() < cfg.p_affine;
  t.tx = rng.uniform(-cfg.max_translate_frac, cfg.max_translate_frac);
  t.ty = rng.uniform(-cfg.max_translate_frac, cfg.max_translate_frac);
  t.rot_deg = rng.uniform(-cfg.max_rotate_deg, cfg.max_rotate_deg);
  return t;
}

inline void flip_horizontal(Tensor<float>& chw) {
  const int C = static_cast<int>(chw.dim(0)), H = static_cast<int>(chw.dim(1)), W = static_cast<int>(chw.dim(2));
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y) {
      float* row = chw.ptr() + (static_cast<int64_t>(c) * H + y) * W;
      std::reverse(row, row + W);
    }
}

inline void flip_horizontal(ImageU8& img) {
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width / 2; ++x)
      for (int c = 0; c < img.channels; ++c)
        std::swap(img.at(y, x, c), img.at(y, img.width - 1 - x, c));
}

namespace detail {
inline void inverse_affine_point(double ox, double oy, double cx, double cy, double tx_px,
                                 double ty_px, double rot_rad, double& ix, double& iy) {
  double x = ox - cx - tx_px, y = oy - cy - ty_px;
  double ca = std::cos(-rot_rad), sa = std::sin(-rot_rad);
  ix = ca * x - sa * y + cx;
  iy = sa * x + ca * y + cy;
}
}  // namespace detail

inline void apply_affine_image(Tensor<float>& chw, double tx_frac, double ty_frac, double rot_deg) {
  const int C = static_cast<int>(chw.dim(0)), H = static_cast<int>(chw.dim(1)), W = static_cast<int>(chw.dim(2));
  Tensor<float> src = chw;
  const double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0;
  const double rot = rot_deg * M_PI / 180.0;
  const double tx = tx_frac * W, ty = ty_frac * H;
  const int64_t plane = static_cast<int64_t>(H) * W;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double ix, iy;
      detail::inverse_affine_point(x, y, cx, cy, tx, ty, rot, ix, iy);
      int x0 = static_cast<int>(std::floor(ix)), y0 = static_cast<int>(std::floor(iy));
      double fx = ix - x0, fy = iy - y0;
      for (int c = 0; c < C; ++c) {
        auto pix = [&](int yy, int xx) -> double {
          if (xx < 0 || xx >= W || yy < 0 || yy >= H) return 0.0;
          return src[c * plane + yy * W + xx];
        };
        double v = (1 - fy) * ((1 - fx) * pix(y0, x0) + fx * pix(y0, x0 + 1)) +
                   fy * ((1 - fx) * pix(y0 + 1, x0) + fx * pix(y0 + 1, x0 + 1));
        chw[c * plane + y * W + x] = static_cast<float>(v);
      }
    }
}

inline void apply_affine_mask(ImageU8& mask, double tx_frac, double ty_frac, double rot_deg,
                              uint8_t fill = 0) {
  const int H = mask.height, W = mask.width;
  ImageU8 src = mask;
  const double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0;
  const double rot = rot_deg * M_PI / 180.0;
  const double tx = tx_frac * W, ty = ty_frac * H;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double ix, iy;
      detail::inverse_affine_point(x, y, cx, cy, tx, ty, rot, ix, iy);
      int xn = static_cast<int>(std::lround(ix)), yn = static_cast<int>(std::lround(iy));
      mask.at(y, x, 0) = (xn < 0 || xn >= W || yn < 0 || yn >= H) ? fill : src.at(yn, xn, 0);
    }
}

// One frame's augmentable payload: the frontal image, its mask, and labels.
// Map imagery is deliberately absent; it is never augmented.
struct FrameSample {
  Tensor<float> front;  // [3,H,W] in [0,1]
  ImageU8 seg;
  double angle_deg = 0;
  double speed_kmh = 0;
};

inline FrameSample apply_transform(FrameSample s, const Transform& t) {
  if (t.flip) {
    flip_horizontal(s.front);
    flip_horizontal(s.seg);
    s.angle_deg = -s.angle_deg;
  }
  if (t.brighten) {
    for (auto& v : s.front.data) v = std::min(1.0f, std::max(0.0f, v * static_cast<float>(t.factor)));
  }
  if (t.affine) {
    apply_affine_image(s.front, t.tx, t.ty, t.rot_deg);
    apply_affine_mask(s.seg, t.tx, t.ty, t.rot_deg);
  }
  return s;
}

inline FrameSample augment(const FrameSample& s, const AugmentConfig& cfg, Pcg32& rng) {
  return apply_transform(s, draw_transform(cfg, rng));
}

// ---- channel stacking ----

// RGB image plus one-hot segmentation planes -> [3+n_classes, H, W].
inline Tensor<float> stack_mask(const Tensor<float>& chw3, const ImageU8& mask, int n_classes = 20) {
  if (chw3.rank() != 3 || chw3.dim(0) != 3) throw DataError("stack_mask: image must be [3,H,W]");
  const int H = static_cast<int>(chw3.dim(1)), W = static_cast<int>(chw3.dim(2));
  if (mask.height != H || mask.width != W)
    throw DataError(strfmt("stack_mask: mask %dx%d does not match image %dx%d", mask.width,
                           mask.height, W, H));
  Tensor<float> out({3 + n_classes, H, W});
  const int64_t plane = static_cast<int64_t>(H) * W;
  std::copy_n(chw3.ptr(), 3 * plane, out.ptr());
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      uint8_t c = mask.at(y, x, 0);
      if (c >= n_classes)
        throw DataError(strfmt("stack_mask: class %d out of range [0,%d)", c, n_classes));
      out[(3 + c) * plane + y * W + x] = 1.0f;
    }
  return out;
}

// Temporal channel concatenation of exactly 10 image+mask stacks, oldest
// first -> [230, H, W] for 23-channel inputs.
inline Tensor<float> stack_sequence(const std::vector<Tensor<float>>& frames) {
  if (frames.size() != 10)
    throw DataError(strfmt("stack_sequence: expected 10 frames, got %zu", frames.size()));
  const int64_t C = frames[0].dim(0), H = frames[0].dim(1), W = frames[0].dim(2);
  Tensor<float> out({C * 10, H, W});
  for (size_t i = 0; i < frames.size(); ++i) {
    if (!frames[i].same_shape(frames[0])) throw DataError("stack_sequence: frame shapes differ");
    std::copy_n(frames[i].ptr(), C * H * W, out.ptr() + static_cast<int64_t>(i) * C * H * W);
  }
  return out;
}

// ---- preprocessed cache on disk ----

inline std::string cache_root_for(const std::string& data_root, const ResolutionTier& tier,
                                  int stride) {
  std::string base = data_root;
  while (!base.empty() && base.back() == '/') base.pop_back();
  return base + "_" + tier.name + "_" + strfmt("%d", stride);
}

// Writes `<root>_<tier>_<stride>/` mirroring the dataset layout, then fits
// NormStats and target bin priors on its training split.
inline DatasetManifest build_cache(const DatasetManifest& src, const ResolutionTier& tier,
                                   int stride, const std::string& out_root) {
  namespace fs = std::filesystem;
  if (stride < 1) throw UsageError("build_cache: stride must be >= 1");
  if (tier.width > src.width || tier.height > src.height)
    throw DataError(strfmt("build_cache: tier %s exceeds dataset resolution %dx%d",
                           tier.name.c_str(), src.width, src.height));
  DatasetManifest out = src;
  out.root = out_root;
  out.width = tier.width;
  out.height = tier.height;
  out.gen_config["cache_of"] = src.root;
  out.gen_config["cache_tier"] = tier.name;
  out.gen_config["cache_stride"] = stride;

  const int n = static_cast<int>(src.chapters.size());
  std::string error;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    try {
      Chapter ch = load_chapter(src, src.chapters[static_cast<size_t>(i)], true);
      ch = downsample_temporal(ch, stride);
      fs::path dir = fs::path(out_root) / ch.info.chapter_id;
      fs::create_directories(dir);
      for (size_t k = 0; k < ch.rows.size(); ++k) {
        int64_t fi = ch.rows[k].frame_index;
        ImageU8 front = chw_to_image(downsample_spatial(image_to_chw(ch.front[k]), tier));
        write_png((dir / frame_file("front", fi)).string(), front);
        ImageU8 seg = downsample_mask(ch.seg[k], tier.width, tier.height, src.n_seg_classes);
        write_png((dir / frame_file("seg", fi)).string(), seg);
        if (!ch.map.empty()) {
          ImageU8 map_img = chw_to_image(downsample_spatial(image_to_chw(ch.map[k]), tier));
          write_png((dir / frame_file("map", fi)).string(), map_img);
        }
      }
      write_labels_csv((dir / "labels.csv").string(), ch.rows);
#pragma omp critical
      out.chapters[static_cast<size_t>(i)].frame_count = static_cast<int64_t>(ch.rows.size());
    } catch (const std::exception& e) {
#pragma omp critical
      if (error.empty()) error = e.what();
    }
  }
  if (!error.empty()) throw DataError("build_cache: " + error);
  save_manifest(out);

  // training-split statistics and priors live beside the cache
  std::vector<Chapter> train;
  for (const auto& c : out.chapters)
    if (c.split == Split::train) train.push_back(load_chapter(out, c, true));
  std::vector<const Chapter*> train_ptrs;
  std::vector<double> angles, speeds;
  for (const auto& ch : train) {
    train_ptrs.push_back(&ch);
    for (const auto& r : ch.rows) {
      angles.push_back(r.angle_deg);
      speeds.push_back(r.speed_kmh);
    }
  }
  NormStats stats = fit_norm_stats(train_ptrs);
  save_norm_stats((fs::path(out_root) / "norm_stats.json").string(), stats);
  save_prior((fs::path(out_root) / "prior_angle.json").string(), build_prior(angles, 100));
  save_prior((fs::path(out_root) / "prior_speed.json").string(), build_prior(speeds, 30));
  return out;
}

}  // namespace df
