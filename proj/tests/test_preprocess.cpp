#include "catch_amalgamated.hpp"

#include <cmath>

#include "drivefusion/data/generate.hpp"
#include "drivefusion/preprocess.hpp"
#include "testutil.hpp"

using namespace df;
using testutil::TempDir;

namespace {

Tensor<float> random_image(int c, int h, int w, uint64_t seed) {
  Tensor<float> t({c, h, w});
  Pcg32 rng(seed);
  for (auto& v : t.data) v = static_cast<float>(rng.uniform());
  return t;
}

Chapter labels_only_chapter(int n, uint64_t seed) {
  Chapter ch;
  ch.info.chapter_id = "c0";
  Pcg32 rng(seed);
  for (int i = 0; i < n; ++i) {
    LabelRow r;
    r.frame_index = i;
    r.timestamp_ms = i * 100;
    r.angle_deg = rng.normal() * 20;
    r.speed_kmh = 40 + rng.normal() * 10;
    for (int k = 0; k < kSemanticFields; ++k) r.semantic.values[static_cast<size_t>(k)] = rng.normal();
    ch.rows.push_back(r);
  }
  return ch;
}

}  // namespace

TEST_CASE("spatial down-sampling hits the published tier dimensions exactly") {
  Tensor<float> full = random_image(3, 1080, 1920, 1);
  for (const auto& [name, w, h] : std::vector<std::tuple<std::string, int, int>>{
           {"s1", 640, 360}, {"s2", 320, 180}, {"s3", 160, 90}}) {
    Tensor<float> out = downsample_spatial(full, tier_by_name(name));
    REQUIRE(out.dim(1) == h);
    REQUIRE(out.dim(2) == w);
    for (float v : out.data) {
      REQUIRE(v >= 0.0f);
      REQUIRE(v <= 1.0f);
    }
  }
}

TEST_CASE("area averaging matches an independent block-mean oracle") {
  // 1920/320 = 6: integer blocks, so a plain block mean is an exact oracle
  Tensor<float> full = random_image(3, 1080, 1920, 2);
  Tensor<float> out = downsample_spatial(full, tier_by_name("s2"));
  const int64_t plane_in = 1080 * 1920, plane_out = 180 * 320;
  Pcg32 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    int c = static_cast<int>(rng.uniform_int(3));
    int oy = static_cast<int>(rng.uniform_int(180));
    int ox = static_cast<int>(rng.uniform_int(320));
    double acc = 0;
    for (int dy = 0; dy < 6; ++dy)
      for (int dx = 0; dx < 6; ++dx)
        acc += full[c * plane_in + (oy * 6 + dy) * 1920 + (ox * 6 + dx)];
    REQUIRE(std::abs(out[c * plane_out + oy * 320 + ox] - acc / 36.0) < 1e-5);
  }
}

TEST_CASE("down-sampling preserves constants and identity") {
  Tensor<float> half({3, 90, 160});
  half.fill(0.5f);
  Tensor<float> out = downsample_spatial(Tensor<float>(half), tier_by_name("s3"));
  REQUIRE(out.same_shape(half));
  for (float v : out.data) REQUIRE(v == Catch::Approx(0.5).margin(1e-6));
  // constant at a strictly smaller tier too
  Tensor<float> big({3, 360, 640});
  big.fill(0.5f);
  for (float v : downsample_spatial(big, tier_by_name("s3")).data)
    REQUIRE(v == Catch::Approx(0.5).margin(1e-6));
}

TEST_CASE("down-sampling rejects bad inputs") {
  REQUIRE_THROWS_AS(downsample_spatial(random_image(3, 100, 160, 1), tier_by_name("s3")), DataError);
  REQUIRE_THROWS_AS(downsample_spatial(random_image(3, 90, 160, 1), tier_by_name("s2")), DataError);
  REQUIRE_THROWS_AS(tier_by_name("s9"), UsageError);
}

TEST_CASE("temporal down-sampling keeps every stride-th frame") {
  Chapter ch = labels_only_chapter(300, 5);
  Chapter out = downsample_temporal(ch, 40);
  REQUIRE(out.rows.size() == 8);
  for (size_t i = 0; i < out.rows.size(); ++i)
    REQUIRE(out.rows[i].frame_index == static_cast<int64_t>(i) * 40);

  Chapter identity = downsample_temporal(ch, 1);
  REQUIRE(identity.rows.size() == ch.rows.size());

  // ceil(n / stride) frames, exact 10x reduction on multiples of 10
  Chapter s10 = downsample_temporal(ch, 10);
  REQUIRE(s10.rows.size() == 30);
}

TEST_CASE("temporal down-sampling composes multiplicatively") {
  Chapter ch = labels_only_chapter(173, 6);
  Chapter ab = downsample_temporal(downsample_temporal(ch, 2), 5);
  Chapter direct = downsample_temporal(ch, 10);
  REQUIRE(ab.rows.size() == direct.rows.size());
  for (size_t i = 0; i < ab.rows.size(); ++i)
    REQUIRE(ab.rows[i].frame_index == direct.rows[i].frame_index);
}

TEST_CASE("norm stats match a two-pass oracle on a synthetic set") {
  // 1000 tiny frames; oracle is an independent two-pass mean/std
  Chapter ch;
  ch.info.chapter_id = "c";
  Pcg32 rng(9);
  for (int i = 0; i < 1000; ++i) {
    LabelRow r;
    r.frame_index = i;
    r.angle_deg = rng.normal() * 30;
    r.speed_kmh = 50 + rng.normal() * 15;
    for (int k = 0; k < kSemanticFields; ++k) {
      r.semantic.values[static_cast<size_t>(k)] = rng.normal() * (k + 1);
      r.semantic.missing[static_cast<size_t>(k)] = rng.uniform() < 0.2;
      if (r.semantic.missing[static_cast<size_t>(k)]) r.semantic.values[static_cast<size_t>(k)] = 0;
    }
    ch.rows.push_back(r);
    ImageU8 img = make_image(16, 9, 3);
    for (auto& px : img.pixels) px = static_cast<uint8_t>(rng.uniform_int(256));
    ch.front.push_back(img);
    ch.seg.push_back(make_image(16, 9, 1));
  }
  NormStats stats = fit_norm_stats({&ch});
  REQUIRE(stats.provenance == "train");

  // two-pass oracle for the angle channel and image channel 0
  double mean = 0;
  for (const auto& r : ch.rows) mean += r.angle_deg;
  mean /= 1000.0;
  double var = 0;
  for (const auto& r : ch.rows) var += (r.angle_deg - mean) * (r.angle_deg - mean);
  var /= 1000.0;
  REQUIRE(stats.angle_mean == Catch::Approx(mean).margin(1e-9));
  REQUIRE(stats.angle_std == Catch::Approx(std::sqrt(var)).margin(1e-9));

  double imean = 0;
  int64_t n = 0;
  for (const auto& img : ch.front)
    for (int y = 0; y < 9; ++y)
      for (int x = 0; x < 16; ++x) {
        imean += img.at(y, x, 0) / 255.0;
        ++n;
      }
  imean /= static_cast<double>(n);
  REQUIRE(stats.image_mean[0] == Catch::Approx(imean).margin(1e-9));

  // semantic stats use non-missing entries only
  double smean = 0;
  int64_t sn = 0;
  for (const auto& r : ch.rows)
    if (!r.semantic.missing[3]) {
      smean += r.semantic.values[3];
      ++sn;
    }
  smean /= static_cast<double>(sn);
  REQUIRE(stats.semantic_mean[3] == Catch::Approx(smean).margin(1e-9));
}

TEST_CASE("norm stats are order-invariant over chapters") {
  Chapter a = labels_only_chapter(200, 11), b = labels_only_chapter(150, 12);
  for (Chapter* ch : {&a, &b}) {
    for (size_t i = 0; i < ch->rows.size(); ++i) {
      ch->front.push_back(make_image(16, 9, 3, static_cast<uint8_t>(i % 256)));
      ch->seg.push_back(make_image(16, 9, 1));
    }
  }
  NormStats s1 = fit_norm_stats({&a, &b});
  NormStats s2 = fit_norm_stats({&b, &a});
  REQUIRE(s1.angle_mean == Catch::Approx(s2.angle_mean).margin(1e-9));
  REQUIRE(s1.angle_std == Catch::Approx(s2.angle_std).margin(1e-9));
  REQUIRE(s1.image_mean[0] == Catch::Approx(s2.image_mean[0]).margin(1e-9));
  REQUIRE(s1.image_std[0] == Catch::Approx(s2.image_std[0]).margin(1e-9));
}

TEST_CASE("degenerate and symmetric target statistics") {
  Chapter ch;
  ch.info.chapter_id = "c";
  for (int i = 0; i < 10; ++i) {
    LabelRow r;
    r.frame_index = i;
    r.angle_deg = i % 2 == 0 ? -10 : 10;
    r.speed_kmh = 40;
    ch.rows.push_back(r);
    ch.front.push_back(make_image(16, 9, 3, 100));
    ch.seg.push_back(make_image(16, 9, 1));
  }
  NormStats stats = fit_norm_stats({&ch});
  REQUIRE(stats.angle_mean == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(stats.speed_mean == Catch::Approx(40.0).margin(1e-12));
  REQUIRE(stats.speed_std == 1e-6);  // floored
  REQUIRE_THROWS_AS(fit_norm_stats({}), DataError);
}

TEST_CASE("normalize and denormalize") {
  REQUIRE(normalize(60, 40, 20) == 1.0);
  REQUIRE(normalize(40, 40, 20) == 0.0);
  Pcg32 rng(4);
  for (int i = 0; i < 100; ++i) {
    double x = rng.normal() * 100, m = rng.normal() * 10, s = rng.uniform(0.5, 5);
    REQUIRE(denormalize(normalize(x, m, s), m, s) == Catch::Approx(x).margin(1e-12));
  }
}

TEST_CASE("imputation zeroes missing fields and keeps flags") {
  SemanticRecord r;
  for (int k = 0; k < kSemanticFields; ++k) {
    r.values[static_cast<size_t>(k)] = k + 1;
    r.missing[static_cast<size_t>(k)] = true;
  }
  SemanticRecord all = impute(r);
  for (int k = 0; k < kSemanticFields; ++k) {
    REQUIRE(all.values[static_cast<size_t>(k)] == 0.0);
    REQUIRE(all.missing[static_cast<size_t>(k)]);
  }
  SemanticRecord none;
  for (int k = 0; k < kSemanticFields; ++k) none.values[static_cast<size_t>(k)] = k * 2.0;
  SemanticRecord out = impute(none);
  for (int k = 0; k < kSemanticFields; ++k) REQUIRE(out.values[static_cast<size_t>(k)] == k * 2.0);

  SemanticRecord one;
  for (int k = 0; k < kSemanticFields; ++k) one.values[static_cast<size_t>(k)] = k + 1.0;
  one.missing[3] = true;
  SemanticRecord out1 = impute(one);
  REQUIRE(out1.values[3] == 0.0);
  REQUIRE(out1.values[4] == 5.0);
}

namespace {

FrameSample sample_frame(uint64_t seed) {
  FrameSample s;
  s.front = random_image(3, 18, 32, seed);
  s.seg = make_image(32, 18, 1);
  Pcg32 rng(seed + 1);
  for (auto& px : s.seg.pixels) px = static_cast<uint8_t>(rng.uniform_int(7));
  s.angle_deg = 30;
  s.speed_kmh = 55;
  return s;
}

}  // namespace

TEST_CASE("forced flip mirrors pixels and negates the angle") {
  FrameSample s = sample_frame(21);
  Transform t;
  t.flip = true;
  FrameSample f = apply_transform(s, t);
  REQUIRE(f.angle_deg == -30.0);
  REQUIRE(f.speed_kmh == 55.0);
  const int W = 32;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 18; ++y)
      for (int x = 0; x < W; ++x)
        REQUIRE(f.front[(c * 18 + y) * W + x] == s.front[(c * 18 + y) * W + (W - 1 - x)]);
  for (int y = 0; y < 18; ++y)
    for (int x = 0; x < W; ++x) REQUIRE(f.seg.at(y, x, 0) == s.seg.at(y, W - 1 - x, 0));
}

TEST_CASE("flip is an exact involution") {
  FrameSample s = sample_frame(22);
  Transform t;
  t.flip = true;
  FrameSample twice = apply_transform(apply_transform(s, t), t);
  REQUIRE(twice.angle_deg == s.angle_deg);
  REQUIRE(twice.front.data == s.front.data);
  REQUIRE(twice.seg.pixels == s.seg.pixels);
}

TEST_CASE("zero-probability augmentation is the identity") {
  AugmentConfig cfg;
  cfg.p_flip = 0;
  cfg.p_brightness = 0;
  cfg.p_affine = 0;
  FrameSample s = sample_frame(23);
  Pcg32 rng(7);
  FrameSample out = augment(s, cfg, rng);
  REQUIRE(out.front.data == s.front.data);
  REQUIRE(out.seg.pixels == s.seg.pixels);
  REQUIRE(out.angle_deg == s.angle_deg);
}

TEST_CASE("brightness darkens the image only, never the mask") {
  FrameSample s = sample_frame(24);
  Transform t;
  t.brighten = true;
  t.factor = 0.2;
  FrameSample out = apply_transform(s, t);
  REQUIRE(out.seg.pixels == s.seg.pixels);
  for (int64_t i = 0; i < out.front.numel(); ++i)
    REQUIRE(out.front[i] == Catch::Approx(s.front[i] * 0.2f).margin(1e-6));
}

TEST_CASE("affine translation shifts image and mask together") {
  FrameSample s = sample_frame(25);
  s.seg.at(9, 16, 0) = 6;
  Transform t;
  t.affine = true;
  t.tx = 0.25;  // 8 of 32 columns to the right
  t.ty = 0;
  t.rot_deg = 0;
  FrameSample out = apply_transform(s, t);
  REQUIRE(out.seg.at(9, 24, 0) == 6);
  REQUIRE(out.front[(0 * 18 + 9) * 32 + 24] == Catch::Approx(s.front[(0 * 18 + 9) * 32 + 16]).margin(1e-5));
  REQUIRE(out.angle_deg == s.angle_deg);  // labels unchanged by affine
}

TEST_CASE("augmentation is reproducible from the rng state") {
  AugmentConfig cfg;
  cfg.seed = 0;
  FrameSample s = sample_frame(26);
  Pcg32 r1(123), r2(123);
  FrameSample a = augment(s, cfg, r1);
  FrameSample b = augment(s, cfg, r2);
  REQUIRE(a.front.data == b.front.data);
  REQUIRE(a.angle_deg == b.angle_deg);
  REQUIRE(r1.state() == r2.state());
}

TEST_CASE("stack_mask builds 23 channels of image plus one-hot planes") {
  Tensor<float> img = random_image(3, 9, 16, 31);
  ImageU8 mask = make_image(16, 9, 1, 0);
  Tensor<float> out = stack_mask(img, mask, 20);
  REQUIRE(out.dim(0) == 23);
  const int64_t plane = 9 * 16;
  // all-class-0 mask: plane 3 ones, 4..22 zeros
  for (int64_t i = 0; i < plane; ++i) REQUIRE(out[3 * plane + i] == 1.0f);
  for (int c = 4; c < 23; ++c)
    for (int64_t i = 0; i < plane; ++i) REQUIRE(out[c * plane + i] == 0.0f);

  // one-hot planes sum to one at every pixel for a random mask
  Pcg32 rng(8);
  for (auto& px : mask.pixels) px = static_cast<uint8_t>(rng.uniform_int(20));
  Tensor<float> out2 = stack_mask(img, mask, 20);
  for (int64_t i = 0; i < plane; ++i) {
    float sum = 0;
    for (int c = 3; c < 23; ++c) sum += out2[c * plane + i];
    REQUIRE(sum == 1.0f);
  }
  // image channels pass through untouched
  for (int64_t i = 0; i < 3 * plane; ++i) REQUIRE(out2[i] == img[i]);

  mask.at(0, 0, 0) = 20;
  REQUIRE_THROWS_AS(stack_mask(img, mask, 20), DataError);
}

TEST_CASE("stack_sequence concatenates ten frames to 230 channels") {
  std::vector<Tensor<float>> frames;
  for (int i = 0; i < 10; ++i) {
    Tensor<float> f({23, 9, 16});
    f.fill(static_cast<float>(i));
    frames.push_back(f);
  }
  Tensor<float> out = stack_sequence(frames);
  REQUIRE(out.dim(0) == 230);
  const int64_t plane = 9 * 16;
  // channels 0..22 come from frame 0, temporal order preserved
  for (int64_t i = 0; i < 23 * plane; ++i) REQUIRE(out[i] == 0.0f);
  REQUIRE(out[23 * plane] == 1.0f);
  REQUIRE(out[229 * plane] == 9.0f);

  frames.pop_back();
  REQUIRE_THROWS_AS(stack_sequence(frames), DataError);
}

TEST_CASE("norm stats serialize with exact field names") {
  NormStats s;
  s.image_mean = {0.1, 0.2, 0.3};
  s.image_std = {1, 2, 3};
  s.angle_mean = 1.5;
  s.angle_std = 2.5;
  s.speed_mean = 3.5;
  s.speed_std = 4.5;
  for (int k = 0; k < kSemanticFields; ++k) {
    s.semantic_mean[static_cast<size_t>(k)] = k;
    s.semantic_std[static_cast<size_t>(k)] = k + 1;
  }
  s.provenance = "train";
  nlohmann::json j = norm_stats_to_json(s);
  for (const char* key : {"image_mean", "image_std", "angle_mean", "angle_std", "speed_mean",
                          "speed_std", "semantic_mean", "semantic_std"})
    REQUIRE(j.contains(key));
  NormStats back = norm_stats_from_json(j);
  REQUIRE(back.angle_mean == s.angle_mean);
  REQUIRE(back.semantic_std[19] == s.semantic_std[19]);
  REQUIRE(back.provenance == "train");
}

TEST_CASE("cache build mirrors the dataset layout and fits train-only stats") {
  TempDir src("cache_src"), dst("cache_dst");
  GenConfig cfg;
  cfg.n_routes = 2;
  cfg.chapters_per_route = 2;
  cfg.frames_per_chapter = 24;
  cfg.width = 320;
  cfg.height = 180;
  cfg.seed = 13;
  cfg.train_frac = 0.5;
  cfg.val_frac = 0.25;
  cfg.test_frac = 0.25;
  DatasetManifest m = generate_synthetic(cfg, src.str());
  ResolutionTier tier = tier_by_name("s3");
  std::string cache_root = dst.sub("cache");
  DatasetManifest cache = build_cache(m, tier, 2, cache_root);
  REQUIRE(cache.width == 160);
  REQUIRE(cache.height == 90);
  for (const auto& c : cache.chapters) REQUIRE(c.frame_count == 12);
  // loader accepts the cache (uniform stride-2 indices)
  DatasetManifest loaded = load_manifest(cache_root);
  REQUIRE(loaded.chapters.size() == 4);
  NormStats stats = load_norm_stats(cache_root + "/norm_stats.json");
  REQUIRE(stats.provenance == "train");
  BinPrior pa = load_prior(cache_root + "/prior_angle.json");
  REQUIRE(pa.n_bins == 100);
  BinPrior ps = load_prior(cache_root + "/prior_speed.json");
  REQUIRE(ps.n_bins == 30);
  // cache naming helper
  REQUIRE(cache_root_for("/data/run", tier, 2) == "/data/run_s3_2");
}
