#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "drivefusion/core/rng.hpp"
#include "drivefusion/data/load.hpp"
#include "drivefusion/data/types.hpp"
#include "drivefusion/io/csv.hpp"
#include "drivefusion/io/png.hpp"

namespace df {

// Segmentation classes produced by the renderer. n_seg_classes may be larger
// (unused class ids stay empty); it must cover these.
namespace seg_class {
enum : uint8_t { ground = 0, sky = 1, road = 2, lane = 3, vehicle = 4, sign = 5, dashboard = 6 };
constexpr int kUsed = 7;
}  // namespace seg_class

// Scalar state of one simulated frame; rendering and labels both derive
// from this record.
struct SimFrame {
  double angle_deg = 0;
  double speed_kmh = 0;
  double heading_rad = 0;
  double pos_x = 0, pos_y = 0;
  double arc_s = 0;
  double limit = 50;
  double free_flow = 45;
  int road_index = 0;
  double lane_width = 3.2;
  int num_lanes = 2;
  double dist_signal = -1, dist_yield = -1, dist_crossing = -1, dist_intersection = -1;  // <0: none in range
  double traffic = 0.4;
  double visibility = 0.8;
  double elevation = 400;
  double grade = 0;
  double temp = 12;
  bool lead_vehicle = false;
  double lead_gap_m = 30;
  bool gps_missing = false;
  double dash_phase_m = 0;  // arc length, drives lane-dash motion
};

namespace detail {

inline double clampd(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

inline double normalize_deg(double d) {
  while (d > 180.0) d -= 360.0;
  while (d <= -180.0) d += 360.0;
  return d;
}

struct EventTrack {
  double next_s = 0;
  double mean_gap = 400;
  void init(Pcg32& rng, double mean) {
    mean_gap = mean;
    next_s = rng.uniform(25.0, mean);
  }
  void advance(double s, Pcg32& rng) {
    while (s >= next_s) next_s += -std::log(1.0 - rng.uniform()) * mean_gap + 15.0;
  }
  double dist(double s) const { return next_s - s; }
};

}  // namespace detail

// Simulates the scalar time series of one chapter. Exposed separately from
// rendering so label statistics can be sampled cheaply in bulk.
inline std::vector<SimFrame> simulate_chapter(const GenConfig& cfg, int route, int chapter) {
  using detail::clampd;
  Pcg32 rng(mix_seed(cfg.seed, static_cast<uint64_t>(route), static_cast<uint64_t>(chapter), 0xC4A9));
  const int n = cfg.frames_per_chapter;
  const double dt = 0.1;
  std::vector<SimFrame> frames;
  frames.reserve(static_cast<size_t>(n));

  const double limits[3] = {30, 50, 80};
  double angle = clampd(rng.normal() * 3.0, -12, 12);
  double angle_ou = 0;
  double bias = 0, bias_target = 0;
  int bias_timer = 0;
  double speed = 0;
  double heading = rng.uniform(0, 2 * M_PI);
  double px = 0, py = 0, s = 0;
  double seg_end = 0, limit = 50, seg_speed_factor = 0.9, lane_width = 3.2, ff_factor = 0.95;
  int num_lanes = 2, road_index = 0;
  double traffic = rng.uniform(0.25, 0.6), vis = rng.uniform(0.6, 0.95);
  double elev = 380 + 20.0 * route + rng.uniform(-10, 10), grade = 0;
  const double temp_base = 10 + rng.normal() * 6;
  bool lead = false;
  double lead_gap = rng.uniform(15, 45);
  int gps_out = 0;
  speed = 0;

  detail::EventTrack ev_signal, ev_yield, ev_crossing, ev_intersection;
  ev_signal.init(rng, 420);
  ev_yield.init(rng, 650);
  ev_crossing.init(rng, 520);
  ev_intersection.init(rng, 340);

  for (int t = 0; t < n; ++t) {
    // road segment bookkeeping
    if (s >= seg_end) {
      seg_end = s + rng.uniform(350, 900);
      limit = limits[rng.uniform_int(3)];
      seg_speed_factor = rng.uniform(0.80, 0.95);
      ff_factor = rng.uniform(0.85, 1.05);
      lane_width = rng.uniform(2.8, 3.8);
      num_lanes = 1 + static_cast<int>(rng.uniform_int(3));
    }
    ev_signal.advance(s, rng);
    ev_yield.advance(s, rng);
    ev_crossing.advance(s, rng);
    if (s >= ev_intersection.next_s - 1e-12) ++road_index;
    ev_intersection.advance(s, rng);

    // steering: OU noise around a maneuver bias whose magnitude decays
    // exponentially, which keeps the angle histogram unimodal at zero
    if (bias_timer == 0) {
      if (rng.uniform() < 0.012) {
        double mag = clampd(-std::log(1.0 - rng.uniform()) * 24.0, 0.0, 80.0);
        bias_target = (rng.uniform() < 0.5 ? -1.0 : 1.0) * mag;
        bias_timer = 25 + static_cast<int>(rng.uniform_int(35));
      }
    } else if (--bias_timer == 0) {
      bias_target = 0;
    }
    bias += clampd(bias_target - bias, -3.0, 3.0);
    angle_ou = clampd(angle_ou * 0.94 + rng.normal() * 1.4, -40, 40);
    double desired = clampd(bias + angle_ou, -170, 170);
    angle += clampd(desired - angle, -cfg.max_angle_step_deg, cfg.max_angle_step_deg);

    // speed control toward the zone limit, slowing near events and in turns
    double d_sig = ev_signal.dist(s), d_yld = ev_yield.dist(s), d_cross = ev_crossing.dist(s),
           d_int = ev_intersection.dist(s);
    double target = limit * seg_speed_factor;
    if (d_sig < 70) target = std::min(target, 12 + 0.55 * d_sig);
    if (d_yld < 50) target = std::min(target, 22 + 0.50 * d_yld);
    if (d_cross < 45) target = std::min(target, 20 + 0.55 * d_cross);
    if (d_int < 40) target = std::min(target, 25 + 0.45 * d_int);
    target = std::min(target, 32 + 900.0 / (1.0 + std::abs(angle)));
    target += rng.normal() * 0.6;
    speed = clampd(speed + clampd(target - speed, -0.7, 0.7), 0, 160);

    // kinematics (proportional low-speed steering model, enough for maps)
    double v_ms = speed / 3.6;
    double kappa = std::tan(angle * M_PI / 180.0 * 0.08) / 4.0;
    heading += v_ms * kappa * dt;
    px += v_ms * dt * std::cos(heading);
    py += v_ms * dt * std::sin(heading);
    s += v_ms * dt;

    traffic = clampd(traffic + rng.normal() * 0.02 + (0.4 - traffic) * 0.01, 0, 1);
    vis = clampd(vis + rng.normal() * 0.01 + (0.8 - vis) * 0.01, 0.3, 1);
    elev += rng.normal() * 0.08 + grade * v_ms * dt;
    grade = clampd(grade + rng.normal() * 0.002 - grade * 0.01, -0.06, 0.06);
    lead = lead ? traffic > 0.50 : traffic > 0.60;
    lead_gap = clampd(lead_gap + rng.normal() * 0.8 + (30 - lead_gap) * 0.01, 8, 80);
    if (gps_out == 0 && rng.uniform() < 0.004) gps_out = 20 + static_cast<int>(rng.uniform_int(40));
    if (gps_out > 0) --gps_out;

    SimFrame f;
    f.angle_deg = angle;
    f.speed_kmh = speed;
    f.heading_rad = heading;
    f.pos_x = px;
    f.pos_y = py;
    f.arc_s = s;
    f.limit = limit;
    f.free_flow = std::min(limit * ff_factor, 35 + 1200.0 / (1.0 + std::abs(angle)));
    f.road_index = road_index;
    f.lane_width = lane_width;
    f.num_lanes = num_lanes;
    f.dist_signal = d_sig <= 500 ? d_sig : -1;
    f.dist_yield = d_yld <= 500 ? d_yld : -1;
    f.dist_crossing = d_cross <= 500 ? d_cross : -1;
    f.dist_intersection = d_int <= 500 ? d_int : -1;
    f.traffic = traffic;
    f.visibility = vis;
    f.elevation = elev;
    f.grade = grade;
    f.temp = temp_base + rng.normal() * 0.3;
    f.lead_vehicle = lead;
    f.lead_gap_m = lead_gap;
    f.gps_missing = gps_out > 0;
    f.dash_phase_m = s;
    frames.push_back(f);
  }
  return frames;
}

inline std::vector<std::string> zone_tags_for(const SimFrame& f) {
  std::vector<std::string> tags;
  if (f.limit <= 30)
    tags.push_back(zones::kZone30);
  else if (f.limit <= 50)
    tags.push_back(zones::kZone50);
  else
    tags.push_back(zones::kZone80);
  if (f.angle_deg <= -10)
    tags.push_back(zones::kLeft);
  else if (f.angle_deg >= 10)
    tags.push_back(zones::kRight);
  else
    tags.push_back(zones::kStraight);
  if (f.dist_crossing >= 0 && f.dist_crossing < 30) tags.push_back(zones::kPedestrian);
  if (f.dist_signal >= 0 && f.dist_signal < 30) tags.push_back(zones::kTrafficLight);
  if (f.dist_yield >= 0 && f.dist_yield < 30) tags.push_back(zones::kYield);
  return tags;
}

inline SemanticRecord semantic_for(const SimFrame& f, int route, Pcg32& noise_rng) {
  SemanticRecord r;
  auto set = [&](int idx, double v) { r.values[static_cast<size_t>(idx)] = v; };
  const double base_lat = 46.0 + 0.21 * route;
  const double base_lon = 7.2 + 0.13 * route;
  if (f.gps_missing) {
    r.missing[sem::latitude] = true;
    r.missing[sem::longitude] = true;
  } else {
    set(sem::latitude, base_lat + f.pos_y / 111320.0);
    set(sem::longitude, base_lon + f.pos_x / (111320.0 * std::cos(base_lat * M_PI / 180.0)));
  }
  set(sem::speed_limit, f.limit);
  set(sem::free_flow_speed, f.free_flow);
  set(sem::heading, detail::normalize_deg(f.heading_rad * 180.0 / M_PI));
  set(sem::road_index, f.road_index);
  auto set_dist = [&](int idx, double d) {
    if (d < 0)
      r.missing[static_cast<size_t>(idx)] = true;
    else
      set(idx, d);
  };
  set_dist(sem::dist_to_signal, f.dist_signal);
  set_dist(sem::dist_to_yield, f.dist_yield);
  set_dist(sem::dist_to_pedestrian_crossing, f.dist_crossing);
  set_dist(sem::dist_to_intersection, f.dist_intersection);
  set(sem::curvature, f.angle_deg * 0.6 + noise_rng.normal() * 0.5);
  set(sem::elevation, f.elevation);
  set(sem::lane_width, f.lane_width);
  set(sem::num_lanes, f.num_lanes);
  set(sem::traffic_density, f.traffic);
  set(sem::visibility, f.visibility);
  set(sem::road_grade, f.grade);
  set(sem::ambient_temp, f.temp);
  set(sem::route_progress, detail::clampd(f.arc_s / 5000.0, 0, 1));
  set(sem::noise, noise_rng.normal());
  // occasional sensor dropouts on the derived channels
  if (noise_rng.uniform() < 0.01) r.missing[sem::traffic_density] = true;
  if (noise_rng.uniform() < 0.01) r.missing[sem::visibility] = true;
  for (int k = 0; k < kSemanticFields; ++k)
    if (r.missing[static_cast<size_t>(k)]) r.values[static_cast<size_t>(k)] = 0.0;
  return r;
}

namespace detail {

struct Rgb {
  double r, g, b;
};

inline void put(ImageU8& img, ImageU8& mask, int x, int y, const Rgb& c, uint8_t cls) {
  if (x < 0 || x >= img.width || y < 0 || y >= img.height) return;
  img.at(y, x, 0) = static_cast<uint8_t>(clampd(std::lround(c.r * 255.0), 0, 255));
  img.at(y, x, 1) = static_cast<uint8_t>(clampd(std::lround(c.g * 255.0), 0, 255));
  img.at(y, x, 2) = static_cast<uint8_t>(clampd(std::lround(c.b * 255.0), 0, 255));
  mask.at(y, x, 0) = cls;
}

inline double pixel_noise(uint64_t seed, int x, int y) {
  uint64_t h = seed ^ (static_cast<uint64_t>(y) * 0x9E3779B97F4A7C15ull + static_cast<uint64_t>(x));
  h = splitmix64(h);
  return (static_cast<double>(h >> 11) * 0x1.0p-53 - 0.5) * 0.035;
}

}  // namespace detail

// Draws the front camera view and its exact segmentation mask. The road
// curvature tracks the current steering angle, lane dashes advance with
// travelled distance, and the dashboard strip encodes speed, so the targets
// are recoverable from pixels alone.
inline void render_front(const SimFrame& f, int W, int H, uint64_t noise_seed, ImageU8& rgb,
                         ImageU8& mask) {
  using detail::clampd;
  using detail::Rgb;
  rgb = make_image(W, H, 3);
  mask = make_image(W, H, 1, seg_class::ground);

  const int hud_h = std::max(3, H * 6 / 100);
  const int horizon = static_cast<int>(std::lround(0.42 * H));
  const int road_bottom = H - hud_h;
  const double curve_px = clampd(f.angle_deg, -90, 90) / 90.0 * 0.38 * W;
  const double visibility_dim = 0.75 + 0.25 * f.visibility;

  auto center_at = [&](double t) {
    double u = 1.0 - t;
    return W / 2.0 + curve_px * u * u;
  };
  auto half_at = [&](double t) { return 1.5 + (0.33 * W - 1.5) * t; };

  for (int y = 0; y < road_bottom; ++y) {
    if (y < horizon) {
      double a = horizon > 0 ? static_cast<double>(y) / horizon : 0.0;
      Rgb sky{0.35 + 0.40 * a, 0.55 + 0.30 * a, 0.90 + 0.05 * a};
      sky.r *= visibility_dim;
      sky.g *= visibility_dim;
      sky.b *= visibility_dim;
      for (int x = 0; x < W; ++x) detail::put(rgb, mask, x, y, sky, seg_class::sky);
      continue;
    }
    double t = static_cast<double>(y - horizon + 1) / (road_bottom - horizon);
    double center = center_at(t);
    double half = half_at(t);
    double lane_half = std::max(0.8, 0.022 * W * t);
    double ground_dist = 4.0 / std::max(t, 0.04);
    double dash = ground_dist + f.dash_phase_m;
    bool dash_on = dash / 7.0 - std::floor(dash / 7.0) < 0.55;
    Rgb ground{0.30, 0.52, 0.26};
    Rgb road{0.335, 0.335, 0.36};
    Rgb lane{0.93, 0.93, 0.82};
    for (int x = 0; x < W; ++x) {
      double dx = x + 0.5 - center;
      if (std::abs(dx) <= half) {
        if (std::abs(dx) <= lane_half && dash_on)
          detail::put(rgb, mask, x, y, lane, seg_class::lane);
        else
          detail::put(rgb, mask, x, y, road, seg_class::road);
      } else {
        detail::put(rgb, mask, x, y, ground, seg_class::ground);
      }
    }
  }

  // roadside signs for upcoming events
  struct SignDef {
    double dist;
    Rgb color;
  };
  const SignDef signs[3] = {{f.dist_signal, {0.85, 0.20, 0.15}},
                            {f.dist_yield, {0.92, 0.80, 0.18}},
                            {f.dist_crossing, {0.20, 0.42, 0.88}}};
  for (const auto& sd : signs) {
    if (sd.dist < 0 || sd.dist > 140) continue;
    double t_s = clampd(4.0 / std::max(sd.dist, 4.4), 0.05, 0.95);
    int y_base = horizon + static_cast<int>(std::lround(t_s * (road_bottom - horizon)));
    double x_s = center_at(t_s) + half_at(t_s) + std::max(2.0, 0.045 * W * t_s);
    int r = std::max(1, static_cast<int>(std::lround(0.035 * W * t_s)));
    int pole_top = y_base - 5 * r;
    for (int y = pole_top; y <= y_base; ++y)
      detail::put(rgb, mask, static_cast<int>(x_s), y, {0.35, 0.33, 0.30}, seg_class::sign);
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx)
        if (dx * dx + dy * dy <= r * r)
          detail::put(rgb, mask, static_cast<int>(x_s) + dx, pole_top + dy, sd.color, seg_class::sign);
  }

  // lead vehicle
  if (f.lead_vehicle) {
    double t_v = clampd(4.0 / std::max(f.lead_gap_m, 4.4), 0.06, 0.92);
    int y_v = horizon + static_cast<int>(std::lround(t_v * (road_bottom - horizon)));
    double c_v = center_at(t_v);
    int hw = std::max(1, static_cast<int>(std::lround(0.42 * half_at(t_v))));
    int hh = std::max(2, static_cast<int>(std::lround(1.5 * hw)));
    for (int y = y_v - hh; y <= y_v; ++y)
      for (int x = static_cast<int>(c_v) - hw; x <= static_cast<int>(c_v) + hw; ++x)
        detail::put(rgb, mask, x, y, {0.62, 0.12, 0.10}, seg_class::vehicle);
  }

  // dashboard strip: centered speed bar plus a steering-position tick, the
  // visible stand-ins for the instrument cluster and wheel
  const double bar_half = f.speed_kmh / 160.0 * 0.46 * W;
  const double tick_x = W / 2.0 + clampd(f.angle_deg, -90, 90) / 90.0 * 0.44 * W;
  const double tick_half = std::max(1.5, 0.030 * W);
  for (int y = road_bottom; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      bool in_bar = y > road_bottom && y < H - 1 && std::abs(x + 0.5 - W / 2.0) <= bar_half;
      bool in_tick = std::abs(x + 0.5 - tick_x) <= tick_half;
      Rgb c = in_tick ? Rgb{0.95, 0.55, 0.10} : (in_bar ? Rgb{0.85, 0.90, 0.95} : Rgb{0.07, 0.07, 0.08});
      detail::put(rgb, mask, x, y, c, seg_class::dashboard);
    }

  // mild deterministic texture
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double nz = detail::pixel_noise(noise_seed, x, y);
      for (int c = 0; c < 3; ++c) {
        int v = rgb.at(y, x, c) + static_cast<int>(std::lround(nz * 255.0));
        rgb.at(y, x, c) = static_cast<uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
      }
    }
}

// Heading-up schematic of the route around the current position.
inline ImageU8 render_map(const std::vector<SimFrame>& frames, size_t t, int W, int H) {
  ImageU8 img = make_image(W, H, 3, 0);
  for (auto& p : img.pixels) p = 246;
  const SimFrame& cur = frames[t];
  const double a = cur.heading_rad;
  const double scale = 0.32 * std::min(W, H) / 90.0;
  const double m00 = std::sin(a), m01 = -std::cos(a), m10 = -std::cos(a), m11 = -std::sin(a);
  auto draw_disc = [&](double sx, double sy, int r, uint8_t cr, uint8_t cg, uint8_t cb) {
    int cx = static_cast<int>(std::lround(sx)), cy = static_cast<int>(std::lround(sy));
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        if (dx * dx + dy * dy > r * r) continue;
        int x = cx + dx, y = cy + dy;
        if (x < 0 || x >= W || y < 0 || y >= H) continue;
        img.at(y, x, 0) = cr;
        img.at(y, x, 1) = cg;
        img.at(y, x, 2) = cb;
      }
  };
  const int64_t lo = std::max<int64_t>(0, static_cast<int64_t>(t) - 60);
  const int64_t hi = std::min<int64_t>(static_cast<int64_t>(frames.size()) - 1, static_cast<int64_t>(t) + 60);
  const int rr = std::max(1, static_cast<int>(std::lround(0.014 * std::min(W, H))));
  for (int64_t i = lo; i <= hi; ++i) {
    double relx = frames[static_cast<size_t>(i)].pos_x - cur.pos_x;
    double rely = frames[static_cast<size_t>(i)].pos_y - cur.pos_y;
    double sx = W / 2.0 + scale * (m00 * relx + m01 * rely);
    double sy = H / 2.0 + scale * (m10 * relx + m11 * rely);
    draw_disc(sx, sy, rr, 120, 120, 128);
  }
  draw_disc(W / 2.0, H / 2.0, rr + 1, 200, 40, 40);
  return img;
}

inline nlohmann::json gen_config_to_json(const GenConfig& c) {
  return {{"n_routes", c.n_routes},
          {"chapters_per_route", c.chapters_per_route},
          {"frames_per_chapter", c.frames_per_chapter},
          {"width", c.width},
          {"height", c.height},
          {"n_seg_classes", c.n_seg_classes},
          {"seed", c.seed},
          {"with_map", c.with_map},
          {"train_frac", c.train_frac},
          {"val_frac", c.val_frac},
          {"test_frac", c.test_frac},
          {"max_angle_step_deg", c.max_angle_step_deg}};
}

inline DatasetManifest generate_synthetic(const GenConfig& cfg, const std::string& root,
                                          bool overwrite = false) {
  namespace fs = std::filesystem;
  if (cfg.frames_per_chapter < 12)
    throw UsageError("generate: frames_per_chapter must be >= 12");
  if (cfg.width * 9 != cfg.height * 16)
    throw UsageError(strfmt("generate: resolution %dx%d is not 16:9", cfg.width, cfg.height));
  if (cfg.n_seg_classes < seg_class::kUsed || cfg.n_seg_classes > 255)
    throw UsageError("generate: n_seg_classes must cover the renderer classes");
  if (cfg.n_routes < 1 || cfg.chapters_per_route < 1) throw UsageError("generate: empty dataset");
  if (fs::exists(fs::path(root) / "manifest.json") && !overwrite)
    throw DataError("generate: manifest already exists at " + root + " (pass overwrite to replace)");

  DatasetManifest m;
  m.root = root;
  m.width = cfg.width;
  m.height = cfg.height;
  m.n_seg_classes = cfg.n_seg_classes;
  m.seed = cfg.seed;
  m.with_map = cfg.with_map;
  m.gen_config = gen_config_to_json(cfg);
  for (int r = 0; r < cfg.n_routes; ++r)
    for (int c = 0; c < cfg.chapters_per_route; ++c) {
      ChapterInfo info;
      info.route_id = strfmt("route%02d", r);
      info.chapter_id = strfmt("r%02dc%03d", r, c);
      info.frame_count = cfg.frames_per_chapter;
      m.chapters.push_back(info);
    }
  m = split_chapters(std::move(m), cfg.train_frac, cfg.val_frac, cfg.test_frac, cfg.seed);

  const int total = cfg.n_routes * cfg.chapters_per_route;
  std::string error;
#pragma omp parallel for schedule(dynamic)
  for (int idx = 0; idx < total; ++idx) {
    try {
      const int r = idx / cfg.chapters_per_route;
      const int c = idx % cfg.chapters_per_route;
      const ChapterInfo& info = m.chapters[static_cast<size_t>(idx)];
      fs::path dir = fs::path(root) / info.chapter_id;
      fs::create_directories(dir);
      std::vector<SimFrame> sim = simulate_chapter(cfg, r, c);
      Pcg32 noise_rng(mix_seed(cfg.seed, static_cast<uint64_t>(r), static_cast<uint64_t>(c), 0x5EED));
      std::vector<LabelRow> rows;
      rows.reserve(sim.size());
      for (size_t t = 0; t < sim.size(); ++t) {
        LabelRow row;
        row.frame_index = static_cast<int64_t>(t);
        row.timestamp_ms = static_cast<int64_t>(t) * kFrameIntervalMs;
        row.angle_deg = sim[t].angle_deg;
        row.speed_kmh = sim[t].speed_kmh;
        row.zone_tags = zone_tags_for(sim[t]);
        row.semantic = semantic_for(sim[t], r, noise_rng);
        rows.push_back(std::move(row));

        ImageU8 rgb, mask;
        uint64_t px_seed = mix_seed(cfg.seed, static_cast<uint64_t>(idx), t, 0xF00D);
        render_front(sim[t], cfg.width, cfg.height, px_seed, rgb, mask);
        write_png((dir / frame_file("front", static_cast<int64_t>(t))).string(), rgb);
        write_png((dir / frame_file("seg", static_cast<int64_t>(t))).string(), mask);
        if (cfg.with_map) {
          ImageU8 map_img = render_map(sim, t, cfg.width, cfg.height);
          write_png((dir / frame_file("map", static_cast<int64_t>(t))).string(), map_img);
        }
      }
      write_labels_csv((dir / "labels.csv").string(), rows);
    } catch (const std::exception& e) {
#pragma omp critical
      if (error.empty()) error = e.what();
    }
  }
  if (!error.empty()) throw DataError("generate: " + error);

  save_manifest(m);
  return m;
}

}  // namespace df
