#include "catch_amalgamated.hpp"

#include <cmath>

#include "drivefusion/data/generate.hpp"
#include "drivefusion/evaluate.hpp"
#include "testutil.hpp"

using namespace df;

TEST_CASE("mse basics") {
  REQUIRE(mse({1, 2, 3}, {1, 2, 3}) == 0.0);
  REQUIRE(mse({3, 5, 7}, {1, 3, 5}) == Catch::Approx(4.0));
  REQUIRE_THROWS_AS(mse({}, {}), DataError);
  REQUIRE_THROWS_AS(mse({1, 2}, {1}), DataError);
  // combined column arithmetic as published: 831.504 + 4.543 = 836.047
  REQUIRE(831.504 + 4.543 == Catch::Approx(836.047).margin(1e-9));
}

TEST_CASE("per-zone report with overlapping tags") {
  std::vector<double> pa = {1, 2, 3, 4}, ta = {0, 0, 0, 0};
  std::vector<double> ps = {1, 1, 1, 1}, ts = {0, 0, 0, 0};
  std::vector<std::vector<std::string>> zones = {
      {"Zone30", "Straight"}, {"Zone30", "Left", "Pedestrian"}, {"Zone50", "Right"}, {"Zone50", "Straight"}};
  EvalReport rep = per_zone_report(pa, ta, ps, ts, zones);
  REQUIRE(rep.n_samples == 4);
  REQUIRE(rep.mse_angle == Catch::Approx((1.0 + 4 + 9 + 16) / 4));
  REQUIRE(rep.mse_speed == Catch::Approx(1.0));
  REQUIRE(rep.combined == Catch::Approx(rep.mse_angle + rep.mse_speed).margin(1e-9));
  REQUIRE(rep.per_zone.at("Zone30").count == 2);
  REQUIRE(rep.per_zone.at("Zone30").mse_angle == Catch::Approx((1.0 + 4) / 2));
  REQUIRE(rep.per_zone.at("Pedestrian").count == 1);
  REQUIRE(rep.per_zone.at("Pedestrian").mse_angle == Catch::Approx(4.0));
  // zones with zero frames are absent
  REQUIRE(rep.per_zone.count("Yield") == 0);
  // unknown tags are reported verbatim
  std::vector<std::vector<std::string>> open = {{"Tunnel"}, {}, {}, {}};
  EvalReport rep2 = per_zone_report(pa, ta, ps, ts, open);
  REQUIRE(rep2.per_zone.count("Tunnel") == 1);
}

TEST_CASE("perfect predictions give zero everywhere") {
  std::vector<double> v = {1, -2, 3};
  std::vector<std::vector<std::string>> zones = {{"Zone30"}, {"Zone50"}, {"Zone80"}};
  EvalReport rep = per_zone_report(v, v, v, v, zones);
  REQUIRE(rep.mse_angle == 0.0);
  REQUIRE(rep.mse_speed == 0.0);
  for (const auto& [tag, z] : rep.per_zone) {
    REQUIRE(z.mse_angle == 0.0);
    REQUIRE(z.mse_speed == 0.0);
  }
}

TEST_CASE("maneuver tags reconcile with the overall mse") {
  // Left/Straight/Right partition the frames, so count-weighted zone MSEs
  // must recompose the overall MSE
  Pcg32 rng(11);
  const int n = 5000;
  std::vector<double> pa(n), ta(n), ps(n), ts(n);
  std::vector<std::vector<std::string>> zones(n);
  for (int i = 0; i < n; ++i) {
    ta[static_cast<size_t>(i)] = rng.normal() * 25;
    pa[static_cast<size_t>(i)] = ta[static_cast<size_t>(i)] + rng.normal() * 8;
    ts[static_cast<size_t>(i)] = 50 + rng.normal() * 12;
    ps[static_cast<size_t>(i)] = ts[static_cast<size_t>(i)] + rng.normal() * 3;
    double a = ta[static_cast<size_t>(i)];
    zones[static_cast<size_t>(i)] = {a <= -10 ? "Left" : (a >= 10 ? "Right" : "Straight")};
  }
  EvalReport rep = per_zone_report(pa, ta, ps, ts, zones);
  double acc_angle = 0, acc_speed = 0;
  int64_t total = 0;
  for (const char* tag : {"Left", "Straight", "Right"}) {
    const ZoneMetrics& z = rep.per_zone.at(tag);
    acc_angle += static_cast<double>(z.count) * z.mse_angle;
    acc_speed += static_cast<double>(z.count) * z.mse_speed;
    total += z.count;
  }
  REQUIRE(total == n);
  REQUIRE(acc_angle == Catch::Approx(static_cast<double>(n) * rep.mse_angle).margin(1e-6 * n));
  REQUIRE(acc_speed == Catch::Approx(static_cast<double>(n) * rep.mse_speed).margin(1e-6 * n));
}

TEST_CASE("report is permutation invariant") {
  Pcg32 rng(13);
  const int n = 200;
  std::vector<double> pa(n), ta(n), ps(n), ts(n);
  std::vector<std::vector<std::string>> zones(n);
  for (int i = 0; i < n; ++i) {
    pa[static_cast<size_t>(i)] = rng.normal();
    ta[static_cast<size_t>(i)] = rng.normal();
    ps[static_cast<size_t>(i)] = rng.normal();
    ts[static_cast<size_t>(i)] = rng.normal();
    zones[static_cast<size_t>(i)] = {i % 2 == 0 ? "A" : "B"};
  }
  EvalReport rep = per_zone_report(pa, ta, ps, ts, zones);
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  shuffle(order.begin(), order.end(), rng);
  std::vector<double> pa2, ta2, ps2, ts2;
  std::vector<std::vector<std::string>> z2;
  for (size_t i : order) {
    pa2.push_back(pa[i]);
    ta2.push_back(ta[i]);
    ps2.push_back(ps[i]);
    ts2.push_back(ts[i]);
    z2.push_back(zones[i]);
  }
  EvalReport rep2 = per_zone_report(pa2, ta2, ps2, ts2, z2);
  REQUIRE(rep.mse_angle == Catch::Approx(rep2.mse_angle).margin(1e-12));
  REQUIRE(rep.per_zone.at("A").mse_speed == Catch::Approx(rep2.per_zone.at("A").mse_speed).margin(1e-12));
}

TEST_CASE("angle histogram over absolute values") {
  std::vector<double> zeros(25, 0.0);
  std::vector<int64_t> counts = angle_histogram(zeros, 5.0);
  REQUIRE(counts.size() == 36);
  REQUIRE(counts[0] == 25);

  std::vector<int64_t> pm = angle_histogram({-3, 3}, 5.0);
  REQUIRE(pm[0] == 2);

  Pcg32 rng(17);
  std::vector<double> values;
  for (int i = 0; i < 1000; ++i) values.push_back(rng.uniform(-180, 180));
  std::vector<int64_t> c = angle_histogram(values, 5.0);
  int64_t total = 0;
  for (int64_t v : c) total += v;
  REQUIRE(total == 1000);

  REQUIRE(angle_histogram({180.0, -180.0}, 5.0)[35] == 2);
  REQUIRE_THROWS_AS(angle_histogram({181.0}, 5.0), DataError);
}

TEST_CASE("constant-mean baseline tracks validation variance") {
  // predictor emitting the train mean scores ~ var(validation) when the
  // splits are statistically alike
  GenConfig cfg;
  cfg.frames_per_chapter = 2500;
  cfg.seed = 29;
  std::vector<double> train_angles, val_angles;
  for (int c = 0; c < 10; ++c)
    for (const auto& f : simulate_chapter(cfg, 0, c)) train_angles.push_back(f.angle_deg);
  for (int c = 10; c < 20; ++c)
    for (const auto& f : simulate_chapter(cfg, 0, c)) val_angles.push_back(f.angle_deg);
  double train_mean = 0;
  for (double a : train_angles) train_mean += a;
  train_mean /= static_cast<double>(train_angles.size());
  std::vector<double> constant(val_angles.size(), train_mean);
  double baseline = mse(constant, val_angles);
  double val_mean = 0;
  for (double a : val_angles) val_mean += a;
  val_mean /= static_cast<double>(val_angles.size());
  double val_var = 0;
  for (double a : val_angles) val_var += (a - val_mean) * (a - val_mean);
  val_var /= static_cast<double>(val_angles.size());
  REQUIRE(baseline == Catch::Approx(val_var).epsilon(0.05));
}

TEST_CASE("report json and text round-trip") {
  testutil::TempDir dir("report");
  EvalReport rep = per_zone_report({1, 2}, {0, 0}, {1, 1}, {0, 0}, {{"Zone30"}, {"Zone50", "Left"}});
  std::string path = dir.sub("report.json");
  save_report(path, rep);
  std::ifstream in(path);
  nlohmann::json j;
  in >> j;
  EvalReport back = report_from_json(j);
  REQUIRE(back.mse_angle == rep.mse_angle);
  REQUIRE(back.per_zone.at("Left").count == 1);
  std::string table = report_table(rep);
  REQUIRE(table.find("Overall") != std::string::npos);
  REQUIRE(table.find("Zone30") != std::string::npos);
}
