#include "catch_amalgamated.hpp"

#include <cmath>

#include "drivefusion/core/rng.hpp"
#include "drivefusion/trajectory.hpp"
#include "testutil.hpp"

using namespace df;

TEST_CASE("straight line at constant speed") {
  std::vector<double> angles(10, 0.0), speeds(10, 36.0);
  Path p = integrate_path(angles, speeds, {});
  REQUIRE(p.size() == 11);
  REQUIRE(p.x[0] == 0.0);
  REQUIRE(p.y[0] == 0.0);
  REQUIRE(p.x.back() == Catch::Approx(10.0).margin(1e-12));
  REQUIRE(p.y.back() == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(path_length(p) == Catch::Approx(10.0).margin(1e-12));
}

TEST_CASE("zero speed never moves") {
  std::vector<double> angles = {10, -20, 40, 90};
  std::vector<double> speeds(4, 0.0);
  Path p = integrate_path(angles, speeds, {});
  for (size_t i = 0; i < p.size(); ++i) {
    REQUIRE(p.x[i] == 0.0);
    REQUIRE(p.y[i] == 0.0);
  }
  REQUIRE(path_length(p) == 0.0);
}

TEST_CASE("empty series gives a single origin point") {
  Path p = integrate_path({}, {}, {});
  REQUIRE(p.size() == 1);
  REQUIRE(path_length(p) == 0.0);
}

TEST_CASE("constant input traces the analytic circle") {
  // angle 10 deg, 36 km/h, gain 1: R = v/omega = 10 / (10*pi/180)
  const double R = 10.0 / (10.0 * M_PI / 180.0);
  std::vector<double> deviations;
  for (double dt : {0.1, 0.05, 0.025}) {
    KinematicsConfig cfg;
    cfg.dt = dt;
    int n = static_cast<int>(std::lround(30.0 / dt));
    std::vector<double> angles(static_cast<size_t>(n), 10.0), speeds(static_cast<size_t>(n), 36.0);
    Path p = integrate_path(angles, speeds, cfg);
    // circle center at (0, R) for initial heading along +x
    double max_dev = 0;
    for (size_t i = 0; i < p.size(); ++i) {
      double r = std::hypot(p.x[i], p.y[i] - R);
      max_dev = std::max(max_dev, std::abs(r - R));
    }
    deviations.push_back(max_dev);
    REQUIRE(max_dev < R * 0.1);
  }
  // first-order integrator: deviation shrinks linearly with dt
  REQUIRE(deviations[0] / deviations[1] == Catch::Approx(2.0).margin(0.2));
  REQUIRE(deviations[1] / deviations[2] == Catch::Approx(2.0).margin(0.2));
}

TEST_CASE("path length equals the speed integral regardless of angles") {
  Pcg32 rng(5);
  std::vector<double> angles, speeds;
  double expect = 0;
  for (int i = 0; i < 500; ++i) {
    angles.push_back(rng.normal() * 45);
    speeds.push_back(std::abs(rng.normal()) * 40);
    expect += speeds.back() / 3.6 * 0.1;
  }
  Path p = integrate_path(angles, speeds, {});
  REQUIRE(path_length(p) == Catch::Approx(expect).margin(1e-9));
}

TEST_CASE("mirror symmetry: negated angles reflect the path") {
  Pcg32 rng(6);
  std::vector<double> angles, speeds, neg;
  for (int i = 0; i < 200; ++i) {
    angles.push_back(rng.normal() * 30);
    neg.push_back(-angles.back());
    speeds.push_back(20 + std::abs(rng.normal()) * 30);
  }
  Path a = integrate_path(angles, speeds, {});
  Path b = integrate_path(neg, speeds, {});
  for (size_t i = 0; i < a.size(); ++i) {
    REQUIRE(b.x[i] == Catch::Approx(a.x[i]).margin(1e-12));
    REQUIRE(b.y[i] == Catch::Approx(-a.y[i]).margin(1e-12));
  }
}

TEST_CASE("rotating the initial heading rotates the whole path") {
  Pcg32 rng(7);
  std::vector<double> angles, speeds;
  for (int i = 0; i < 150; ++i) {
    angles.push_back(rng.normal() * 25);
    speeds.push_back(30 + std::abs(rng.normal()) * 20);
  }
  KinematicsConfig base;
  Path a = integrate_path(angles, speeds, base);
  KinematicsConfig rotated = base;
  const double phi = 1.1;
  rotated.initial_heading = phi;
  Path b = integrate_path(angles, speeds, rotated);
  const double c = std::cos(phi), s = std::sin(phi);
  for (size_t i = 0; i < a.size(); ++i) {
    REQUIRE(b.x[i] == Catch::Approx(c * a.x[i] - s * a.y[i]).margin(1e-9));
    REQUIRE(b.y[i] == Catch::Approx(s * a.x[i] + c * a.y[i]).margin(1e-9));
  }
}

TEST_CASE("mismatched series lengths are rejected") {
  REQUIRE_THROWS_AS(integrate_path({1, 2}, {3}, {}), DataError);
  KinematicsConfig bad;
  bad.dt = 0;
  REQUIRE_THROWS_AS(integrate_path({1}, {1}, bad), UsageError);
}

TEST_CASE("path csv round-trips") {
  testutil::TempDir dir("path");
  std::vector<double> angles = {5, -5, 10}, speeds = {30, 40, 50};
  Path p = integrate_path(angles, speeds, {});
  std::string file = dir.sub("path.csv");
  save_path_csv(file, p);
  CsvTable t = read_csv(file);
  REQUIRE(t.header == std::vector<std::string>{"step", "x_m", "y_m", "heading_rad"});
  REQUIRE(t.rows.size() == p.size());
  REQUIRE(parse_double(t.rows[3][1]) == Catch::Approx(p.x[3]).margin(1e-9));
}
