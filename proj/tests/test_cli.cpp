#include "catch_amalgamated.hpp"

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include <json.hpp>

#include "drivefusion/ensemble.hpp"
#include "drivefusion/evaluate.hpp"
#include "drivefusion/io/csv.hpp"
#include "testutil.hpp"

using testutil::TempDir;

namespace {

int run(const std::string& cmd) {
  int status = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string capture(const std::string& cmd, const std::string& log) {
  int status = std::system((cmd + " >" + log + " 2>&1").c_str());
  (void)status;
  return testutil::read_file(log);
}

const std::string kBin = DRIVEFUSION_BIN;

// One pipeline workspace shared by the ordered sections below.
struct Pipeline {
  TempDir dir{"cli"};
  std::string data, cache, run1, preds;

  Pipeline() {
    data = dir.sub("data");
    cache = data + "_s3_1";
    run1 = dir.sub("run1");
    preds = dir.sub("preds.csv");
  }

  std::string gen_cmd(uint64_t seed = 3) const {
    return kBin + " gen --out " + data +
           " --routes 2 --chapters-per-route 2 --frames 24 --width 320 --height 180 --seed " +
           std::to_string(seed) + " --train-frac 0.5 --val-frac 0.25 --test-frac 0.25";
  }
};

Pipeline& pipe() {
  static Pipeline p;
  return p;
}

}  // namespace

TEST_CASE("cli pipeline: gen, prep, train, predict, ensemble, eval, path, plot") {
  Pipeline& P = pipe();

  // ---- gen ----
  REQUIRE(run(P.gen_cmd()) == 0);
  REQUIRE(std::filesystem::exists(P.data + "/manifest.json"));
  // identical rerun is a no-op
  REQUIRE(run(P.gen_cmd()) == 0);
  // conflicting config without --force is a data error
  REQUIRE(run(P.gen_cmd(99)) == 2);
  // with --force it regenerates
  REQUIRE(run(kBin + " --force gen --out " + P.data +
              " --routes 2 --chapters-per-route 2 --frames 24 --width 320 --height 180 --seed 3"
              " --train-frac 0.5 --val-frac 0.25 --test-frac 0.25") == 0);

  // ---- prep ----
  REQUIRE(run(kBin + " prep --data " + P.data + " --tier s3 --stride 1") == 0);
  REQUIRE(std::filesystem::exists(P.cache + "/manifest.json"));
  REQUIRE(std::filesystem::exists(P.cache + "/norm_stats.json"));
  REQUIRE(std::filesystem::exists(P.cache + "/prior_angle.json"));
  REQUIRE(run(kBin + " prep --data " + P.data + " --tier s3 --stride 1") == 0);  // no-op

  // ---- train ----
  std::string train_cmd = kBin + " train --data " + P.cache +
                          " --preset model1 --backbone toy_conv --scale 0.25 --epochs 2"
                          " --batch 16 --seed 7 --out " + P.run1;
  REQUIRE(run(train_cmd) == 0);
  for (const char* f : {"best_angle.ckpt", "best_speed.ckpt", "last.ckpt", "history.csv",
                        "train_config.json"})
    REQUIRE(std::filesystem::exists(P.run1 + "/" + f));
  df::CsvTable history = df::read_csv(P.run1 + "/history.csv");
  REQUIRE(history.rows.size() == 2);
  // rerun is a no-op (checkpoints untouched)
  auto mtime = std::filesystem::last_write_time(P.run1 + "/last.ckpt");
  REQUIRE(run(train_cmd) == 0);
  REQUIRE(std::filesystem::last_write_time(P.run1 + "/last.ckpt") == mtime);

  // ---- predict ----
  REQUIRE(run(kBin + " predict --checkpoint " + P.run1 + "/best_angle.ckpt --data " + P.cache +
              " --split validation --out " + P.preds) == 0);
  df::PredictionSeries series = df::load_series(P.preds);
  REQUIRE(series.size() == 20);  // 24 frames, model-1 history of 4
  for (const auto& pt : series) REQUIRE(std::isfinite(pt.angle_deg));

  // ---- ensemble ----
  std::string ens_out = P.dir.sub("ens.csv");
  REQUIRE(run(kBin + " ensemble --members " + P.preds + " " + P.preds + " --prior-angle " +
              P.cache + "/prior_angle.json --prior-speed " + P.cache + "/prior_speed.json --out " +
              ens_out) == 0);
  df::PredictionSeries ens = df::load_series(ens_out);
  REQUIRE(ens.size() == series.size());
  for (size_t i = 0; i < ens.size(); ++i) {
    REQUIRE(ens[i].angle_deg == series[i].angle_deg);  // identical members pass through
    REQUIRE(ens[i].speed_kmh == series[i].speed_kmh);
  }
  std::string mean_out = P.dir.sub("mean.csv");
  REQUIRE(run(kBin + " ensemble --members " + P.preds + " " + P.preds + " --mode mean --out " +
              mean_out) == 0);

  // ---- eval ----
  std::string report = P.dir.sub("report.json");
  REQUIRE(run(kBin + " eval --pred " + P.preds + " --data " + P.cache + " --out " + report +
              " --text " + P.dir.sub("report.txt")) == 0);
  nlohmann::json j;
  std::ifstream in(report);
  in >> j;
  REQUIRE(std::isfinite(j.at("overall").at("mse_angle").get<double>()));
  REQUIRE(j.at("overall").at("combined").get<double>() ==
          Catch::Approx(j.at("overall").at("mse_angle").get<double>() +
                        j.at("overall").at("mse_speed").get<double>())
              .margin(1e-9));
  REQUIRE(j.at("n_samples").get<int64_t>() == 20);

  // ---- path ----
  std::string paths_dir = P.dir.sub("paths");
  REQUIRE(run(kBin + " path --pred " + P.preds + " --out " + paths_dir) == 0);
  bool found_path = false;
  for (const auto& e : std::filesystem::directory_iterator(paths_dir)) {
    found_path = true;
    df::CsvTable t = df::read_csv(e.path().string());
    REQUIRE(t.header == std::vector<std::string>{"step", "x_m", "y_m", "heading_rad"});
    REQUIRE(t.rows.size() == 21);
  }
  REQUIRE(found_path);

  // ---- plot ----
  std::string plots = P.dir.sub("plots");
  REQUIRE(run(kBin + " plot --kind predictions --pred " + P.preds + " --data " + P.cache +
              " --out " + plots) == 0);
  bool found_svg = false;
  for (const auto& e : std::filesystem::directory_iterator(plots)) {
    found_svg = true;
    std::string content = testutil::read_file(e.path());
    REQUIRE(content.find("<svg") != std::string::npos);
    REQUIRE(content.find("prediction") != std::string::npos);
  }
  REQUIRE(found_svg);
  REQUIRE(run(kBin + " plot --kind angle-hist --data " + P.cache + " --split train --out " +
              P.dir.sub("hist.svg")) == 0);
  REQUIRE(run(kBin + " plot --kind trainloss --history " + P.run1 + "/history.csv --out " +
              P.dir.sub("loss.svg")) == 0);
  REQUIRE(run(kBin + " plot --kind path --pred " + P.preds + " --out " + P.dir.sub("path.svg")) ==
          0);
  for (const char* f : {"hist.svg", "loss.svg", "path.svg"})
    REQUIRE(testutil::read_file(P.dir.sub(f)).find("</svg>") != std::string::npos);
}

TEST_CASE("cli exit codes distinguish usage from data errors") {
  Pipeline& P = pipe();
  TempDir dir("cli_err");
  // unknown preset: usage error 1, message lists the presets
  std::string log = dir.sub("log.txt");
  std::string out = capture(kBin + " train --data " + P.cache + " --preset nope --out " +
                                dir.sub("run"), log);
  REQUIRE(run(kBin + " train --data " + P.cache + " --preset nope --out " + dir.sub("run")) == 1);
  REQUIRE(out.find("model2-sequence") != std::string::npos);

  // missing dataset: data error 2 naming the path
  std::string missing = dir.sub("missing");
  out = capture(kBin + " prep --data " + missing + " --tier s3 --stride 1", log);
  REQUIRE(run(kBin + " prep --data " + missing + " --tier s3 --stride 1") == 2);
  REQUIRE(out.find(missing) != std::string::npos);

  // bad flags: usage error 1
  REQUIRE(run(kBin + " train --bogus-flag") == 1);
  REQUIRE(run(kBin + " ensemble --members a.csv --out b.csv --mode prior") == 1);
  // unknown plot kind
  REQUIRE(run(kBin + " plot --kind sparkline --out x.svg") == 1);
  // eval with an unreadable prediction file: data error
  REQUIRE(run(kBin + " eval --pred " + dir.sub("nope.csv") + " --data " + P.cache) == 2);
}

TEST_CASE("cli reads options from a config file") {
  Pipeline& P = pipe();
  TempDir dir("cli_cfg");
  std::string cfg = dir.sub("run.cfg");
  {
    std::ofstream out(cfg);
    out << "[gen]\n"
        << "out=" << dir.sub("cfg_data") << "\n"
        << "routes=2\nchapters-per-route=2\nframes=24\nwidth=160\nheight=90\nseed=5\n"
        << "train-frac=0.5\nval-frac=0.25\ntest-frac=0.25\n";
  }
  (void)P;
  REQUIRE(run(kBin + " --config " + cfg + " gen") == 0);
  REQUIRE(std::filesystem::exists(dir.sub("cfg_data") + "/manifest.json"));
}
