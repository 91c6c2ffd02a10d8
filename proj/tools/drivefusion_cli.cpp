// drivefusion: synthetic data generation, preprocessing, training, prediction,
// ensembling, evaluation and plotting for the driving model zoo.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "drivefusion/drivefusion.hpp"

namespace fs = std::filesystem;
using namespace df;

namespace {

struct TruthJoin {
  std::vector<double> pred_angle, truth_angle, pred_speed, truth_speed;
  std::vector<std::vector<std::string>> zones;
  std::vector<double> t_sec;
};

// Joins a prediction series against dataset ground truth on (chapter, frame).
TruthJoin join_truth(const PredictionSeries& series, const DatasetManifest& m) {
  TruthJoin out;
  std::map<std::string, std::map<int64_t, const LabelRow*>> index;
  std::map<std::string, std::vector<LabelRow>> labels;
  for (const auto& p : series) {
    if (!labels.count(p.chapter_id)) {
      const ChapterInfo* info = m.find(p.chapter_id);
      if (!info) throw DataError("eval: prediction references unknown chapter " + p.chapter_id);
      labels[p.chapter_id] = load_labels(m, *info);
      for (const auto& row : labels[p.chapter_id]) index[p.chapter_id][row.frame_index] = &row;
    }
    auto it = index[p.chapter_id].find(p.frame_index);
    if (it == index[p.chapter_id].end())
      throw DataError(strfmt("eval: prediction for %s frame %lld has no ground truth",
                             p.chapter_id.c_str(), static_cast<long long>(p.frame_index)));
    out.pred_angle.push_back(p.angle_deg);
    out.pred_speed.push_back(p.speed_kmh);
    out.truth_angle.push_back(it->second->angle_deg);
    out.truth_speed.push_back(it->second->speed_kmh);
    out.zones.push_back(it->second->zone_tags);
    out.t_sec.push_back(static_cast<double>(p.timestamp_ms) / 1000.0);
  }
  return out;
}

ResolutionTier resolve_tier(const std::string& name, const DatasetManifest& m) {
  if (name.empty() || name == "native") return ResolutionTier{"native", m.width, m.height};
  return tier_by_name(name);
}

void save_snapshot_checkpoint(const std::string& path, const CheckpointSet& set,
                              const CheckpointSnapshot& snap) {
  auto model = build_model<float>(set.spec, set.build_seed);
  restore_params(model->store, snap.values);
  save_checkpoint(path, *model, set.stats, snap.meta);
}

int cmd_gen(const GenConfig& cfg, const std::string& out_dir, bool force) {
  fs::path mf = fs::path(out_dir) / "manifest.json";
  if (fs::exists(mf) && !force) {
    DatasetManifest existing = load_manifest(out_dir, false);
    if (existing.gen_config == gen_config_to_json(cfg)) {
      std::cout << "gen: dataset at " << out_dir << " already matches config, nothing to do\n";
      return 0;
    }
    throw DataError("gen: " + out_dir + " holds a different dataset (use --force to regenerate)");
  }
  DatasetManifest m = generate_synthetic(cfg, out_dir, force);
  std::cout << strfmt("gen: wrote %zu chapters (%d frames each) under %s\n", m.chapters.size(),
                      cfg.frames_per_chapter, out_dir.c_str());
  return 0;
}

int cmd_prep(const std::string& data_root, const std::string& tier_name, int stride, bool force) {
  DatasetManifest src = load_manifest(data_root);
  ResolutionTier tier = tier_by_name(tier_name);
  std::string out_root = cache_root_for(data_root, tier, stride);
  fs::path mf = fs::path(out_root) / "manifest.json";
  if (fs::exists(mf) && !force) {
    DatasetManifest existing = load_manifest(out_root, false);
    if (existing.gen_config.value("cache_of", "") == data_root &&
        existing.gen_config.value("cache_tier", "") == tier.name &&
        existing.gen_config.value("cache_stride", -1) == stride) {
      std::cout << "prep: cache " << out_root << " is up to date\n";
      return 0;
    }
    throw DataError("prep: " + out_root + " holds a different cache (use --force)");
  }
  DatasetManifest out = build_cache(src, tier, stride, out_root);
  std::cout << strfmt("prep: wrote cache %s (%dx%d, stride %d)\n", out_root.c_str(), out.width,
                      out.height, stride);
  return 0;
}

struct TrainCli {
  std::string data_root;
  std::string preset = "model1";
  std::string backbone;  // optional family override
  double scale = 1.0;
  int epochs = -1;
  int batch = -1;
  double lr = -1;
  std::string tier = "native";
  int stride = 1;
  uint64_t seed = 0;
  bool no_augment = false;
  std::string out_dir;
};

int cmd_train(const TrainCli& cli, bool force) {
  fs::path out(cli.out_dir);
  const fs::path outputs[] = {out / "best_angle.ckpt", out / "best_speed.ckpt", out / "last.ckpt",
                              out / "history.csv"};
  bool all_exist = true;
  for (const auto& p : outputs) all_exist = all_exist && fs::exists(p);
  if (all_exist && !force) {
    std::cout << "train: run directory " << cli.out_dir << " already complete, nothing to do\n";
    return 0;
  }

  Preset preset = make_preset(cli.preset);
  ModelSpec spec = preset.model;
  TrainConfig cfg = preset.train;
  spec.scale = cli.scale;
  if (!cli.backbone.empty()) override_backbone_family(spec, family_from_name(cli.backbone));
  if (cli.epochs > 0) cfg.epochs = cli.epochs;
  if (cli.batch > 0) cfg.batch_size = cli.batch;
  if (cli.lr > 0) cfg.lr0 = cli.lr;
  cfg.seed = cli.seed;
  cfg.augment.seed = cli.seed;
  cfg.augment_enabled = !cli.no_augment;
  cfg.tier = cli.tier;
  cfg.temporal_stride = cli.stride;

  DatasetManifest m = load_manifest(cli.data_root);
  ResolutionTier tier = resolve_tier(cli.tier, m);
  std::cout << strfmt("train: preset %s (%s) on %s at %dx%d stride %d, %d epochs\n",
                      cli.preset.c_str(), variant_name(spec.variant), cli.data_root.c_str(),
                      tier.width, tier.height, cli.stride, cfg.epochs);
  PreparedData train_data = prepare_split(m, Split::train, tier, cli.stride);
  PreparedData val_data = prepare_split(m, Split::validation, tier, cli.stride);
  CheckpointSet set = train_model<float>(spec, train_data, val_data, cfg, &std::cout);

  fs::create_directories(out);
  save_snapshot_checkpoint((out / "best_angle.ckpt").string(), set, set.best_angle);
  save_snapshot_checkpoint((out / "best_speed.ckpt").string(), set, set.best_speed);
  save_snapshot_checkpoint((out / "last.ckpt").string(), set, set.last);
  write_history_csv((out / "history.csv").string(), set.history);
  nlohmann::json run = {{"preset", cli.preset},
                        {"spec", model_spec_to_json(spec)},
                        {"seed", cli.seed},
                        {"epochs", cfg.epochs},
                        {"batch_size", cfg.batch_size},
                        {"lr0", cfg.lr0},
                        {"schedule", schedule_name(cfg.schedule)},
                        {"tier", tier.name},
                        {"stride", cli.stride},
                        {"best_angle_mse", set.best_angle_mse},
                        {"best_speed_mse", set.best_speed_mse}};
  write_text_file((out / "train_config.json").string(), run.dump(2) + "\n");
  std::cout << strfmt("train: best val angle mse %.4f, best val speed mse %.4f\n",
                      set.best_angle_mse, set.best_speed_mse);
  return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& data_root,
                const std::string& split_name_s, const std::string& tier_name, int stride,
                const std::string& out_csv, int batch, bool force) {
  if (fs::exists(out_csv) && !force) {
    std::cout << "predict: " << out_csv << " already exists, nothing to do\n";
    return 0;
  }
  LoadedCheckpoint<float> ckpt = load_checkpoint<float>(ckpt_path);
  DatasetManifest m = load_manifest(data_root);
  ResolutionTier tier = resolve_tier(tier_name, m);
  Split split = split_from_name(split_name_s);
  PreparedData data = prepare_split(m, split, tier, stride);
  PredictionSeries series;
  for (size_t c = 0; c < data.chapters.size(); ++c) {
    PredictionSeries part = predict_chapter(*ckpt.model, ckpt.stats, data, static_cast<int>(c), batch);
    series.insert(series.end(), part.begin(), part.end());
  }
  if (!out_csv.empty()) {
    fs::path parent = fs::path(out_csv).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
  }
  save_series(out_csv, series);
  std::cout << strfmt("predict: wrote %zu predictions to %s\n", series.size(), out_csv.c_str());
  return 0;
}

int cmd_ensemble(const std::vector<std::string>& members, const std::string& mode,
                 const std::string& prior_angle_path, const std::string& prior_speed_path,
                 const std::string& out_csv, bool force) {
  if (fs::exists(out_csv) && !force) {
    std::cout << "ensemble: " << out_csv << " already exists, nothing to do\n";
    return 0;
  }
  if (members.empty()) throw UsageError("ensemble: need at least one --members file");
  if (mode != "mean" && mode != "prior")
    throw UsageError("ensemble: unknown mode '" + mode + "' (prior or mean)");
  if (mode == "prior" && (prior_angle_path.empty() || prior_speed_path.empty()))
    throw UsageError("ensemble: prior mode needs --prior-angle and --prior-speed");
  std::vector<PredictionSeries> series;
  for (const auto& path : members) series.push_back(load_series(path));
  PredictionSeries out;
  if (mode == "mean") {
    out = plain_average(series);
  } else {
    BinPrior pa = load_prior(prior_angle_path);
    BinPrior ps = load_prior(prior_speed_path);
    out = ensemble_series(series, pa, ps);
  }
  save_series(out_csv, out);
  std::cout << strfmt("ensemble: combined %zu members into %s (%s)\n", members.size(),
                      out_csv.c_str(), mode.c_str());
  return 0;
}

int cmd_eval(const std::string& pred_csv, const std::string& data_root, const std::string& out_json,
             const std::string& out_text, bool force) {
  if (!out_json.empty() && fs::exists(out_json) && !force) {
    std::cout << "eval: " << out_json << " already exists, nothing to do\n";
    return 0;
  }
  PredictionSeries series = load_series(pred_csv);
  if (series.empty()) throw DataError("eval: empty prediction series " + pred_csv);
  DatasetManifest m = load_manifest(data_root);
  TruthJoin j = join_truth(series, m);
  EvalReport rep = per_zone_report(j.pred_angle, j.truth_angle, j.pred_speed, j.truth_speed, j.zones);
  if (!out_json.empty()) save_report(out_json, rep);
  std::string table = report_table(rep);
  if (!out_text.empty()) write_text_file(out_text, table);
  std::cout << table;
  return 0;
}

int cmd_path(const std::string& pred_csv, const std::string& out_dir, double dt, double gain,
             bool force) {
  PredictionSeries series = load_series(pred_csv);
  if (series.empty()) throw DataError("path: empty prediction series " + pred_csv);
  fs::create_directories(out_dir);
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_chapter;
  std::vector<std::string> order;
  for (const auto& p : series) {
    if (!by_chapter.count(p.chapter_id)) order.push_back(p.chapter_id);
    by_chapter[p.chapter_id].first.push_back(p.angle_deg);
    by_chapter[p.chapter_id].second.push_back(p.speed_kmh);
  }
  KinematicsConfig cfg;
  cfg.dt = dt;
  cfg.gain_k = gain;
  for (const auto& id : order) {
    fs::path out = fs::path(out_dir) / ("path_" + id + ".csv");
    if (fs::exists(out) && !force) continue;
    Path p = integrate_path(by_chapter[id].first, by_chapter[id].second, cfg);
    save_path_csv(out.string(), p);
  }
  std::cout << strfmt("path: wrote %zu trajectories under %s\n", order.size(), out_dir.c_str());
  return 0;
}

int cmd_plot(const std::string& kind, const std::string& pred_csv, const std::string& data_root,
             const std::string& path_csv, const std::string& history_csv,
             const std::string& split_name_s, const std::string& out_path, double dt, double gain) {
  if (kind == "predictions") {
    PredictionSeries series = load_series(pred_csv);
    DatasetManifest m = load_manifest(data_root);
    fs::create_directories(out_path);
    std::map<std::string, PredictionSeries> by_chapter;
    for (const auto& p : series) by_chapter[p.chapter_id].push_back(p);
    for (const auto& [id, part] : by_chapter) {
      TruthJoin j = join_truth(part, m);
      std::string svg_text =
          plot_predictions(j.t_sec, j.truth_angle, j.pred_angle, j.truth_speed, j.pred_speed, id);
      write_text_file((fs::path(out_path) / ("pred_" + id + ".svg")).string(), svg_text);
    }
    std::cout << strfmt("plot: wrote %zu prediction overlays under %s\n", by_chapter.size(),
                        out_path.c_str());
    return 0;
  }
  if (kind == "path") {
    std::string source = path_csv;
    Path p;
    if (!source.empty()) {
      CsvTable t = read_csv(source);
      int cx = t.col("x_m"), cy = t.col("y_m"), chd = t.col("heading_rad");
      for (const auto& r : t.rows) {
        p.x.push_back(parse_double(r[static_cast<size_t>(cx)]));
        p.y.push_back(parse_double(r[static_cast<size_t>(cy)]));
        p.heading.push_back(parse_double(r[static_cast<size_t>(chd)]));
      }
    } else if (!pred_csv.empty()) {
      PredictionSeries series = load_series(pred_csv);
      std::vector<double> angles, speeds;
      for (const auto& pt : series) {
        angles.push_back(pt.angle_deg);
        speeds.push_back(pt.speed_kmh);
      }
      KinematicsConfig cfg;
      cfg.dt = dt;
      cfg.gain_k = gain;
      p = integrate_path(angles, speeds, cfg);
    } else {
      throw UsageError("plot path: need --path or --pred");
    }
    write_text_file(out_path, plot_path(p, "reconstructed path"));
    std::cout << "plot: wrote " << out_path << "\n";
    return 0;
  }
  if (kind == "angle-hist") {
    DatasetManifest m = load_manifest(data_root);
    Split split = split_from_name(split_name_s);
    std::vector<double> angles;
    for (const auto* info : m.split_chapters_of(split))
      for (const auto& row : load_labels(m, *info)) angles.push_back(row.angle_deg);
    if (angles.empty()) throw DataError("plot angle-hist: split has no frames");
    std::vector<int64_t> counts = angle_histogram(angles, 5.0);
    write_text_file(out_path, plot_angle_histogram(counts, 5.0, "absolute steering angle distribution"));
    std::cout << "plot: wrote " << out_path << "\n";
    return 0;
  }
  if (kind == "trainloss") {
    CsvTable t = read_csv(history_csv);
    int ce = t.col("epoch"), cl = t.col("train_loss"), ca = t.col("val_angle_mse"),
        cs = t.col("val_speed_mse");
    svg::Series train{"train loss (normalized)", "#2c7f3f", {}, {}};
    svg::Series va{"val angle mse", "#1f4fbf", {}, {}};
    svg::Series vs{"val speed mse", "#c0392b", {}, {}};
    for (const auto& r : t.rows) {
      double e = parse_double(r[static_cast<size_t>(ce)]);
      train.x.push_back(e);
      train.y.push_back(parse_double(r[static_cast<size_t>(cl)]));
      va.x.push_back(e);
      va.y.push_back(parse_double(r[static_cast<size_t>(ca)]));
      vs.x.push_back(e);
      vs.y.push_back(parse_double(r[static_cast<size_t>(cs)]));
    }
    write_text_file(out_path, svg::line_chart({train, va, vs}, "training curves", "epoch", "loss / mse"));
    std::cout << "plot: wrote " << out_path << "\n";
    return 0;
  }
  throw UsageError("plot: unknown --kind '" + kind + "' (predictions, path, angle-hist, trainloss)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"drivefusion: desk-scale driving model pipeline"};
  app.require_subcommand(1);
  app.set_config("--config");

  bool force = false;
  app.add_flag("--force", force, "redo completed stages");

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  GenConfig gcfg;
  std::string gen_out;
  gen->add_option("--out", gen_out, "dataset root directory")
      ->envname("DRIVEFUSION_DATA")
      ->required();
  gen->add_option("--routes", gcfg.n_routes, "number of routes");
  gen->add_option("--chapters-per-route", gcfg.chapters_per_route, "chapters per route");
  gen->add_option("--frames", gcfg.frames_per_chapter, "frames per chapter");
  gen->add_option("--width", gcfg.width, "frame width (16:9)");
  gen->add_option("--height", gcfg.height, "frame height (16:9)");
  gen->add_option("--seed", gcfg.seed, "generation seed");
  gen->add_option("--train-frac", gcfg.train_frac, "train split fraction");
  gen->add_option("--val-frac", gcfg.val_frac, "validation split fraction");
  gen->add_option("--test-frac", gcfg.test_frac, "test split fraction");
  bool no_map = false;
  gen->add_flag("--no-map", no_map, "skip map imagery");

  // prep
  auto* prep = app.add_subcommand("prep", "build a down-sampled cache");
  std::string prep_data, prep_tier = "s3";
  int prep_stride = 1;
  prep->add_option("--data", prep_data, "dataset root")->envname("DRIVEFUSION_DATA")->required();
  prep->add_option("--tier", prep_tier, "resolution tier: full, s1, s2, s3");
  prep->add_option("--stride", prep_stride, "temporal stride");

  // train
  auto* train = app.add_subcommand("train", "train a preset");
  TrainCli tcli;
  train->add_option("--data", tcli.data_root, "dataset or cache root")
      ->envname("DRIVEFUSION_DATA")
      ->required();
  train->add_option("--preset", tcli.preset, "preset name")->required();
  train->add_option("--backbone", tcli.backbone, "override backbone family (e.g. toy_conv)");
  train->add_option("--scale", tcli.scale, "width scale multiplier");
  train->add_option("--epochs", tcli.epochs, "override epochs");
  train->add_option("--batch", tcli.batch, "override batch size");
  train->add_option("--lr", tcli.lr, "override initial learning rate");
  train->add_option("--tier", tcli.tier, "resolution tier or 'native'");
  train->add_option("--stride", tcli.stride, "temporal stride applied to the given data");
  train->add_option("--seed", tcli.seed, "training seed");
  train->add_flag("--no-augment", tcli.no_augment, "disable train-time augmentation");
  train->add_option("--out", tcli.out_dir, "run directory")->required();

  // predict
  auto* predict = app.add_subcommand("predict", "predict a split with a checkpoint");
  std::string p_ckpt, p_data, p_split = "validation", p_tier = "native", p_out;
  int p_stride = 1, p_batch = 32;
  predict->add_option("--checkpoint", p_ckpt, "checkpoint file")->required();
  predict->add_option("--data", p_data, "dataset or cache root")
      ->envname("DRIVEFUSION_DATA")
      ->required();
  predict->add_option("--split", p_split, "train, validation, or test");
  predict->add_option("--tier", p_tier, "resolution tier or 'native'");
  predict->add_option("--stride", p_stride, "temporal stride");
  predict->add_option("--batch", p_batch, "prediction batch size");
  predict->add_option("--out", p_out, "output csv")->required();

  // ensemble
  auto* ens = app.add_subcommand("ensemble", "combine member prediction series");
  std::vector<std::string> e_members;
  std::string e_mode = "prior", e_pa, e_ps, e_out;
  ens->add_option("--members", e_members, "member prediction csv files")->required();
  ens->add_option("--mode", e_mode, "prior or mean");
  ens->add_option("--prior-angle", e_pa, "angle prior json");
  ens->add_option("--prior-speed", e_ps, "speed prior json");
  ens->add_option("--out", e_out, "output csv")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "overall and per-zone MSE report");
  std::string v_pred, v_data, v_json, v_text;
  eval->add_option("--pred", v_pred, "prediction csv")->required();
  eval->add_option("--data", v_data, "dataset or cache root")
      ->envname("DRIVEFUSION_DATA")
      ->required();
  eval->add_option("--out", v_json, "report json path");
  eval->add_option("--text", v_text, "report text table path");

  // path
  auto* path_cmd = app.add_subcommand("path", "integrate predictions into 2-D paths");
  std::string t_pred, t_out;
  double t_dt = 0.1, t_gain = 1.0;
  path_cmd->add_option("--pred", t_pred, "prediction csv")->required();
  path_cmd->add_option("--out", t_out, "output directory")->required();
  path_cmd->add_option("--dt", t_dt, "seconds per step");
  path_cmd->add_option("--gain", t_gain, "heading deg per steering deg per second");

  // plot
  auto* plot = app.add_subcommand("plot", "emit svg figures");
  std::string pl_kind, pl_pred, pl_data, pl_path, pl_history, pl_split = "train", pl_out;
  double pl_dt = 0.1, pl_gain = 1.0;
  plot->add_option("--kind", pl_kind, "predictions, path, angle-hist, trainloss")->required();
  plot->add_option("--pred", pl_pred, "prediction csv");
  plot->add_option("--data", pl_data, "dataset root")->envname("DRIVEFUSION_DATA");
  plot->add_option("--path", pl_path, "path csv (for --kind path)");
  plot->add_option("--history", pl_history, "history csv (for --kind trainloss)");
  plot->add_option("--split", pl_split, "split for angle-hist");
  plot->add_option("--out", pl_out, "output file or directory")->required();
  plot->add_option("--dt", pl_dt, "seconds per step");
  plot->add_option("--gain", pl_gain, "steering gain");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp")
      return app.exit(e);
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  }

  try {
    gcfg.with_map = !no_map;
    if (gen->parsed()) return cmd_gen(gcfg, gen_out, force);
    if (prep->parsed()) return cmd_prep(prep_data, prep_tier, prep_stride, force);
    if (train->parsed()) return cmd_train(tcli, force);
    if (predict->parsed())
      return cmd_predict(p_ckpt, p_data, p_split, p_tier, p_stride, p_out, p_batch, force);
    if (ens->parsed()) return cmd_ensemble(e_members, e_mode, e_pa, e_ps, e_out, force);
    if (eval->parsed()) return cmd_eval(v_pred, v_data, v_json, v_text, force);
    if (path_cmd->parsed()) return cmd_path(t_pred, t_out, t_dt, t_gain, force);
    if (plot->parsed())
      return cmd_plot(pl_kind, pl_pred, pl_data, pl_path, pl_history, pl_split, pl_out, pl_dt, pl_gain);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
