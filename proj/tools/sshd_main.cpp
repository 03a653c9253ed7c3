// sshd: single-point-supervised infrared small-target detector CLI.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "sshd/ablate.hpp"
#include "sshd/gradcheck.hpp"
#include "sshd/kernels.hpp"
#include "sshd/model.hpp"
#include "sshd/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sshd;

namespace {

std::vector<std::string> list_files(const std::string& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw UsageError(dir + " is not a directory");
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

// dataset directory layout: images/<id>.pgm, labels/<id>.csv, split.json
std::vector<Sample> load_split_samples(const std::string& data_dir,
                                       const std::vector<std::string>& ids) {
  std::vector<Sample> out;
  out.reserve(ids.size());
  for (const std::string& id : ids)
    out.push_back(load_sample(data_dir + "/images/" + id + ".pgm",
                              data_dir + "/labels/" + id + ".csv"));
  return out;
}

struct Dataset {
  std::vector<Sample> train, val, test;
};

Dataset load_dataset(const std::string& data_dir) {
  const SplitManifest m = load_split(data_dir + "/split.json");
  return {load_split_samples(data_dir, m.train), load_split_samples(data_dir, m.val),
          load_split_samples(data_dir, m.test)};
}

int cmd_train(const std::string& config_path, const std::string& train_config_path,
              const std::string& data_dir, const std::string& out_dir) {
  const ModelConfig cfg = model_config_from_json_file(config_path);
  const TrainConfig tc = train_config_path.empty() ? TrainConfig{}
                                                   : train_config_from_json_file(train_config_path);
  const Dataset data = load_dataset(data_dir);
  std::cout << "train: " << data.train.size() << " / val: " << data.val.size()
            << " / test: " << data.test.size() << " samples, isa "
            << kern::isa_name(kern::active_isa()) << "\n";
  auto model = build_model<float>(cfg);
  fs::create_directories(out_dir);
  {
    std::ofstream out(out_dir + "/model_config.json");
    out << model_config_to_json(cfg) << "\n";
  }
  const TrainResult result = train_model(*model, data.train, data.val, tc, out_dir, true);
  save_history_json(out_dir + "/history.json", result);
  if (result.aborted_nan) {
    std::cerr << "training aborted on non-finite loss\n";
    return 1;
  }
  std::cout << "best val F1 " << result.best_f1 << " at epoch " << result.best_epoch << "\n"
            << "checkpoints: " << result.best_path << ", " << result.last_path << "\n";
  if (!data.test.empty()) {
    model->load_state_dict(checkpoint_load(result.best_path));
    const MetricsReport test = evaluate_samples(*model, data.test, tc.batch_size);
    std::cout << "test P " << test.precision << " R " << test.recall << " F1 " << test.f1 << "\n";
  }
  return 0;
}

int cmd_infer(const std::string& config_path, const std::string& ckpt_path,
              const std::string& images_dir, const std::string& out_path,
              const std::string& dump_dir) {
  const ModelConfig cfg = model_config_from_json_file(config_path);
  auto model = build_model<float>(cfg);
  model->load_state_dict(checkpoint_load(ckpt_path));
  if (!dump_dir.empty()) fs::create_directories(dump_dir);
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + out_path + " for writing");
  for (const std::string& path : list_files(images_dir, ".pgm")) {
    const std::string id = fs::path(path).stem().string();
    const GrayImage img = load_pgm(path);
    const std::vector<Detection> dets = infer_detections(*model, img);
    for (const Detection& d : dets) {
      json row;
      row["id"] = id;
      row["x"] = d.x;
      row["y"] = d.y;
      row["score"] = d.score;
      out << row.dump() << "\n";
    }
    if (!dump_dir.empty()) {
      // dump at padded resolution for inspection
      int64_t div = 1;
      for (int j = 1; j < cfg.branches; ++j) div *= 2;
      const int64_t H = (img.h + div - 1) / div * div, W = (img.w + div - 1) / div * div;
      Tensor<float> batch({1, 1, H, W});
      for (int64_t y = 0; y < img.h; ++y)
        for (int64_t x = 0; x < img.w; ++x) batch[y * W + x] = img.at(y, x);
      const Heatmap hm = model->infer_heatmaps(batch)[0];
      dump_heatmap(hm, dump_dir + "/" + id + ".pgm", HeatmapDumpKind::pgm);
      dump_heatmap(hm, dump_dir + "/" + id + ".raw", HeatmapDumpKind::raw);
    }
  }
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_dir, double radius,
             bool inclusive) {
  std::ifstream in(pred_path);
  if (!in) throw FormatError("cannot open " + pred_path);
  std::map<std::string, std::vector<Detection>> preds;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const std::exception& e) {
      throw FormatError(pred_path + ": line " + std::to_string(lineno) + ": " + e.what());
    }
    for (const char* key : {"id", "x", "y", "score"})
      if (!row.contains(key))
        throw FormatError(pred_path + ": line " + std::to_string(lineno) + ": missing \"" + key +
                          "\"");
    preds[row["id"].get<std::string>()].push_back(
        {row["x"].get<int>(), row["y"].get<int>(), row["score"].get<float>()});
  }
  MatchCounts total;
  std::map<std::string, std::vector<PointLabel>> gts;
  for (const std::string& path : list_files(gt_dir, ".csv"))
    gts[fs::path(path).stem().string()] = load_labels_csv(path);
  for (const auto& [id, labels] : gts) {
    const auto it = preds.find(id);
    total += match_detections(it == preds.end() ? std::vector<Detection>{} : it->second, labels,
                              radius, inclusive);
  }
  for (const auto& [id, dets] : preds)
    if (!gts.count(id)) total += match_detections(dets, {}, radius, inclusive);
  const MetricsReport r = compute_prf(total);
  json j;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["tp"] = r.counts.tp;
  j["fp"] = r.counts.fp;
  j["fn"] = r.counts.fn;
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_annotate(const std::string& masks_dir, const std::string& images_dir,
                 const std::string& out_dir) {
  fs::create_directories(out_dir);
  for (const std::string& path : list_files(masks_dir, ".pgm")) {
    const std::string id = fs::path(path).stem().string();
    const BinaryMask mask = load_mask_pgm(path);
    std::vector<PointLabel> points;
    const std::string image_path = images_dir + "/" + id + ".pgm";
    if (!images_dir.empty() && fs::exists(image_path)) {
      const GrayImage img = load_pgm(image_path);
      if (img.h != mask.h || img.w != mask.w)
        throw FormatError(image_path + ": image extents do not match mask");
      points = mask_to_points(mask, &img.v);
    } else {
      points = mask_to_points(mask);
    }
    save_labels_csv(out_dir + "/" + id + ".csv", points);
  }
  return 0;
}

int cmd_synth(const std::string& config_path, const std::string& out_dir, int64_t count) {
  const SynthConfig cfg = synth_config_from_json_file(config_path);
  if (count < 1) throw UsageError("synth: count must be >= 1");
  fs::create_directories(out_dir + "/images");
  fs::create_directories(out_dir + "/labels");
  std::vector<std::string> ids;
  for (int64_t i = 0; i < count; ++i) {
    const Sample s = synth_scene(cfg, i);
    save_pgm(out_dir + "/images/" + s.id + ".pgm", s.image, 16);
    save_labels_csv(out_dir + "/labels/" + s.id + ".csv", s.labels);
    ids.push_back(s.id);
  }
  save_split(out_dir + "/split.json", make_split(ids, cfg.seed));
  std::cout << "wrote " << count << " samples under " << out_dir << "\n";
  return 0;
}

int cmd_ablate(const std::string& suite, const std::string& config_path,
               const std::string& train_config_path, const std::string& ckpt_path,
               const std::string& data_dir, const std::string& out_dir,
               const std::string& widths_csv, const std::string& split_name) {
  const ModelConfig cfg = model_config_from_json_file(config_path);
  fs::create_directories(out_dir);
  if (suite == "lambda") {
    if (ckpt_path.empty()) throw UsageError("ablate lambda needs --ckpt");
    auto model = build_model<float>(cfg);
    model->load_state_dict(checkpoint_load(ckpt_path));
    const Dataset data = load_dataset(data_dir);
    const std::vector<Sample>& samples = split_name == "test" ? data.test : data.val;
    std::vector<Heatmap> hms;
    std::vector<std::vector<PointLabel>> gts;
    for (const Sample& s : samples) {
      Tensor<float> batch({1, 1, s.image.h, s.image.w});
      std::copy(s.image.v.begin(), s.image.v.end(), batch.data());
      hms.push_back(model->infer_heatmaps(batch)[0]);
      gts.push_back(s.labels);
    }
    const auto rows = lambda_sweep(hms, gts, default_lambda_grid(), cfg.tau);
    std::cout << lambda_sweep_to_text(rows);
    std::ofstream(out_dir + "/lambda_sweep.json") << lambda_sweep_to_json(rows) << "\n";
    std::ofstream(out_dir + "/lambda_sweep.txt") << lambda_sweep_to_text(rows);
    return 0;
  }
  const TrainConfig tc = train_config_path.empty() ? TrainConfig{}
                                                   : train_config_from_json_file(train_config_path);
  const Dataset data = load_dataset(data_dir);
  AblationReport report;
  if (suite == "width") {
    std::vector<int> widths;
    std::string tok;
    std::stringstream ss(widths_csv);
    while (std::getline(ss, tok, ',')) widths.push_back(std::stoi(tok));
    if (widths.empty()) throw UsageError("ablate width needs --widths");
    report = ablate_width(cfg, tc, widths, data.train, data.val, data.test, out_dir, true);
  } else if (suite == "topology") {
    report = ablate_topology(cfg, tc, data.train, data.val, data.test, out_dir, true);
  } else {
    throw UsageError("unknown ablation suite \"" + suite + "\" (lambda|width|topology)");
  }
  std::cout << ablation_to_text(report);
  std::ofstream(out_dir + "/" + suite + ".json") << ablation_to_json(report) << "\n";
  std::ofstream(out_dir + "/" + suite + ".txt") << ablation_to_text(report);
  return 0;
}

int cmd_gradcheck(const std::string& ops, int seeds) {
  std::vector<std::string> names;
  if (ops == "all") {
    names = gradcheck_names();
  } else {
    if (!is_gradcheck_name(ops)) throw UsageError("unknown gradcheck op \"" + ops + "\"");
    names.push_back(ops);
  }
  bool ok = true;
  for (const std::string& name : names) {
    const GradcheckResult r = run_gradcheck(name, seeds);
    const bool pass = r.max_rel_err < 1e-4;
    ok = ok && pass;
    std::printf("%-16s max_rel_err %.3e over %lld elements x %d seeds  %s\n", name.c_str(),
                r.max_rel_err, static_cast<long long>(r.checked_elements), r.seeds,
                pass ? "PASS" : "FAIL");
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"single-point-supervised IR small-target detector"};
  app.require_subcommand(1);

  std::string config, train_config, data_dir, out_path, ckpt, images_dir, dump_dir;
  std::string pred_path, gt_dir, masks_dir, suite, widths = "4,8,12", split_name = "val";
  std::string ops = "all";
  double radius = 5.0;
  bool inclusive = true;
  int64_t count = 64;
  int seeds = 20;

  auto* t = app.add_subcommand("train", "train a model on a dataset directory");
  t->add_option("--config", config, "model config JSON")->required();
  t->add_option("--train-config", train_config, "train config JSON (defaults when omitted)");
  t->add_option("--data", data_dir, "dataset directory")->required();
  t->add_option("--out", out_path, "output directory")->required();

  auto* i = app.add_subcommand("infer", "decode detections for a directory of PGM images");
  i->add_option("--config", config, "model config JSON")->required();
  i->add_option("--ckpt", ckpt, "checkpoint file")->required();
  i->add_option("--images", images_dir, "image directory")->required();
  i->add_option("--out", out_path, "detections JSONL path")->required();
  i->add_option("--dump-heatmaps", dump_dir, "directory for PGM+raw heatmap dumps");

  auto* e = app.add_subcommand("eval", "score detections against ground-truth CSVs");
  e->add_option("--pred", pred_path, "detections JSONL")->required();
  e->add_option("--gt", gt_dir, "directory of <id>.csv ground truth")->required();
  e->add_option("--radius", radius, "match radius in pixels (default 5)");
  e->add_flag("--inclusive,!--exclusive", inclusive,
              "boundary-inclusive matching (default inclusive)");

  auto* a = app.add_subcommand("annotate", "convert masks to single-point CSV annotations");
  a->add_option("--masks", masks_dir, "mask PGM directory")->required();
  a->add_option("--images", images_dir, "image PGM directory (intensity weighting)")->required();
  a->add_option("--out", out_path, "output CSV directory")->required();

  auto* s = app.add_subcommand("synth", "generate a synthetic dataset");
  s->add_option("--config", config, "synth config JSON")->required();
  s->add_option("--out", out_path, "output dataset directory")->required();
  s->add_option("--count", count, "number of samples")->required();

  auto* b = app.add_subcommand("ablate", "run an ablation suite");
  b->add_option("--suite", suite, "lambda | width | topology")->required();
  b->add_option("--config", config, "model config JSON")->required();
  b->add_option("--train-config", train_config, "train config JSON");
  b->add_option("--ckpt", ckpt, "checkpoint (lambda suite)");
  b->add_option("--data", data_dir, "dataset directory")->required();
  b->add_option("--out", out_path, "output directory")->required();
  b->add_option("--widths", widths, "comma-separated width_mult list (width suite)");
  b->add_option("--split", split_name, "val | test split for the lambda suite");

  auto* g = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  g->add_option("--ops", ops, "all or one scenario name");
  g->add_option("--seeds", seeds, "random seeds per scenario (default 20)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (t->parsed()) return cmd_train(config, train_config, data_dir, out_path);
    if (i->parsed()) return cmd_infer(config, ckpt, images_dir, out_path, dump_dir);
    if (e->parsed()) return cmd_eval(pred_path, gt_dir, radius, inclusive);
    if (a->parsed()) return cmd_annotate(masks_dir, images_dir, out_path);
    if (s->parsed()) return cmd_synth(config, out_path, count);
    if (b->parsed())
      return cmd_ablate(suite, config, train_config, ckpt, data_dir, out_path, widths, split_name);
    if (g->parsed()) return cmd_gradcheck(ops, seeds);
  } catch (const ConfigError& ex) {
    std::cerr << "configuration error: " << ex.what() << "\n";
    return 2;
  } catch (const FormatError& ex) {
    std::cerr << "format error: " << ex.what() << "\n";
    return 3;
  } catch (const LabelError& ex) {
    std::cerr << "label error: " << ex.what() << "\n";
    return 4;
  } catch (const CheckpointError& ex) {
    std::cerr << "checkpoint error: " << ex.what() << "\n";
    return 5;
  } catch (const UsageError& ex) {
    std::cerr << "usage error: " << ex.what() << "\n";
    return 6;
  } catch (const Error& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 7;
  }
  return 0;
}
