#include "sshd/ablate.hpp"

#include <cstdio>

#include <json.hpp>

namespace sshd {

std::vector<double> default_lambda_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 11; ++i) grid.push_back(0.05 * i);
  return grid;
}

std::vector<LambdaSweepRow> lambda_sweep(const std::vector<Heatmap>& heatmaps,
                                         const std::vector<std::vector<PointLabel>>& gts,
                                         const std::vector<double>& lambdas, double tau,
                                         double radius, bool inclusive) {
  if (heatmaps.size() != gts.size())
    throw UsageError("lambda_sweep: heatmap/label count mismatch");
  std::vector<LambdaSweepRow> rows;
  for (const double lambda : lambdas) {
    const AnmsConfig cfg{lambda, tau};
    MatchCounts total;
    for (size_t i = 0; i < heatmaps.size(); ++i)
      total += match_detections(anms(heatmaps[i], cfg), gts[i], radius, inclusive);
    rows.push_back({lambda, compute_prf(total)});
  }
  return rows;
}

namespace {

AblationRow run_variant(const std::string& name, const ModelConfig& cfg, const TrainConfig& tc,
                        const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                        const std::vector<Sample>& test_set, const std::string& work_dir,
                        bool verbose) {
  auto model = build_model<float>(cfg);
  TrainResult tr = train_model(*model, train_set, val_set, tc, work_dir + "/" + name, verbose);
  // evaluate the best checkpoint
  if (!tr.best_path.empty()) model->load_state_dict(checkpoint_load(tr.best_path));
  AblationRow row;
  row.name = name;
  row.test = evaluate_samples(*model, test_set, tc.batch_size);
  return row;
}

}  // namespace

AblationReport ablate_width(const ModelConfig& base, const TrainConfig& tc,
                            const std::vector<int>& widths, const std::vector<Sample>& train_set,
                            const std::vector<Sample>& val_set, const std::vector<Sample>& test_set,
                            const std::string& work_dir, bool verbose) {
  AblationReport report;
  report.suite = "width";
  for (const int w : widths) {
    ModelConfig cfg = base;
    cfg.width_mult = w;
    report.rows.push_back(run_variant("w" + std::to_string(w), cfg, tc, train_set, val_set,
                                      test_set, work_dir, verbose));
  }
  return report;
}

AblationReport ablate_topology(const ModelConfig& base, const TrainConfig& tc,
                               const std::vector<Sample>& train_set,
                               const std::vector<Sample>& val_set,
                               const std::vector<Sample>& test_set, const std::string& work_dir,
                               bool verbose) {
  AblationReport report;
  report.suite = "topology";
  struct Variant {
    const char* name;
    void (*apply)(ModelConfig&);
  };
  const Variant variants[] = {
      {"full", [](ModelConfig&) {}},
      {"hcem_parallel", [](ModelConfig& c) { c.hcem_mode = HcemMode::parallel; }},
      {"hcem_top_down", [](ModelConfig& c) { c.hcem_mode = HcemMode::top_down; }},
      {"hcem_bottom_up", [](ModelConfig& c) { c.hcem_mode = HcemMode::bottom_up; }},
      {"no_dcfm_b1", [](ModelConfig& c) { c.use_dcfm_b1 = false; }},
      {"no_dcfm_b2", [](ModelConfig& c) { c.use_dcfm_b2 = false; }},
      {"no_dcfm_both",
       [](ModelConfig& c) {
         c.use_dcfm_b1 = false;
         c.use_dcfm_b2 = false;
       }},
      {"no_ca", [](ModelConfig& c) { c.use_ca = false; }},
      {"no_odblock", [](ModelConfig& c) { c.use_odblock = false; }},
  };
  for (const Variant& v : variants) {
    ModelConfig cfg = base;
    v.apply(cfg);
    report.rows.push_back(
        run_variant(v.name, cfg, tc, train_set, val_set, test_set, work_dir, verbose));
  }
  return report;
}

std::string ablation_to_text(const AblationReport& report) {
  std::string out = "suite: " + report.suite + "\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %10s %10s %10s %6s %6s %6s\n", "variant", "precision",
                "recall", "f1", "tp", "fp", "fn");
  out += line;
  for (const AblationRow& r : report.rows) {
    std::snprintf(line, sizeof line, "%-16s %10.4f %10.4f %10.4f %6lld %6lld %6lld\n",
                  r.name.c_str(), r.test.precision, r.test.recall, r.test.f1,
                  static_cast<long long>(r.test.counts.tp), static_cast<long long>(r.test.counts.fp),
                  static_cast<long long>(r.test.counts.fn));
    out += line;
  }
  return out;
}

std::string ablation_to_json(const AblationReport& report) {
  nlohmann::json j;
  j["suite"] = report.suite;
  nlohmann::json rows = nlohmann::json::array();
  for (const AblationRow& r : report.rows) {
    nlohmann::json row;
    row["name"] = r.name;
    row["precision"] = r.test.precision;
    row["recall"] = r.test.recall;
    row["f1"] = r.test.f1;
    row["tp"] = r.test.counts.tp;
    row["fp"] = r.test.counts.fp;
    row["fn"] = r.test.counts.fn;
    rows.push_back(row);
  }
  j["rows"] = rows;
  return j.dump(2);
}

std::string lambda_sweep_to_text(const std::vector<LambdaSweepRow>& rows) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%8s %10s %10s %10s %6s %6s %6s\n", "lambda", "precision",
                "recall", "f1", "tp", "fp", "fn");
  out += line;
  for (const LambdaSweepRow& r : rows) {
    std::snprintf(line, sizeof line, "%8.2f %10.4f %10.4f %10.4f %6lld %6lld %6lld\n", r.lambda,
                  r.metrics.precision, r.metrics.recall, r.metrics.f1,
                  static_cast<long long>(r.metrics.counts.tp),
                  static_cast<long long>(r.metrics.counts.fp),
                  static_cast<long long>(r.metrics.counts.fn));
    out += line;
  }
  return out;
}

std::string lambda_sweep_to_json(const std::vector<LambdaSweepRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const LambdaSweepRow& r : rows) {
    nlohmann::json row;
    row["lambda"] = r.lambda;
    row["precision"] = r.metrics.precision;
    row["recall"] = r.metrics.recall;
    row["f1"] = r.metrics.f1;
    row["tp"] = r.metrics.counts.tp;
    row["fp"] = r.metrics.counts.fp;
    row["fn"] = r.metrics.counts.fn;
    arr.push_back(row);
  }
  return arr.dump(2);
}

}  // namespace sshd
