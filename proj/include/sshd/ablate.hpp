#pragma once

#include "sshd/train.hpp"

namespace sshd {

struct LambdaSweepRow {
  double lambda = 0.0;
  MetricsReport metrics;
};

// Decode-only sweep: ANMS is post-hoc, so the retention grid is evaluated on
// a fixed heatmap set without retraining.
std::vector<LambdaSweepRow> lambda_sweep(const std::vector<Heatmap>& heatmaps,
                                         const std::vector<std::vector<PointLabel>>& gts,
                                         const std::vector<double>& lambdas, double tau,
                                         double radius = 5.0, bool inclusive = true);

std::vector<double> default_lambda_grid();  // {0.05, 0.10, ..., 0.55}

struct AblationRow {
  std::string name;
  MetricsReport test;
};

struct AblationReport {
  std::string suite;
  std::vector<AblationRow> rows;
};

// Trains one model per width and evaluates on the test split.
AblationReport ablate_width(const ModelConfig& base, const TrainConfig& tc,
                            const std::vector<int>& widths, const std::vector<Sample>& train_set,
                            const std::vector<Sample>& val_set, const std::vector<Sample>& test_set,
                            const std::string& work_dir, bool verbose);

// HCEM wiring variants plus the DCFM removal variants.
AblationReport ablate_topology(const ModelConfig& base, const TrainConfig& tc,
                               const std::vector<Sample>& train_set,
                               const std::vector<Sample>& val_set,
                               const std::vector<Sample>& test_set, const std::string& work_dir,
                               bool verbose);

std::string ablation_to_text(const AblationReport& report);
std::string ablation_to_json(const AblationReport& report);
std::string lambda_sweep_to_text(const std::vector<LambdaSweepRow>& rows);
std::string lambda_sweep_to_json(const std::vector<LambdaSweepRow>& rows);

}  // namespace sshd
