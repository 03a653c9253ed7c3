#pragma once

#include <functional>
#include <string>

#include "sshd/model.hpp"

namespace sshd {

// Adam (default) or SGD with momentum over a parameter table.
template <typename T>
class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& tc) : tc_(tc) {}
  void step(ParamTable<T>& table);

 private:
  TrainConfig tc_;
  int64_t t_ = 0;
  std::vector<Tensor<T>> m_, v_;  // first/second moment (adam) or velocity (sgd)
  bool initialized_ = false;
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  bool evaluated = false;
  MetricsReport val;
};

struct TrainResult {
  std::vector<EpochStats> history;
  double best_f1 = -1.0;
  int best_epoch = -1;
  std::string best_path, last_path;
  bool aborted_nan = false;
};

// Target-level metrics of a model over a sample set at the model's lambda/tau.
template <typename T>
MetricsReport evaluate_samples(const Model<T>& model, const std::vector<Sample>& samples,
                               int batch_size, double radius = 5.0, bool inclusive = true);

// MSE training against Gaussian GT heatmaps. Writes last.ckpt per checkpoint
// cadence and best.ckpt on validation F1 improvement under out_dir. A
// non-finite loss aborts immediately, leaving the last written checkpoints.
template <typename T>
TrainResult train_model(Model<T>& model, const std::vector<Sample>& train_set,
                        const std::vector<Sample>& val_set, const TrainConfig& tc,
                        const std::string& out_dir, bool verbose = false);

void save_history_json(const std::string& path, const TrainResult& result);

}  // namespace sshd
