#include "sshd/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include <json.hpp>

namespace sshd {

template <typename T>
void Optimizer<T>::step(ParamTable<T>& table) {
  if (!initialized_) {
    for (const auto& p : table.items())
      if (p->trainable) {
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
      }
    initialized_ = true;
  }
  ++t_;
  const bool adam = tc_.optimizer == "adam";
  const T lr = static_cast<T>(tc_.lr);
  size_t slot = 0;
  if (adam) {
    const T b1 = static_cast<T>(tc_.beta1), b2 = static_cast<T>(tc_.beta2);
    const T eps = static_cast<T>(tc_.adam_eps);
    const T bc1 = T(1) - static_cast<T>(std::pow(tc_.beta1, static_cast<double>(t_)));
    const T bc2 = T(1) - static_cast<T>(std::pow(tc_.beta2, static_cast<double>(t_)));
    for (const auto& p : table.items()) {
      if (!p->trainable) continue;
      Tensor<T>& m = m_[slot];
      Tensor<T>& v = v_[slot];
      ++slot;
      for (int64_t i = 0; i < p->value.numel(); ++i) {
        const T g = p->grad[i];
        m[i] = b1 * m[i] + (T(1) - b1) * g;
        v[i] = b2 * v[i] + (T(1) - b2) * g * g;
        const T mhat = m[i] / bc1;
        const T vhat = v[i] / bc2;
        p->value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  } else {
    const T mom = static_cast<T>(tc_.momentum);
    for (const auto& p : table.items()) {
      if (!p->trainable) continue;
      Tensor<T>& vel = m_[slot];
      ++slot;
      for (int64_t i = 0; i < p->value.numel(); ++i) {
        vel[i] = mom * vel[i] + p->grad[i];
        p->value[i] -= lr * vel[i];
      }
    }
  }
}

namespace {

template <typename T>
Tensor<T> batch_images(const std::vector<Sample>& set, const std::vector<size_t>& idx,
                       size_t lo, size_t hi, int64_t h, int64_t w) {
  Tensor<T> out({static_cast<int64_t>(hi - lo), 1, h, w});
  for (size_t b = lo; b < hi; ++b) {
    const GrayImage& img = set[idx[b]].image;
    if (img.h != h || img.w != w)
      throw ConfigError("sample " + set[idx[b]].id + " is " + std::to_string(img.w) + "x" +
                        std::to_string(img.h) + ", expected " + std::to_string(w) + "x" +
                        std::to_string(h));
    T* dst = out.data() + static_cast<int64_t>(b - lo) * h * w;
    for (int64_t i = 0; i < h * w; ++i) dst[i] = static_cast<T>(img.v[static_cast<size_t>(i)]);
  }
  return out;
}

}  // namespace

template <typename T>
MetricsReport evaluate_samples(const Model<T>& model, const std::vector<Sample>& samples,
                               int batch_size, double radius, bool inclusive) {
  const ModelConfig& cfg = model.config();
  const AnmsConfig anms_cfg{cfg.lambda, cfg.tau};
  std::vector<MatchCounts> per_image(samples.size());
  std::vector<size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  for (size_t lo = 0; lo < samples.size(); lo += static_cast<size_t>(batch_size)) {
    const size_t hi = std::min(samples.size(), lo + static_cast<size_t>(batch_size));
    Tensor<T> images = batch_images<T>(samples, idx, lo, hi, cfg.input_h, cfg.input_w);
    const std::vector<Heatmap> hms = model.infer_heatmaps(images);
    for (size_t b = lo; b < hi; ++b) {
      const std::vector<Detection> dets = anms(hms[b - lo], anms_cfg);
      per_image[b] = match_detections(dets, samples[b].labels, radius, inclusive);
    }
  }
  MatchCounts total;
  for (const MatchCounts& c : per_image) total += c;  // fixed order
  return compute_prf(total);
}

template <typename T>
TrainResult train_model(Model<T>& model, const std::vector<Sample>& train_set,
                        const std::vector<Sample>& val_set, const TrainConfig& tc,
                        const std::string& out_dir, bool verbose) {
  if (train_set.empty()) throw ConfigError("train: empty training split");
  validate_train_config(tc);
  std::filesystem::create_directories(out_dir);
  const ModelConfig& cfg = model.config();
  TrainResult result;
  result.last_path = out_dir + "/last.ckpt";
  result.best_path = out_dir + "/best.ckpt";
  Optimizer<T> opt(tc);
  model.params().zero_grads();
  checkpoint_save(model.state_dict(), result.last_path);

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    // deterministic per-epoch shuffle and augmentation streams
    Rng shuffle_rng(splitmix64(cfg.seed ^ (0x517cc1b727220a95ULL + static_cast<uint64_t>(epoch))));
    Rng aug_rng(splitmix64(cfg.seed ^ (0x2545f4914f6cdd1dULL + static_cast<uint64_t>(epoch))));
    std::vector<size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), size_t{0});
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<size_t>(shuffle_rng.below(i))]);

    double loss_sum = 0.0;
    int64_t steps = 0;
    bool nan_hit = false;
    for (size_t lo = 0; lo < order.size(); lo += static_cast<size_t>(tc.batch_size)) {
      const size_t hi = std::min(order.size(), lo + static_cast<size_t>(tc.batch_size));
      const int64_t bsz = static_cast<int64_t>(hi - lo);
      Tensor<T> images({bsz, 1, cfg.input_h, cfg.input_w});
      Tensor<T> gt({bsz, 1, cfg.input_h, cfg.input_w});
      for (size_t b = lo; b < hi; ++b) {
        Sample s = train_set[order[b]];
        if (tc.augment_flips) {
          if (aug_rng.uniform() < 0.5) s = flip_horizontal(s);
          if (aug_rng.uniform() < 0.5) s = flip_vertical(s);
        }
        if (s.image.h != cfg.input_h || s.image.w != cfg.input_w)
          throw ConfigError("sample " + s.id + " does not match the configured input size");
        const Heatmap hm = make_gt_heatmap(s.labels, cfg.input_h, cfg.input_w, cfg.sigma_g);
        T* di = images.data() + static_cast<int64_t>(b - lo) * cfg.input_h * cfg.input_w;
        T* dg = gt.data() + static_cast<int64_t>(b - lo) * cfg.input_h * cfg.input_w;
        for (int64_t i = 0; i < static_cast<int64_t>(cfg.input_h) * cfg.input_w; ++i) {
          di[i] = static_cast<T>(s.image.v[static_cast<size_t>(i)]);
          dg[i] = static_cast<T>(hm.v[static_cast<size_t>(i)]);
        }
      }
      Tape<T> tape;
      Var pred = model.forward(tape, tape.constant(images), BnMode::train);
      Var loss = mse_loss(tape, pred, tape.constant(gt));
      const double loss_val = static_cast<double>(tape.value(loss)[0]);
      if (!std::isfinite(loss_val)) {
        nan_hit = true;
        break;
      }
      tape.backward(loss);
      opt.step(model.params());
      model.params().zero_grads();
      loss_sum += loss_val;
      ++steps;
    }
    if (nan_hit) {
      result.aborted_nan = true;
      std::cerr << "[train] non-finite loss in epoch " << epoch
                << "; aborting with last-good checkpoint preserved\n";
      break;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = steps ? loss_sum / static_cast<double>(steps) : 0.0;
    if (!val_set.empty() && epoch % tc.eval_every == 0) {
      stats.evaluated = true;
      stats.val = evaluate_samples(model, val_set, tc.batch_size);
      if (stats.val.f1 > result.best_f1) {
        result.best_f1 = stats.val.f1;
        result.best_epoch = epoch;
        checkpoint_save(model.state_dict(), result.best_path);
      }
    }
    if (epoch % tc.checkpoint_every == 0 || epoch == tc.epochs)
      checkpoint_save(model.state_dict(), result.last_path);
    if (verbose) {
      std::cout << "[train] epoch " << epoch << " loss " << stats.mean_loss;
      if (stats.evaluated)
        std::cout << " val P " << stats.val.precision << " R " << stats.val.recall << " F1 "
                  << stats.val.f1;
      std::cout << std::endl;
    }
    result.history.push_back(stats);
  }
  if (result.best_epoch < 0) {
    // never evaluated: the final weights stand in as best
    checkpoint_save(model.state_dict(), result.best_path);
  }
  return result;
}

void save_history_json(const std::string& path, const TrainResult& result) {
  nlohmann::json j;
  j["aborted_nan"] = result.aborted_nan;
  j["best_f1"] = result.best_f1;
  j["best_epoch"] = result.best_epoch;
  nlohmann::json hist = nlohmann::json::array();
  for (const EpochStats& e : result.history) {
    nlohmann::json row;
    row["epoch"] = e.epoch;
    row["mean_loss"] = e.mean_loss;
    if (e.evaluated) {
      row["val_precision"] = e.val.precision;
      row["val_recall"] = e.val.recall;
      row["val_f1"] = e.val.f1;
    }
    hist.push_back(row);
  }
  j["history"] = hist;
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << "\n";
}

#define SSHD_INSTANTIATE(T)                                                                      \
  template class Optimizer<T>;                                                                   \
  template MetricsReport evaluate_samples<T>(const Model<T>&, const std::vector<Sample>&, int,  \
                                             double, bool);                                     \
  template TrainResult train_model<T>(Model<T>&, const std::vector<Sample>&,                    \
                                      const std::vector<Sample>&, const TrainConfig&,           \
                                      const std::string&, bool);

SSHD_INSTANTIATE(float)
SSHD_INSTANTIATE(double)

#undef SSHD_INSTANTIATE

}  // namespace sshd
