#pragma once

#include <memory>

#include "sshd/config.hpp"
#include "sshd/dcfm_hmrm.hpp"
#include "sshd/head.hpp"

namespace sshd {

// Full pipeline: stem -> pyramid -> HCEM -> DCFM(b-I) -> HMRM -> DCFM(b-II)
// -> 1x1 head. Owns all parameters; move-only.
template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& cfg);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParamTable<T>& params() { return table_; }
  const std::vector<BranchSpec>& specs() const { return specs_; }

  // image batch [B,1,H,W] -> heatmap [B,1,H,W]
  Var forward(Tape<T>& tape, Var images, BnMode mode, bool force_unit_attention = false) const;

  // eval-mode heatmaps for a raw image batch (no gradients recorded)
  std::vector<Heatmap> infer_heatmaps(const Tensor<T>& images) const;

  NamedTensors state_dict() const;
  void load_state_dict(const NamedTensors& state);

 private:
  ModelConfig cfg_;
  std::vector<BranchSpec> specs_;
  ParamTable<T> table_;
  HcemParams<T> hcem_;
  DcfmParams<T> dcfm1_, dcfm2_;
  HmrmParams<T> hmrm_;
  HeadParams<T> head_;
};

template <typename T>
std::unique_ptr<Model<T>> build_model(const ModelConfig& cfg) {
  return std::make_unique<Model<T>>(cfg);
}

// Detections for one image of arbitrary size: zero-pads to the next extent
// divisible by 2^(J-1), decodes, and drops detections inside the padding.
template <typename T>
std::vector<Detection> infer_detections(const Model<T>& model, const GrayImage& image);

}  // namespace sshd
