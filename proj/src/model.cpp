#include "sshd/model.hpp"

namespace sshd {

template <typename T>
Model<T>::Model(const ModelConfig& cfg) : cfg_(cfg) {
  validate_model_config(cfg);
  specs_ = make_branch_specs(cfg.branches, cfg.width_mult, cfg.input_h, cfg.input_w);
  Rng rng(cfg.seed);
  const double eps = cfg.bn_eps, mom = cfg.bn_momentum;
  hcem_ = make_hcem(table_, "hcem", specs_, cfg.columns, cfg.hcem_mode, eps, mom, rng);
  dcfm1_ = make_dcfm(table_, "dcfm1", specs_, 3, cfg.od_kernels, cfg.r_od, cfg.r_ca,
                     cfg.use_odblock && cfg.use_dcfm_b1, cfg.use_ca && cfg.use_dcfm_b1,
                     cfg.ca_literal_wnorm, cfg.ca_gates_one, eps, mom, rng);
  hmrm_ = make_hmrm(table_, "hmrm", specs_, eps, mom, rng);
  dcfm2_ = make_dcfm(table_, "dcfm2", specs_, 3, cfg.od_kernels, cfg.r_od, cfg.r_ca,
                     cfg.use_odblock && cfg.use_dcfm_b2, cfg.use_ca && cfg.use_dcfm_b2,
                     cfg.ca_literal_wnorm, cfg.ca_gates_one, eps, mom, rng);
  head_ = make_head(table_, "head", specs_, eps, mom, rng);
}

template <typename T>
Var Model<T>::forward(Tape<T>& tape, Var images, BnMode mode, bool force_unit_attention) const {
  Var s = stem_forward(tape, images, hcem_.stem, mode);
  std::vector<Var> feats = build_pyramid(tape, s, hcem_, mode);
  feats = hcem_forward(tape, feats, hcem_, mode);
  feats = dcfm_forward(tape, feats, dcfm1_, mode, force_unit_attention);
  feats = hmrm_forward(tape, feats, hmrm_, mode);
  feats = dcfm_forward(tape, feats, dcfm2_, mode, force_unit_attention);
  return predict_heatmap(tape, feats, head_, mode);
}

template <typename T>
std::vector<Heatmap> Model<T>::infer_heatmaps(const Tensor<T>& images) const {
  Tape<T> tape;
  Var out = forward(tape, tape.constant(images), BnMode::eval);
  return heatmaps_from_tensor(tape.value(out));
}

template <typename T>
NamedTensors Model<T>::state_dict() const {
  NamedTensors out;
  out.reserve(table_.items().size());
  for (const auto& p : table_.items()) out.emplace_back(p->name, p->value.template cast<float>());
  return out;
}

template <typename T>
void Model<T>::load_state_dict(const NamedTensors& state) {
  if (state.size() != table_.items().size())
    throw CheckpointError("state has " + std::to_string(state.size()) + " tensors, model needs " +
                          std::to_string(table_.items().size()));
  for (const auto& [name, tensor] : state) {
    Parameter<T>* p = table_.find(name);
    if (!p) throw CheckpointError("state tensor \"" + name + "\" not present in model");
    if (!shapes_equal(p->value.shape(), tensor.shape()))
      throw CheckpointError("state tensor \"" + name + "\" has shape " +
                            shape_str(tensor.shape()) + ", model expects " +
                            shape_str(p->value.shape()));
    p->value = tensor.template cast<T>();
  }
}

template <typename T>
std::vector<Detection> infer_detections(const Model<T>& model, const GrayImage& image) {
  const ModelConfig& cfg = model.config();
  int64_t div = 1;
  for (int j = 1; j < cfg.branches; ++j) div *= 2;
  const int64_t H = (image.h + div - 1) / div * div;
  const int64_t W = (image.w + div - 1) / div * div;
  Tensor<T> batch({1, 1, H, W});
  for (int64_t y = 0; y < image.h; ++y)
    for (int64_t x = 0; x < image.w; ++x)
      batch[y * W + x] = static_cast<T>(image.at(y, x));
  const std::vector<Heatmap> hms = model.infer_heatmaps(batch);
  const AnmsConfig anms_cfg{cfg.lambda, cfg.tau};
  std::vector<Detection> dets = anms(hms[0], anms_cfg);
  if (H != image.h || W != image.w) {
    std::vector<Detection> inside;
    for (const Detection& d : dets)
      if (d.x < image.w && d.y < image.h) inside.push_back(d);
    dets = std::move(inside);
  }
  return dets;
}

template class Model<float>;
template class Model<double>;
template std::vector<Detection> infer_detections<float>(const Model<float>&, const GrayImage&);
template std::vector<Detection> infer_detections<double>(const Model<double>&, const GrayImage&);

}  // namespace sshd
