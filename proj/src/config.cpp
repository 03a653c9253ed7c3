#include "sshd/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "sshd/errors.hpp"

namespace sshd {

namespace {

using nlohmann::json;

json parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const std::exception& e) {
    throw FormatError(path + ": bad JSON: " + e.what());
  }
}

json parse_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const std::exception& e) {
    throw FormatError(std::string("bad JSON: ") + e.what());
  }
}

// Strict field reader: every present key must be known, types must match.
struct Fields {
  const json& j;
  std::set<std::string> known;

  void want_object() const {
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  }
  template <typename T>
  void get(const char* key, T& out) {
    known.insert(key);
    if (!j.contains(key)) return;
    try {
      out = j.at(key).get<T>();
    } catch (const std::exception&) {
      throw ConfigError(std::string("config field \"") + key + "\" has the wrong type");
    }
  }
  void finish() const {
    for (const auto& [key, _] : j.items())
      if (!known.count(key)) throw ConfigError("unknown config key \"" + key + "\"");
  }
};

ModelConfig model_from_json(const json& j) {
  ModelConfig c;
  Fields f{j, {}};
  f.want_object();
  f.get("branches", c.branches);
  f.get("columns", c.columns);
  f.get("width_mult", c.width_mult);
  f.get("sigma_g", c.sigma_g);
  f.get("lambda", c.lambda);
  f.get("tau", c.tau);
  f.get("r_od", c.r_od);
  f.get("r_ca", c.r_ca);
  f.get("od_kernels", c.od_kernels);
  f.get("input_h", c.input_h);
  f.get("input_w", c.input_w);
  f.get("seed", c.seed);
  f.get("bn_eps", c.bn_eps);
  f.get("bn_momentum", c.bn_momentum);
  std::string mode = hcem_mode_to_string(c.hcem_mode);
  f.get("hcem_mode", mode);
  c.hcem_mode = hcem_mode_from_string(mode);
  f.get("use_dcfm_b1", c.use_dcfm_b1);
  f.get("use_dcfm_b2", c.use_dcfm_b2);
  f.get("use_ca", c.use_ca);
  f.get("use_odblock", c.use_odblock);
  f.get("ca_gates_one", c.ca_gates_one);
  f.get("ca_literal_wnorm", c.ca_literal_wnorm);
  f.finish();
  validate_model_config(c);
  return c;
}

TrainConfig train_from_json(const json& j) {
  TrainConfig c;
  Fields f{j, {}};
  f.want_object();
  f.get("optimizer", c.optimizer);
  f.get("lr", c.lr);
  f.get("beta1", c.beta1);
  f.get("beta2", c.beta2);
  f.get("adam_eps", c.adam_eps);
  f.get("momentum", c.momentum);
  f.get("batch_size", c.batch_size);
  f.get("epochs", c.epochs);
  f.get("augment_flips", c.augment_flips);
  f.get("checkpoint_every", c.checkpoint_every);
  f.get("eval_every", c.eval_every);
  f.finish();
  validate_train_config(c);
  return c;
}

SynthConfig synth_from_json(const json& j) {
  SynthConfig c;
  Fields f{j, {}};
  f.want_object();
  f.get("image_h", c.image_h);
  f.get("image_w", c.image_w);
  f.get("targets_min", c.targets_min);
  f.get("targets_max", c.targets_max);
  f.get("amp_min", c.amp_min);
  f.get("amp_max", c.amp_max);
  f.get("sigma_min", c.sigma_min);
  f.get("sigma_max", c.sigma_max);
  f.get("gradient_scale", c.gradient_scale);
  f.get("noise_octaves", c.noise_octaves);
  f.get("noise_std", c.noise_std);
  f.get("seed", c.seed);
  f.finish();
  return c;
}

}  // namespace

void validate_model_config(const ModelConfig& c) {
  if (c.branches < 1) throw ConfigError("branches must be >= 1");
  if (c.columns < 1) throw ConfigError("columns must be >= 1");
  if (c.width_mult < 1) throw ConfigError("width_mult must be >= 1");
  if (c.sigma_g <= 0) throw ConfigError("sigma_g must be > 0");
  if (c.lambda < 0 || c.lambda >= 1) throw ConfigError("lambda must be in [0,1)");
  if (c.tau < 0 || c.tau >= 1) throw ConfigError("tau must be in [0,1)");
  if (c.r_od < 1 || c.r_ca < 1) throw ConfigError("reduction ratios must be >= 1");
  if (c.od_kernels < 1) throw ConfigError("od_kernels must be >= 1");
  if (c.input_h < 1 || c.input_w < 1) throw ConfigError("input size must be positive");
  if (c.bn_eps <= 0) throw ConfigError("bn_eps must be > 0");
  // geometry check before any allocation
  make_branch_specs(c.branches, c.width_mult, c.input_h, c.input_w);
}

void validate_train_config(const TrainConfig& c) {
  if (c.optimizer != "adam" && c.optimizer != "sgd")
    throw ConfigError("optimizer must be \"adam\" or \"sgd\"");
  if (c.lr <= 0) throw ConfigError("lr must be > 0");
  if (c.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (c.checkpoint_every < 1 || c.eval_every < 1)
    throw ConfigError("checkpoint_every/eval_every must be >= 1");
}

ModelConfig model_config_from_json_file(const std::string& path) {
  return model_from_json(parse_file(path));
}
ModelConfig model_config_from_json_text(const std::string& text) {
  return model_from_json(parse_text(text));
}

TrainConfig train_config_from_json_file(const std::string& path) {
  return train_from_json(parse_file(path));
}
TrainConfig train_config_from_json_text(const std::string& text) {
  return train_from_json(parse_text(text));
}

SynthConfig synth_config_from_json_file(const std::string& path) {
  return synth_from_json(parse_file(path));
}
SynthConfig synth_config_from_json_text(const std::string& text) {
  return synth_from_json(parse_text(text));
}

std::string model_config_to_json(const ModelConfig& c) {
  json j;
  j["branches"] = c.branches;
  j["columns"] = c.columns;
  j["width_mult"] = c.width_mult;
  j["sigma_g"] = c.sigma_g;
  j["lambda"] = c.lambda;
  j["tau"] = c.tau;
  j["r_od"] = c.r_od;
  j["r_ca"] = c.r_ca;
  j["od_kernels"] = c.od_kernels;
  j["input_h"] = c.input_h;
  j["input_w"] = c.input_w;
  j["seed"] = c.seed;
  j["bn_eps"] = c.bn_eps;
  j["bn_momentum"] = c.bn_momentum;
  j["hcem_mode"] = hcem_mode_to_string(c.hcem_mode);
  j["use_dcfm_b1"] = c.use_dcfm_b1;
  j["use_dcfm_b2"] = c.use_dcfm_b2;
  j["use_ca"] = c.use_ca;
  j["use_odblock"] = c.use_odblock;
  j["ca_gates_one"] = c.ca_gates_one;
  j["ca_literal_wnorm"] = c.ca_literal_wnorm;
  return j.dump(2);
}

std::string train_config_to_json(const TrainConfig& c) {
  json j;
  j["optimizer"] = c.optimizer;
  j["lr"] = c.lr;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["adam_eps"] = c.adam_eps;
  j["momentum"] = c.momentum;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["augment_flips"] = c.augment_flips;
  j["checkpoint_every"] = c.checkpoint_every;
  j["eval_every"] = c.eval_every;
  return j.dump(2);
}

std::string synth_config_to_json(const SynthConfig& c) {
  json j;
  j["image_h"] = c.image_h;
  j["image_w"] = c.image_w;
  j["targets_min"] = c.targets_min;
  j["targets_max"] = c.targets_max;
  j["amp_min"] = c.amp_min;
  j["amp_max"] = c.amp_max;
  j["sigma_min"] = c.sigma_min;
  j["sigma_max"] = c.sigma_max;
  j["gradient_scale"] = c.gradient_scale;
  j["noise_octaves"] = c.noise_octaves;
  j["noise_std"] = c.noise_std;
  j["seed"] = c.seed;
  return j.dump(2);
}

}  // namespace sshd
