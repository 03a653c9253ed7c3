#pragma once

#include <cstdint>
#include <string>

#include "sshd/data_io.hpp"
#include "sshd/hcem.hpp"

namespace sshd {

// Architectural and supervision hyperparameters. Desk-scale defaults;
// full-scale widths (24/32/48) are constructible through width_mult.
struct ModelConfig {
  int branches = 3;    // J
  int columns = 4;     // I
  int width_mult = 8;  // channels of branch j are j*width_mult
  double sigma_g = 1.5;
  double lambda = 0.25;
  double tau = 0.2;
  int r_od = 4;
  int r_ca = 8;
  int od_kernels = 4;  // n
  int input_h = 64, input_w = 64;
  uint64_t seed = 0;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  // topology / ablation toggles
  HcemMode hcem_mode = HcemMode::full;
  bool use_dcfm_b1 = true;
  bool use_dcfm_b2 = true;
  bool use_ca = true;
  bool use_odblock = true;
  // debug hooks
  bool ca_gates_one = false;
  bool ca_literal_wnorm = false;
};

struct TrainConfig {
  std::string optimizer = "adam";  // adam | sgd
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double momentum = 0.9;  // sgd
  int batch_size = 8;
  int epochs = 30;
  bool augment_flips = false;
  int checkpoint_every = 1;  // epochs
  int eval_every = 1;        // epochs
};

ModelConfig model_config_from_json_file(const std::string& path);
ModelConfig model_config_from_json_text(const std::string& text);
std::string model_config_to_json(const ModelConfig& cfg);

TrainConfig train_config_from_json_file(const std::string& path);
TrainConfig train_config_from_json_text(const std::string& text);
std::string train_config_to_json(const TrainConfig& cfg);

SynthConfig synth_config_from_json_file(const std::string& path);
SynthConfig synth_config_from_json_text(const std::string& text);
std::string synth_config_to_json(const SynthConfig& cfg);

void validate_model_config(const ModelConfig& cfg);
void validate_train_config(const TrainConfig& cfg);

}  // namespace sshd
