#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sshd/heatmap.hpp"
#include "sshd/metrics.hpp"
#include "sshd/rng.hpp"
#include "sshd/tensor.hpp"

namespace sshd {

// Grayscale image in [0,1], row-major.
struct GrayImage {
  int64_t h = 0, w = 0;
  std::vector<float> v;

  GrayImage() = default;
  GrayImage(int64_t hh, int64_t ww) : h(hh), w(ww), v(static_cast<size_t>(hh * ww), 0.0f) {}
  float& at(int64_t y, int64_t x) { return v[static_cast<size_t>(y * w + x)]; }
  float at(int64_t y, int64_t x) const { return v[static_cast<size_t>(y * w + x)]; }
};

struct Sample {
  std::string id;
  GrayImage image;
  std::vector<PointLabel> labels;
  std::optional<BinaryMask> mask;
};

// ------------------------------------------------------------------ PGM P5
// 8-bit or 16-bit big-endian binary PGM; loads normalize by maxval.

GrayImage load_pgm(const std::string& path);
void save_pgm(const std::string& path, const GrayImage& img, int bits = 16);
BinaryMask load_mask_pgm(const std::string& path);  // nonzero -> 1
void save_mask_pgm(const std::string& path, const BinaryMask& mask);

// ------------------------------------------------------------- point labels
// CSV, one "x,y" pair per line.

std::vector<PointLabel> load_labels_csv(const std::string& path);
void save_labels_csv(const std::string& path, const std::vector<PointLabel>& labels);

Sample load_sample(const std::string& image_path, const std::string& label_path,
                   const std::string& mask_path = "");

// ------------------------------------------------------------- synthetic IR

struct SynthConfig {
  int64_t image_h = 64, image_w = 64;
  int targets_min = 1, targets_max = 3;
  double amp_min = 0.25, amp_max = 0.4;
  double sigma_min = 0.8, sigma_max = 1.8;
  double gradient_scale = 0.25;  // low-frequency background ramp amplitude
  int noise_octaves = 3;         // value-noise octaves
  double noise_std = 0.02;       // per-pixel noise
  uint64_t seed = 0;
};

// Deterministic scene `index` of the stream defined by cfg.seed. Background
// is clamped to [0,0.6]; targets are additive Gaussian blobs with centers at
// least 6 px apart. background_out, when given, receives the target-free
// background for oracle checks.
Sample synth_scene(const SynthConfig& cfg, int64_t index,
                   std::vector<float>* background_out = nullptr);

// Split manifest (train/val/test id lists), ratio 6:2:2 by default.
struct SplitManifest {
  std::vector<std::string> train, val, test;
};

SplitManifest make_split(const std::vector<std::string>& ids, uint64_t seed,
                         double train_frac = 0.6, double val_frac = 0.2);
void save_split(const std::string& path, const SplitManifest& m);
SplitManifest load_split(const std::string& path);

// --------------------------------------------------------------- checkpoint
// Little-endian binary: magic "SSHD", version u32, count u32, then per
// tensor: name_len u16 + name, rank u8, extents u32 x rank, f32 data.

using NamedTensors = std::vector<std::pair<std::string, Tensor<float>>>;

void checkpoint_save(const NamedTensors& table, const std::string& path);
NamedTensors checkpoint_load(const std::string& path);

// ------------------------------------------------------------ heatmap dumps

enum class HeatmapDumpKind { pgm, raw };

void dump_heatmap(const Heatmap& hm, const std::string& path, HeatmapDumpKind kind);
Heatmap load_raw_heatmap(const std::string& path);

// ------------------------------------------------------------------- flips

Sample flip_horizontal(const Sample& s);
Sample flip_vertical(const Sample& s);

// Portable exp: exact IEEE add/mul/ldexp only, bit-stable across platforms.
double portable_exp(double x);

}  // namespace sshd
