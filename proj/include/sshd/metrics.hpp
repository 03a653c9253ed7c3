#pragma once

#include <cstdint>
#include <vector>

#include "sshd/heatmap.hpp"

namespace sshd {

struct MatchCounts {
  int64_t tp = 0, fp = 0, fn = 0;
  MatchCounts& operator+=(const MatchCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

struct MetricsReport {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  MatchCounts counts;
};

// Greedy one-to-one matching: predictions in descending score order each
// claim their nearest unclaimed GT within `radius` (Euclidean; boundary
// inclusive by default). Distance ties go to the (y,x)-smallest GT.
MatchCounts match_detections(const std::vector<Detection>& preds,
                             const std::vector<PointLabel>& gts, double radius = 5.0,
                             bool inclusive = true);

// P = tp/(tp+fp), R = tp/(tp+fn), F1 = 2PR/(P+R); 0/0 -> 0.
MetricsReport compute_prf(const MatchCounts& c);

// Binary mask, row-major, values 0/1.
struct BinaryMask {
  int64_t h = 0, w = 0;
  std::vector<uint8_t> v;

  BinaryMask() = default;
  BinaryMask(int64_t hh, int64_t ww) : h(hh), w(ww), v(static_cast<size_t>(hh * ww), 0) {}
  uint8_t& at(int64_t y, int64_t x) { return v[static_cast<size_t>(y * w + x)]; }
  uint8_t at(int64_t y, int64_t x) const { return v[static_cast<size_t>(y * w + x)]; }
};

// 8-connected components via union-find; components ordered by their
// (y,x)-smallest pixel, pixels row-major within each component.
std::vector<std::vector<PointLabel>> cluster_mask(const BinaryMask& mask);

// One SPGT per component: intensity-weighted centroid (plain centroid when
// no intensity is given), snapped to the nearest component pixel.
std::vector<PointLabel> mask_to_points(const BinaryMask& mask,
                                       const std::vector<float>* intensity = nullptr);

}  // namespace sshd
