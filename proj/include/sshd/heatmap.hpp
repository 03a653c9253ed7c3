#pragma once

#include <cstdint>
#include <vector>

namespace sshd {

// Integer pixel coordinate, origin top-left, x = column, y = row.
struct PointLabel {
  int x = 0;
  int y = 0;
  bool operator==(const PointLabel& o) const { return x == o.x && y == o.y; }
};

struct Detection {
  int x = 0;
  int y = 0;
  float score = 0.0f;
};

// Single-channel map in [0,1], row-major.
struct Heatmap {
  int64_t h = 0, w = 0;
  std::vector<float> v;

  Heatmap() = default;
  Heatmap(int64_t hh, int64_t ww) : h(hh), w(ww), v(static_cast<size_t>(hh * ww), 0.0f) {}
  float& at(int64_t y, int64_t x) { return v[static_cast<size_t>(y * w + x)]; }
  float at(int64_t y, int64_t x) const { return v[static_cast<size_t>(y * w + x)]; }
};

struct AnmsConfig {
  double lambda = 0.25;  // relative suppression ratio, in [0,1)
  double tau = 0.2;      // base confidence threshold, in [0,1)
};

// Per-target Gaussian G(dx,dy) = exp(-(dx^2+dy^2)/(2 sigma^2)) rendered at
// every pixel, combined across targets by elementwise max.
Heatmap make_gt_heatmap(const std::vector<PointLabel>& points, int64_t h, int64_t w,
                        double sigma_g);

// Local-maximum extraction (3x3 max pool), plateau dedup to the (y,x)-smallest
// pixel per 8-connected equal plateau, threshold tau, then relative retention
// against the strongest survivor. Sorted by descending score, ties (y,x).
std::vector<Detection> anms(const Heatmap& hm, const AnmsConfig& cfg);

}  // namespace sshd
