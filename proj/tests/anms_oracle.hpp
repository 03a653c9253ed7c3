// Brute-force ANMS decoder (test-side oracle): enumerates every pixel, tests
// 8-neighborhood local-maximality with plateau ties, dedupes equal-valued
// 8-connected plateaus to the (y,x)-smallest member, then applies the
// threshold, the literal relative-suppression rule, and the output ordering.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "sshd/heatmap.hpp"

namespace anms_oracle {

inline std::vector<sshd::Detection> decode(const sshd::Heatmap& hm, double lambda, double tau) {
  const int64_t H = hm.h, W = hm.w;
  std::vector<uint8_t> is_max(static_cast<size_t>(H * W), 0);
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      bool ok = true;
      for (int64_t dy = -1; dy <= 1 && ok; ++dy)
        for (int64_t dx = -1; dx <= 1 && ok; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const int64_t ny = y + dy, nx = x + dx;
          if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
          if (hm.at(ny, nx) > hm.at(y, x)) ok = false;
        }
      is_max[static_cast<size_t>(y * W + x)] = ok ? 1 : 0;
    }
  // plateau dedup via repeated scanning (quadratic, deliberately simple)
  std::vector<int32_t> comp(static_cast<size_t>(H * W), -1);
  int32_t ncomp = 0;
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      const size_t i = static_cast<size_t>(y * W + x);
      if (!is_max[i] || comp[i] >= 0) continue;
      comp[i] = ncomp;
      bool grew = true;
      while (grew) {
        grew = false;
        for (int64_t yy = 0; yy < H; ++yy)
          for (int64_t xx = 0; xx < W; ++xx) {
            const size_t j = static_cast<size_t>(yy * W + xx);
            if (!is_max[j] || comp[j] != ncomp) continue;
            for (int64_t dy = -1; dy <= 1; ++dy)
              for (int64_t dx = -1; dx <= 1; ++dx) {
                const int64_t ny = yy + dy, nx = xx + dx;
                if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                const size_t k = static_cast<size_t>(ny * W + nx);
                if (is_max[k] && comp[k] < 0 && hm.at(ny, nx) == hm.at(yy, xx)) {
                  comp[k] = ncomp;
                  grew = true;
                }
              }
          }
      }
      ++ncomp;
    }
  std::vector<sshd::Detection> cands;
  std::vector<uint8_t> seen(static_cast<size_t>(ncomp), 0);
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      const size_t i = static_cast<size_t>(y * W + x);
      if (!is_max[i]) continue;
      const int32_t c = comp[i];
      if (seen[static_cast<size_t>(c)]) continue;
      seen[static_cast<size_t>(c)] = 1;
      cands.push_back({static_cast<int>(x), static_cast<int>(y), hm.at(y, x)});
    }
  std::vector<sshd::Detection> above;
  for (const auto& d : cands)
    if (!(static_cast<double>(d.score) < tau)) above.push_back(d);
  if (above.empty()) return {};
  float m = above[0].score;
  for (const auto& d : above) m = std::max(m, d.score);
  std::vector<sshd::Detection> keep;
  for (const auto& d : above) {
    const double lhs = std::abs(static_cast<double>(d.score) - static_cast<double>(m));
    const double rhs =
        lambda * std::max(static_cast<double>(d.score), static_cast<double>(m));
    if (lhs > rhs) continue;  // suppression condition holds -> background
    keep.push_back(d);
  }
  std::sort(keep.begin(), keep.end(), [](const sshd::Detection& a, const sshd::Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  return keep;
}

}  // namespace anms_oracle
