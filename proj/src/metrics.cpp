#include "sshd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sshd/errors.hpp"

namespace sshd {

MatchCounts match_detections(const std::vector<Detection>& preds,
                             const std::vector<PointLabel>& gts, double radius, bool inclusive) {
  if (radius <= 0) throw ConfigError("match_detections: radius must be > 0");
  std::vector<size_t> order(preds.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (preds[a].score != preds[b].score) return preds[a].score > preds[b].score;
    if (preds[a].y != preds[b].y) return preds[a].y < preds[b].y;
    return preds[a].x < preds[b].x;
  });
  const double r2 = radius * radius;
  std::vector<uint8_t> claimed(gts.size(), 0);
  MatchCounts c;
  for (const size_t pi : order) {
    const Detection& p = preds[pi];
    int64_t best_d2 = -1;
    size_t best_g = gts.size();
    for (size_t g = 0; g < gts.size(); ++g) {
      if (claimed[g]) continue;
      const int64_t dx = p.x - gts[g].x, dy = p.y - gts[g].y;
      const int64_t d2 = dx * dx + dy * dy;
      const bool within = inclusive ? static_cast<double>(d2) <= r2 : static_cast<double>(d2) < r2;
      if (!within) continue;
      if (best_g == gts.size() || d2 < best_d2 ||
          (d2 == best_d2 && (gts[g].y < gts[best_g].y ||
                             (gts[g].y == gts[best_g].y && gts[g].x < gts[best_g].x)))) {
        best_d2 = d2;
        best_g = g;
      }
    }
    if (best_g < gts.size()) {
      claimed[best_g] = 1;
      c.tp++;
    } else {
      c.fp++;
    }
  }
  c.fn = static_cast<int64_t>(gts.size()) - c.tp;
  return c;
}

MetricsReport compute_prf(const MatchCounts& c) {
  MetricsReport r;
  r.counts = c;
  r.precision = (c.tp + c.fp) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp)
                                  : 0.0;
  r.recall = (c.tp + c.fn) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn)
                               : 0.0;
  r.f1 = (r.precision + r.recall) > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

namespace {

struct UnionFind {
  std::vector<int32_t> parent;
  explicit UnionFind(size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int32_t find(int32_t a) {
    while (parent[static_cast<size_t>(a)] != a) {
      parent[static_cast<size_t>(a)] = parent[static_cast<size_t>(parent[static_cast<size_t>(a)])];
      a = parent[static_cast<size_t>(a)];
    }
    return a;
  }
  void unite(int32_t a, int32_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<size_t>(std::max(a, b))] = std::min(a, b);
  }
};

}  // namespace

std::vector<std::vector<PointLabel>> cluster_mask(const BinaryMask& mask) {
  const int64_t H = mask.h, W = mask.w;
  for (const uint8_t v : mask.v)
    if (v > 1) throw ConfigError("cluster_mask: mask values must be 0 or 1");
  UnionFind uf(static_cast<size_t>(H * W));
  // two-pass labeling: link each foreground pixel to earlier-scan neighbors
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      if (!mask.at(y, x)) continue;
      const int32_t idx = static_cast<int32_t>(y * W + x);
      const int64_t nbs[4][2] = {{y - 1, x - 1}, {y - 1, x}, {y - 1, x + 1}, {y, x - 1}};
      for (const auto& nb : nbs) {
        const int64_t ny = nb[0], nx = nb[1];
        if (ny < 0 || nx < 0 || nx >= W) continue;
        if (mask.at(ny, nx)) uf.unite(idx, static_cast<int32_t>(ny * W + nx));
      }
    }
  std::vector<int32_t> root_to_comp(static_cast<size_t>(H * W), -1);
  std::vector<std::vector<PointLabel>> comps;
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      if (!mask.at(y, x)) continue;
      const int32_t root = uf.find(static_cast<int32_t>(y * W + x));
      int32_t& comp = root_to_comp[static_cast<size_t>(root)];
      if (comp < 0) {
        comp = static_cast<int32_t>(comps.size());
        comps.emplace_back();
      }
      comps[static_cast<size_t>(comp)].push_back({static_cast<int>(x), static_cast<int>(y)});
    }
  return comps;  // discovery order == order of (y,x)-smallest member
}

std::vector<PointLabel> mask_to_points(const BinaryMask& mask,
                                       const std::vector<float>* intensity) {
  if (intensity && static_cast<int64_t>(intensity->size()) != mask.h * mask.w)
    throw ConfigError("mask_to_points: intensity size does not match mask");
  std::vector<PointLabel> out;
  for (const auto& comp : cluster_mask(mask)) {
    double sw = 0.0, sx = 0.0, sy = 0.0;
    for (const PointLabel& p : comp) {
      const double wgt =
          intensity ? static_cast<double>((*intensity)[static_cast<size_t>(
                          static_cast<int64_t>(p.y) * mask.w + p.x)])
                    : 1.0;
      sw += wgt;
      sx += wgt * p.x;
      sy += wgt * p.y;
    }
    if (sw <= 0.0) {  // degenerate weights: fall back to the plain centroid
      sw = static_cast<double>(comp.size());
      sx = sy = 0.0;
      for (const PointLabel& p : comp) {
        sx += p.x;
        sy += p.y;
      }
    }
    const double cx = sx / sw, cy = sy / sw;
    // snap to the nearest component pixel so the SPGT lies on the target
    PointLabel best = comp[0];
    double best_d = 1e300;
    for (const PointLabel& p : comp) {
      const double d = (p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy);
      if (d < best_d - 1e-12) {
        best_d = d;
        best = p;
      }
    }
    out.push_back(best);
  }
  return out;
}

}  // namespace sshd
