#include "sshd/head.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "sshd/errors.hpp"

namespace sshd {

Heatmap make_gt_heatmap(const std::vector<PointLabel>& points, int64_t h, int64_t w,
                        double sigma_g) {
  if (sigma_g <= 0) throw ConfigError("make_gt_heatmap: sigma must be > 0");
  Heatmap hm(h, w);
  for (size_t k = 0; k < points.size(); ++k) {
    const PointLabel& p = points[k];
    if (p.x < 0 || p.x >= w || p.y < 0 || p.y >= h)
      throw LabelError("point " + std::to_string(k) + " (" + std::to_string(p.x) + "," +
                       std::to_string(p.y) + ") outside " + std::to_string(w) + "x" +
                       std::to_string(h) + " heatmap");
  }
  const double inv = 1.0 / (2.0 * sigma_g * sigma_g);
  for (const PointLabel& p : points)
    for (int64_t y = 0; y < h; ++y) {
      const double dy = static_cast<double>(y - p.y);
      for (int64_t x = 0; x < w; ++x) {
        const double dx = static_cast<double>(x - p.x);
        const float g = static_cast<float>(std::exp(-(dx * dx + dy * dy) * inv));
        hm.at(y, x) = std::max(hm.at(y, x), g);
      }
    }
  return hm;
}

std::vector<Detection> anms(const Heatmap& hm, const AnmsConfig& cfg) {
  if (cfg.lambda < 0.0 || cfg.lambda >= 1.0) throw ConfigError("anms: lambda must be in [0,1)");
  if (cfg.tau < 0.0 || cfg.tau >= 1.0) throw ConfigError("anms: tau must be in [0,1)");
  const int64_t H = hm.h, W = hm.w;
  // local maxima: hm == 3x3 max-pool (stride 1, pad 1); plateaus fully retained
  std::vector<uint8_t> keep(static_cast<size_t>(H * W), 0);
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      const float v = hm.at(y, x);
      float mx = v;
      for (int64_t dy = -1; dy <= 1; ++dy)
        for (int64_t dx = -1; dx <= 1; ++dx) {
          const int64_t ny = y + dy, nx = x + dx;
          if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
          mx = std::max(mx, hm.at(ny, nx));
        }
      keep[static_cast<size_t>(y * W + x)] = (v == mx) ? 1 : 0;
    }
  // dedupe 8-connected equal-valued plateaus to their (y,x)-smallest pixel
  std::vector<uint8_t> visited(static_cast<size_t>(H * W), 0);
  std::vector<Detection> cands;
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      const size_t idx = static_cast<size_t>(y * W + x);
      if (!keep[idx] || visited[idx]) continue;
      const float v = hm.at(y, x);
      // flood the plateau; the scan-order seed is its (y,x)-smallest member
      std::deque<std::pair<int64_t, int64_t>> q{{y, x}};
      visited[idx] = 1;
      while (!q.empty()) {
        auto [cy, cx] = q.front();
        q.pop_front();
        for (int64_t dy = -1; dy <= 1; ++dy)
          for (int64_t dx = -1; dx <= 1; ++dx) {
            const int64_t ny = cy + dy, nx = cx + dx;
            if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
            const size_t nidx = static_cast<size_t>(ny * W + nx);
            if (visited[nidx] || !keep[nidx] || hm.at(ny, nx) != v) continue;
            visited[nidx] = 1;
            q.emplace_back(ny, nx);
          }
      }
      cands.push_back({static_cast<int>(x), static_cast<int>(y), v});
    }
  // confidence threshold
  std::vector<Detection> above;
  for (const Detection& d : cands)
    if (!(static_cast<double>(d.score) < cfg.tau)) above.push_back(d);
  if (above.empty()) return {};
  // relative retention against the strongest candidate
  float m = above[0].score;
  for (const Detection& d : above) m = std::max(m, d.score);
  std::vector<Detection> out;
  for (const Detection& d : above) {
    const double diff = std::abs(static_cast<double>(d.score) - static_cast<double>(m));
    const double bound = cfg.lambda * std::max(static_cast<double>(d.score), static_cast<double>(m));
    if (!(diff > bound)) out.push_back(d);
  }
  std::sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
HeadParams<T> make_head(ParamTable<T>& table, const std::string& prefix,
                        const std::vector<BranchSpec>& specs, double eps, double momentum,
                        Rng& rng) {
  HeadParams<T> p;
  p.specs = specs;
  for (size_t j = 1; j < specs.size(); ++j)
    p.up.push_back(make_align(table, prefix + ".up" + std::to_string(j + 1), specs[j], specs[0],
                              eps, momentum, rng));
  p.out_conv = make_conv(table, prefix + ".out", 1, specs[0].channels, 1, 1, 0, true, rng);
  p.out_conv.w->value.zero();  // untrained model predicts the 0.5 map
  return p;
}

template <typename T>
Var predict_heatmap(Tape<T>& tape, const std::vector<Var>& features, const HeadParams<T>& p,
                    BnMode mode) {
  if (features.size() != p.specs.size())
    throw ConfigError("predict_heatmap: expected " + std::to_string(p.specs.size()) +
                      " branches, got " + std::to_string(features.size()));
  Var acc = features[0];
  for (size_t j = 1; j < features.size(); ++j)
    acc = tape.add(acc, align_forward(tape, features[j], p.up[j - 1], mode));
  return tape.sigmoid(apply_conv(tape, acc, p.out_conv));
}

template <typename T>
Var mse_loss(Tape<T>& tape, Var pred, Var gt) {
  const Tensor<T>& pv = tape.value(pred);
  const Tensor<T>& gv = tape.value(gt);
  if (!shapes_equal(pv.shape(), gv.shape()))
    throw UsageError("mse_loss: shape mismatch " + shape_str(pv.shape()) + " vs " +
                     shape_str(gv.shape()));
  Var diff = tape.add(pred, tape.mul_scalar(gt, T(-1)));
  return tape.mean_all(tape.mul(diff, diff));
}

template <typename T>
std::vector<Heatmap> heatmaps_from_tensor(const Tensor<T>& t) {
  if (t.rank() != 4 || t.extent(1) != 1)
    throw UsageError("heatmaps_from_tensor: expected [B,1,H,W], got " + shape_str(t.shape()));
  const int64_t B = t.extent(0), H = t.extent(2), W = t.extent(3);
  std::vector<Heatmap> out;
  out.reserve(static_cast<size_t>(B));
  for (int64_t b = 0; b < B; ++b) {
    Heatmap hm(H, W);
    const T* src = t.data() + b * H * W;
    for (int64_t i = 0; i < H * W; ++i) hm.v[static_cast<size_t>(i)] = static_cast<float>(src[i]);
    out.push_back(std::move(hm));
  }
  return out;
}

template <typename T>
Tensor<T> tensor_from_heatmaps(const std::vector<Heatmap>& hms) {
  if (hms.empty()) throw UsageError("tensor_from_heatmaps: empty batch");
  const int64_t B = static_cast<int64_t>(hms.size()), H = hms[0].h, W = hms[0].w;
  Tensor<T> t({B, 1, H, W});
  for (int64_t b = 0; b < B; ++b) {
    const Heatmap& hm = hms[static_cast<size_t>(b)];
    if (hm.h != H || hm.w != W) throw UsageError("tensor_from_heatmaps: inconsistent sizes");
    T* dst = t.data() + b * H * W;
    for (int64_t i = 0; i < H * W; ++i) dst[i] = static_cast<T>(hm.v[static_cast<size_t>(i)]);
  }
  return t;
}

#define SSHD_INSTANTIATE(T)                                                                   \
  template HeadParams<T> make_head<T>(ParamTable<T>&, const std::string&,                    \
                                      const std::vector<BranchSpec>&, double, double, Rng&); \
  template Var predict_heatmap<T>(Tape<T>&, const std::vector<Var>&, const HeadParams<T>&,   \
                                  BnMode);                                                    \
  template Var mse_loss<T>(Tape<T>&, Var, Var);                                              \
  template std::vector<Heatmap> heatmaps_from_tensor<T>(const Tensor<T>&);                   \
  template Tensor<T> tensor_from_heatmaps<T>(const std::vector<Heatmap>&);

SSHD_INSTANTIATE(float)
SSHD_INSTANTIATE(double)

#undef SSHD_INSTANTIATE

}  // namespace sshd
