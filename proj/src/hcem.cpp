#include "sshd/hcem.hpp"

namespace sshd {

std::vector<BranchSpec> make_branch_specs(int branches, int width_mult, int64_t h, int64_t w) {
  if (branches < 1) throw ConfigError("branch count must be >= 1");
  if (width_mult < 1) throw ConfigError("width multiplier must be >= 1");
  std::vector<BranchSpec> specs;
  int64_t div = 1;
  for (int j = 1; j <= branches; ++j, div *= 2) {
    if (h % div != 0 || w % div != 0)
      throw ConfigError("input " + std::to_string(h) + "x" + std::to_string(w) +
                        " not divisible by " + std::to_string(div) + " for branch " +
                        std::to_string(j));
    specs.push_back({j, static_cast<int64_t>(j) * width_mult, h / div, w / div});
  }
  return specs;
}

HcemMode hcem_mode_from_string(const std::string& s) {
  if (s == "full") return HcemMode::full;
  if (s == "parallel") return HcemMode::parallel;
  if (s == "top_down") return HcemMode::top_down;
  if (s == "bottom_up") return HcemMode::bottom_up;
  if (s == "literal_odd") return HcemMode::literal_odd;
  throw ConfigError("unknown hcem mode: " + s);
}

std::string hcem_mode_to_string(HcemMode m) {
  switch (m) {
    case HcemMode::full: return "full";
    case HcemMode::parallel: return "parallel";
    case HcemMode::top_down: return "top_down";
    case HcemMode::bottom_up: return "bottom_up";
    case HcemMode::literal_odd: return "literal_odd";
  }
  return "full";
}

template <typename T>
AlignParams<T> make_align(ParamTable<T>& table, const std::string& prefix, BranchSpec src,
                          BranchSpec dst, double eps, double momentum, Rng& rng) {
  AlignParams<T> p;
  p.src = src;
  p.dst = dst;
  if (src == dst) return p;  // identity
  if (dst.h < src.h) {
    // downsample: one stride-2 stage per halving, keeping source channels
    int64_t cur = src.h;
    int stage = 0;
    while (cur > dst.h) {
      if (cur % 2 != 0)
        throw ConfigError("align: cannot halve extent " + std::to_string(cur));
      auto conv = make_conv(table, prefix + ".down" + std::to_string(stage), src.channels,
                            src.channels, 3, 2, 1, false, rng);
      auto bn = make_bn(table, prefix + ".down" + std::to_string(stage) + ".bn", src.channels,
                        eps, momentum);
      p.down_stages.emplace_back(conv, bn);
      cur /= 2;
      ++stage;
    }
  }
  if (src.channels != dst.channels) {
    p.proj = make_conv(table, prefix + ".proj", dst.channels, src.channels, 1, 1, 0, true, rng);
    p.has_proj = true;
  }
  return p;
}

template <typename T>
Var align_forward(Tape<T>& tape, Var src, const AlignParams<T>& p, BnMode mode) {
  if (p.src == p.dst) return src;
  Var h = src;
  for (const auto& [conv, bn] : p.down_stages)
    h = tape.relu(apply_bn(tape, apply_conv(tape, h, conv), bn, mode));
  if (p.dst.h > p.src.h || p.dst.w > p.src.w)
    h = tape.resize(h, static_cast<int>(p.dst.h), static_cast<int>(p.dst.w), ResizeKind::bilinear);
  if (p.has_proj) h = apply_conv(tape, h, p.proj);
  return h;
}

template <typename T>
HcemParams<T> make_hcem(ParamTable<T>& table, const std::string& prefix,
                        const std::vector<BranchSpec>& specs, int columns, HcemMode mode,
                        double eps, double momentum, Rng& rng) {
  if (columns < 1) throw ConfigError("hcem: column count must be >= 1");
  if (specs.empty()) throw ConfigError("hcem: no branch specs");
  HcemParams<T> p;
  p.specs = specs;
  p.mode = mode;
  p.columns = columns;
  const int J = static_cast<int>(specs.size());

  p.stem.conv = make_conv(table, prefix + ".stem.conv", specs[0].channels, 1, 3, 1, 1, false, rng);
  p.stem.bn = make_bn(table, prefix + ".stem.bn", specs[0].channels, eps, momentum);

  for (int j = 2; j <= J; ++j) {
    PyramidBranchParams<T> br;
    int64_t cur_c = specs[0].channels;
    for (int s = 0; s < j - 1; ++s) {
      const int64_t next_c = cur_c * 2;
      auto conv = make_conv(table, prefix + ".pyr" + std::to_string(j) + ".s" + std::to_string(s),
                            next_c, cur_c, 3, 2, 1, false, rng);
      auto bn = make_bn(table,
                        prefix + ".pyr" + std::to_string(j) + ".s" + std::to_string(s) + ".bn",
                        next_c, eps, momentum);
      br.stages.emplace_back(conv, bn);
      cur_c = next_c;
    }
    if (cur_c != specs[static_cast<size_t>(j - 1)].channels) {
      br.proj = make_conv(table, prefix + ".pyr" + std::to_string(j) + ".proj",
                          specs[static_cast<size_t>(j - 1)].channels, cur_c, 1, 1, 0, true, rng);
      br.has_proj = true;
    }
    p.pyramid.push_back(std::move(br));
  }

  p.blocks.resize(static_cast<size_t>(columns));
  p.cross.resize(static_cast<size_t>(columns));
  for (int col = 0; col < columns; ++col) {
    for (int j = 0; j < J; ++j)
      p.blocks[static_cast<size_t>(col)].push_back(make_residual_block(
          table, prefix + ".c" + std::to_string(col + 1) + ".b" + std::to_string(j + 1),
          specs[static_cast<size_t>(j)].channels, eps, momentum, rng));
    if (col == 0 || mode == HcemMode::parallel) continue;
    // 1-based column index for the parity rule
    const int i = col + 1;
    const bool down = mode == HcemMode::top_down ||
                      ((mode == HcemMode::full || mode == HcemMode::literal_odd) && i % 2 == 0);
    // The printed subscript constraint keeps links between branch pairs
    // (1,2) and (2,3) only.
    for (int a = 1; a <= 2 && a + 1 <= J; ++a) {
      typename HcemParams<T>::CrossLink link;
      if (down) {
        link.src = a - 1;
        link.dst = a;
      } else if (mode == HcemMode::literal_odd) {
        link.src = a - 1;  // compatibility: the node's own branch feeds back
        link.dst = a - 1;
      } else {
        link.src = a;
        link.dst = a - 1;
      }
      link.align = make_align(
          table,
          prefix + ".c" + std::to_string(col + 1) + ".x" + std::to_string(link.src + 1) + "to" +
              std::to_string(link.dst + 1),
          specs[static_cast<size_t>(link.src)], specs[static_cast<size_t>(link.dst)], eps,
          momentum, rng);
      p.cross[static_cast<size_t>(col)].push_back(std::move(link));
    }
  }
  return p;
}

template <typename T>
Var stem_forward(Tape<T>& tape, Var image, const StemParams<T>& p, BnMode mode) {
  const Tensor<T>& x = tape.value(image);
  if (x.rank() != 4 || x.extent(1) != 1)
    throw FormatError("stem: expected single-channel image batch, got " + shape_str(x.shape()));
  return tape.relu(apply_bn(tape, apply_conv(tape, image, p.conv), p.bn, mode));
}

template <typename T>
std::vector<Var> build_pyramid(Tape<T>& tape, Var stem_out, const HcemParams<T>& p, BnMode mode) {
  const Tensor<T>& x = tape.value(stem_out);
  if (x.extent(1) != p.specs[0].channels || x.extent(2) != p.specs[0].h ||
      x.extent(3) != p.specs[0].w)
    throw ConfigError("build_pyramid: stem output " + shape_str(x.shape()) +
                      " does not match branch 1 spec");
  std::vector<Var> out{stem_out};
  for (const auto& br : p.pyramid) {
    Var h = stem_out;
    for (const auto& [conv, bn] : br.stages)
      h = tape.relu(apply_bn(tape, apply_conv(tape, h, conv), bn, mode));
    if (br.has_proj) h = apply_conv(tape, h, br.proj);
    out.push_back(h);
  }
  return out;
}

template <typename T>
std::vector<Var> hcem_forward(Tape<T>& tape, const std::vector<Var>& inputs,
                              const HcemParams<T>& p, BnMode mode) {
  const size_t J = p.specs.size();
  if (inputs.size() != J)
    throw ConfigError("hcem_forward: expected " + std::to_string(J) + " branches, got " +
                      std::to_string(inputs.size()));
  std::vector<Var> cur = inputs;
  for (int col = 0; col < p.columns; ++col) {
    std::vector<Var> node_in = cur;
    for (const auto& link : p.cross[static_cast<size_t>(col)]) {
      Var cross = align_forward(tape, cur[static_cast<size_t>(link.src)], link.align, mode);
      node_in[static_cast<size_t>(link.dst)] =
          tape.add(node_in[static_cast<size_t>(link.dst)], cross);
    }
    std::vector<Var> next;
    next.reserve(J);
    for (size_t j = 0; j < J; ++j)
      next.push_back(residual_block(tape, node_in[j], p.blocks[static_cast<size_t>(col)][j], mode));
    cur = std::move(next);
  }
  return cur;
}

#define SSHD_INSTANTIATE(T)                                                                       \
  template AlignParams<T> make_align<T>(ParamTable<T>&, const std::string&, BranchSpec,          \
                                        BranchSpec, double, double, Rng&);                        \
  template Var align_forward<T>(Tape<T>&, Var, const AlignParams<T>&, BnMode);                   \
  template HcemParams<T> make_hcem<T>(ParamTable<T>&, const std::string&,                        \
                                      const std::vector<BranchSpec>&, int, HcemMode, double,     \
                                      double, Rng&);                                              \
  template Var stem_forward<T>(Tape<T>&, Var, const StemParams<T>&, BnMode);                     \
  template std::vector<Var> build_pyramid<T>(Tape<T>&, Var, const HcemParams<T>&, BnMode);       \
  template std::vector<Var> hcem_forward<T>(Tape<T>&, const std::vector<Var>&,                   \
                                            const HcemParams<T>&, BnMode);

SSHD_INSTANTIATE(float)
SSHD_INSTANTIATE(double)

#undef SSHD_INSTANTIATE

}  // namespace sshd
