#pragma once

#include "sshd/nn_blocks.hpp"

namespace sshd {

// Resolution branch j (1-based): channels j*width_mult, spatial /2^(j-1).
struct BranchSpec {
  int index = 1;
  int64_t channels = 0;
  int64_t h = 0, w = 0;
  bool operator==(const BranchSpec& o) const {
    return channels == o.channels && h == o.h && w == o.w;
  }
};

std::vector<BranchSpec> make_branch_specs(int branches, int width_mult, int64_t h, int64_t w);

// Cross-link wiring between columns.
//   full:        high->low at even columns, low->high feedback at odd columns
//   parallel:    no cross links (ablation variant)
//   top_down:    high->low at every column
//   bottom_up:   low->high at every column
//   literal_odd: compatibility wiring, odd columns add the node's own branch
enum class HcemMode { full, parallel, top_down, bottom_up, literal_odd };

HcemMode hcem_mode_from_string(const std::string& s);
std::string hcem_mode_to_string(HcemMode m);

// Resolution/channel alignment between branch specs. Downward: stride-2 3x3
// conv stages (+BN+relu) then a 1x1 channel projection when counts differ.
// Upward: bilinear resize then 1x1 projection. Identity when specs match.
template <typename T>
struct AlignParams {
  BranchSpec src, dst;
  std::vector<std::pair<ConvParams<T>, BnParams<T>>> down_stages;
  ConvParams<T> proj;
  bool has_proj = false;
};

template <typename T>
AlignParams<T> make_align(ParamTable<T>& table, const std::string& prefix, BranchSpec src,
                          BranchSpec dst, double eps, double momentum, Rng& rng);

template <typename T>
Var align_forward(Tape<T>& tape, Var src, const AlignParams<T>& p, BnMode mode);

template <typename T>
struct StemParams {
  ConvParams<T> conv;
  BnParams<T> bn;
};

template <typename T>
struct PyramidBranchParams {
  std::vector<std::pair<ConvParams<T>, BnParams<T>>> stages;  // stride-2, doubling
  ConvParams<T> proj;
  bool has_proj = false;
};

template <typename T>
struct HcemParams {
  std::vector<BranchSpec> specs;
  StemParams<T> stem;
  std::vector<PyramidBranchParams<T>> pyramid;  // branches 2..J
  std::vector<std::vector<ResidualBlockParams<T>>> blocks;  // [column][branch]
  struct CrossLink {
    int dst = 0, src = 0;  // 0-based branch indices
    AlignParams<T> align;
  };
  std::vector<std::vector<CrossLink>> cross;  // [column], empty for column 0
  HcemMode mode = HcemMode::full;
  int columns = 4;
};

template <typename T>
HcemParams<T> make_hcem(ParamTable<T>& table, const std::string& prefix,
                        const std::vector<BranchSpec>& specs, int columns, HcemMode mode,
                        double eps, double momentum, Rng& rng);

template <typename T>
Var stem_forward(Tape<T>& tape, Var image, const StemParams<T>& p, BnMode mode);

template <typename T>
std::vector<Var> build_pyramid(Tape<T>& tape, Var stem_out, const HcemParams<T>& p, BnMode mode);

template <typename T>
std::vector<Var> hcem_forward(Tape<T>& tape, const std::vector<Var>& inputs,
                              const HcemParams<T>& p, BnMode mode);

}  // namespace sshd
