#pragma once

#include "sshd/hcem.hpp"

namespace sshd {

// Dynamic coordinate fusion: per-branch ODBlock, all-to-all aligned fusion
// sum, per-branch coordinate attention. The ODBlock and CA stages can be
// disabled independently for the ablation variants; fusion always runs.
template <typename T>
struct DcfmParams {
  std::vector<BranchSpec> specs;
  std::vector<OdBlockParams<T>> odblocks;         // per branch
  std::vector<std::vector<AlignParams<T>>> fusion;  // [src][dst], identity on diagonal
  std::vector<CaParams<T>> ca;                    // per branch
  bool use_odblock = true;
  bool use_ca = true;
};

template <typename T>
DcfmParams<T> make_dcfm(ParamTable<T>& table, const std::string& prefix,
                        const std::vector<BranchSpec>& specs, int od_k, int od_n, int r_od,
                        int r_ca, bool use_odblock, bool use_ca, bool ca_literal_wnorm,
                        bool ca_gates_one, double eps, double momentum, Rng& rng);

template <typename T>
std::vector<Var> dcfm_forward(Tape<T>& tape, const std::vector<Var>& features,
                              const DcfmParams<T>& p, BnMode mode,
                              bool force_unit_attention = false);

// Nested two-stage residual refinement; both residuals connect to the stage
// input L4 and the second inner path consumes L4 + H1.
template <typename T>
struct HmrmBranchParams {
  ConvParams<T> conv1a, conv1b, conv2a, conv2b;
  BnParams<T> bn1a, bn1b, bn2a, bn2b;
};

template <typename T>
struct HmrmParams {
  std::vector<BranchSpec> specs;
  std::vector<HmrmBranchParams<T>> branches;
};

template <typename T>
HmrmParams<T> make_hmrm(ParamTable<T>& table, const std::string& prefix,
                        const std::vector<BranchSpec>& specs, double eps, double momentum,
                        Rng& rng);

template <typename T>
std::vector<Var> hmrm_forward(Tape<T>& tape, const std::vector<Var>& features,
                              const HmrmParams<T>& p, BnMode mode);

}  // namespace sshd
