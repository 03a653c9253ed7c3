#pragma once

#include "sshd/hcem.hpp"
#include "sshd/heatmap.hpp"

namespace sshd {

// Detection head: every branch aligned up to branch-1 resolution, summed,
// 1x1 conv to one channel, sigmoid. The 1x1 conv is zero-initialized so an
// untrained model predicts the uniform 0.5 map.
template <typename T>
struct HeadParams {
  std::vector<BranchSpec> specs;
  std::vector<AlignParams<T>> up;  // branches 2..J -> branch 1 spec
  ConvParams<T> out_conv;
};

template <typename T>
HeadParams<T> make_head(ParamTable<T>& table, const std::string& prefix,
                        const std::vector<BranchSpec>& specs, double eps, double momentum,
                        Rng& rng);

template <typename T>
Var predict_heatmap(Tape<T>& tape, const std::vector<Var>& features, const HeadParams<T>& p,
                    BnMode mode);

// Mean over all pixels and samples of the squared difference.
template <typename T>
Var mse_loss(Tape<T>& tape, Var pred, Var gt);

// [B,1,H,W] tensor -> per-sample heatmaps
template <typename T>
std::vector<Heatmap> heatmaps_from_tensor(const Tensor<T>& t);

template <typename T>
Tensor<T> tensor_from_heatmaps(const std::vector<Heatmap>& hms);

}  // namespace sshd
