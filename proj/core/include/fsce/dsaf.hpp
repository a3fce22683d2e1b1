#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fsce/attention.hpp"
#include "fsce/layers.hpp"
#include "fsce/wavelet.hpp"

namespace fsce {

struct DsafConfig {
  int in_channels = 0;
  std::vector<int> kernel_sizes{3, 5, 7, 9};
  std::vector<int> paddings{1, 2, 3, 4};
  int cbam_reduction = 8;
  bool cbam_legacy_order = false;
  // A disabled branch passes its half of the channels through unchanged.
  bool spatial = true;
  bool frequency = true;
};

// Dual-branch spatial/frequency block. The first C/2 channels feed the spatial
// branch and the last C/2 the frequency branch:
//   spatial:   [conv_k(xs) for k in kernel_sizes] -> adaptive-avg to the first
//              scale's output dims -> concat -> depthwise 3x3 -> 1x1 -> BN ->
//              ReLU -> CBAM
//   frequency: WTConv(xf) -> BN -> ReLU -> CBAM
//   out = concat(spatial, frequency)
template <typename T>
class Dsaf {
 public:
  Dsaf() = default;
  Dsaf(const std::string& name, DsafConfig cfg, Rng& rng);

  Var<T> forward(Tape<T>& tape, const Var<T>& x, Mode mode);
  void collect(ParamRefs<T>& refs);
  std::uint64_t flops(const Shape& in) const;
  std::uint64_t param_count() const;

  int half() const { return cfg.in_channels / 2; }

  std::vector<Conv2dLayer<T>> scale_convs;
  Conv2dLayer<T> fuse_dw;
  Conv2dLayer<T> fuse_pw;
  BatchNorm2dLayer<T> bn_s;
  Cbam<T> cbam_s;
  WtConv<T> wt;
  BatchNorm2dLayer<T> bn_f;
  Cbam<T> cbam_f;
  DsafConfig cfg;

 private:
  Var<T> spatial_branch(Tape<T>& tape, const Var<T>& xs, Mode mode);
  Var<T> frequency_branch(Tape<T>& tape, const Var<T>& xf, Mode mode);
};

// Background-variance ratio of the block's output to its input (eval mode).
// Background positions are those where the channel mean of x_clean lies at or
// below the midpoint of its per-sample range. The variance of each channel is
// taken over background positions, summed over channels and samples for each
// of output and input. Throws ContractError when the input variance is zero.
template <typename T>
double dsaf_smoothness_probe(Dsaf<T>& block, const Tensor<T>& x_noisy, const Tensor<T>& x_clean);

extern template class Dsaf<float>;
extern template class Dsaf<double>;

}  // namespace fsce
