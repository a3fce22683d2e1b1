#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "fsce/layers.hpp"

namespace fsce {

// Orthonormal Haar analysis filters. Sub-band order is [LL, LH, HL, HH] with
// phi_AB = outer(A, B): the first factor runs down rows, the second across
// columns, so LH = g (x) h carries the horizontal difference.
struct HaarFilterBank {
  std::array<double, 2> g;
  std::array<double, 2> h;
  // filters[k][2*i + j] is tap (row i, col j) of sub-band k.
  std::array<std::array<double, 4>, 4> filters;

  static HaarFilterBank orthonormal();
};

enum Subband { kLL = 0, kLH = 1, kHL = 2, kHH = 3 };

// Single-level 2-D Haar analysis: (N, C, H, W) -> (N, 4C, H/2, W/2); source
// channel c maps to coefficient channels 4c..4c+3 in [LL, LH, HL, HH] order.
// Odd H or W is rejected; pad the input first.
template <typename T>
Var<T> dwt2(Tape<T>& tape, const Var<T>& x);

// Exact inverse of dwt2: (N, 4C, h, w) -> (N, C, 2h, 2w).
template <typename T>
Var<T> iwt2(Tape<T>& tape, const Var<T>& coeffs);

struct WtConvConfig {
  int channels = 0;
  int stride = 1;
};

// Frequency-branch convolution:
//   S   = gamma * dwconv3x3(dwt2(x))      (per-sub-band depthwise kernels, per-channel scale)
//   Y   = dwconv3x3_base(x) + iwt2(S)
//   out = avgpool(Y, stride) when stride > 1
// Sub-band kernels start as centered deltas and gamma as 1, so a fresh layer
// passes x through the wavelet path unchanged.
template <typename T>
class WtConv {
 public:
  WtConv() = default;
  WtConv(const std::string& name, WtConvConfig cfg, Rng& rng);

  Var<T> forward(Tape<T>& tape, const Var<T>& x) const;
  void collect(ParamRefs<T>& refs);
  std::uint64_t flops(const Shape& in, Shape& out) const;
  std::uint64_t param_count() const;

  Parameter<T> subband_kernels;  // (4C, 1, 3, 3)
  Parameter<T> gamma;            // (1, 4C, 1, 1)
  Parameter<T> base_kernel;      // (C, 1, 3, 3)
  WtConvConfig cfg;
};

extern template class WtConv<float>;
extern template class WtConv<double>;

}  // namespace fsce
