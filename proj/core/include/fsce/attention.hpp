#pragma once

#include <cstdint>
#include <string>

#include "fsce/layers.hpp"

namespace fsce {

struct CbamConfig {
  int channels = 0;
  int reduction = 8;
  // false: pooled descriptors are summed before the shared MLP (channel gate)
  // and before the 7x7 conv (spatial gate, one input map).
  // true: the MLP runs on each descriptor and the outputs are summed, and the
  // spatial conv sees [avg, max] stacked as two maps.
  bool legacy_order = false;

  int hidden() const { return std::max(channels / std::max(reduction, 1), 4); }
};

// Convolutional block attention: channel gate then spatial gate.
//   Mc = sigmoid(MLP(avg_hw(F) + max_hw(F))),  F'  = Mc * F
//   Ms = sigmoid(conv7x7(avg_c(F') + max_c(F'))), out = Ms * F'
template <typename T>
class Cbam {
 public:
  Cbam() = default;
  Cbam(const std::string& name, CbamConfig cfg, Rng& rng);

  // gate, when non-null, receives Mc (N, C, 1, 1).
  Var<T> channel_attention(Tape<T>& tape, const Var<T>& f, Var<T>* gate = nullptr) const;
  // gate, when non-null, receives Ms (N, 1, H, W).
  Var<T> spatial_attention(Tape<T>& tape, const Var<T>& f, Var<T>* gate = nullptr) const;
  Var<T> forward(Tape<T>& tape, const Var<T>& f) const;

  void collect(ParamRefs<T>& refs);
  std::uint64_t flops(const Shape& in) const;
  std::uint64_t param_count() const;

  Parameter<T> w1;              // (hidden, C)
  Parameter<T> w2;              // (C, hidden)
  Parameter<T> spatial_kernel;  // (1, 1 or 2, 7, 7)
  CbamConfig cfg;
};

extern template class Cbam<float>;
extern template class Cbam<double>;

}  // namespace fsce
