#pragma once

#include <cstdint>

#include "fsce/tensor.hpp"

// FLOP convention shared by the analytic per-layer counter and the runtime
// op counter:
//   one multiply-add = 2 FLOPs
//   conv:       2*Cout*Hout*Wout*(Cin/groups)*kh*kw, + Cout*Hout*Wout with bias
//   linear:     2*in*out, + out with bias
//   batchnorm:  2 per element
//   relu, sigmoid: 1 per element
//   pooling (fixed, adaptive, global, channel-wise): 1 per input element
//   elementwise add / mul: 1 per output element
//   Haar analysis / synthesis: 8 per output element (four taps, multiply-add)
//   concat, split, reshape: 0
namespace fsce::flops {

inline std::uint64_t conv(const Shape& out, int cin_per_group, int kh, int kw, bool bias) {
  std::uint64_t spatial = static_cast<std::uint64_t>(out.n) * out.c * out.h * out.w;
  std::uint64_t f = 2ULL * spatial * static_cast<std::uint64_t>(cin_per_group) * kh * kw;
  if (bias) f += spatial;
  return f;
}
inline std::uint64_t linear(int batch, int in, int out, bool bias) {
  std::uint64_t f = 2ULL * batch * in * out;
  if (bias) f += static_cast<std::uint64_t>(batch) * out;
  return f;
}
inline std::uint64_t batchnorm(const Shape& s) { return 2ULL * s.numel(); }
inline std::uint64_t activation(const Shape& s) { return s.numel(); }
inline std::uint64_t pool(const Shape& in) { return in.numel(); }
inline std::uint64_t eltwise(const Shape& out) { return out.numel(); }
inline std::uint64_t haar(const Shape& out) { return 8ULL * out.numel(); }

// Runtime counter fed by every primitive while a CountScope is alive on the
// current thread.
class Counter {
 public:
  static bool active();
  static void add(std::uint64_t n);
  static std::uint64_t value();
};

class CountScope {
 public:
  CountScope();
  ~CountScope();
  CountScope(const CountScope&) = delete;
  CountScope& operator=(const CountScope&) = delete;
  std::uint64_t total() const;

 private:
  bool prev_active_;
  std::uint64_t prev_value_;
};

}  // namespace fsce::flops
