#include "fsce/wavelet.hpp"

#include <cmath>

#include "fsce/flops.hpp"

namespace fsce {

HaarFilterBank HaarFilterBank::orthonormal() {
  const double r = 1.0 / std::sqrt(2.0);
  HaarFilterBank fb;
  fb.g = {r, r};
  fb.h = {r, -r};
  const std::array<const std::array<double, 2>*, 4> rows = {&fb.g, &fb.g, &fb.h, &fb.h};
  const std::array<const std::array<double, 2>*, 4> cols = {&fb.g, &fb.h, &fb.g, &fb.h};
  for (int k = 0; k < 4; ++k) {
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) fb.filters[k][2 * i + j] = (*rows[k])[i] * (*cols[k])[j];
  }
  return fb;
}

namespace {

// The four orthonormal taps are all +-1/2, so analysis and synthesis are
// written with explicit signs.
template <typename T>
void analysis(const T* x, int H, int W, T* ll, T* lh, T* hl, T* hh) {
  const int h2 = H / 2, w2 = W / 2;
  const T half = T(0.5);
  for (int i = 0; i < h2; ++i) {
    const T* r0 = x + static_cast<std::size_t>(2 * i) * W;
    const T* r1 = r0 + W;
    for (int j = 0; j < w2; ++j) {
      const T a = r0[2 * j], b = r0[2 * j + 1], c = r1[2 * j], d = r1[2 * j + 1];
      const std::size_t o = static_cast<std::size_t>(i) * w2 + j;
      ll[o] = half * (a + b + c + d);
      lh[o] = half * (a - b + c - d);
      hl[o] = half * (a + b - c - d);
      hh[o] = half * (a - b - c + d);
    }
  }
}

template <typename T>
void synthesis_add(const T* ll, const T* lh, const T* hl, const T* hh, int h2, int w2, T* x) {
  const int W = 2 * w2;
  const T half = T(0.5);
  for (int i = 0; i < h2; ++i) {
    T* r0 = x + static_cast<std::size_t>(2 * i) * W;
    T* r1 = r0 + W;
    for (int j = 0; j < w2; ++j) {
      const std::size_t o = static_cast<std::size_t>(i) * w2 + j;
      const T s = ll[o], u = lh[o], v = hl[o], t = hh[o];
      r0[2 * j] += half * (s + u + v + t);
      r0[2 * j + 1] += half * (s - u + v - t);
      r1[2 * j] += half * (s + u - v - t);
      r1[2 * j + 1] += half * (s - u - v + t);
    }
  }
}

template <typename T>
void dwt_planes(const Tensor<T>& x, Tensor<T>& out) {
  const Shape s = x.shape();
  const std::size_t P = s.plane();
  const std::size_t Q = P / 4;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* src = x.data() + (static_cast<std::size_t>(n) * s.c + c) * P;
      T* dst = out.data() + (static_cast<std::size_t>(n) * 4 * s.c + 4 * c) * Q;
      analysis(src, s.h, s.w, dst, dst + Q, dst + 2 * Q, dst + 3 * Q);
    }
  }
}

template <typename T>
void iwt_planes_add(const Tensor<T>& coeffs, Tensor<T>& out) {
  const Shape s = coeffs.shape();
  const int C = s.c / 4;
  const std::size_t Q = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < C; ++c) {
      const T* src = coeffs.data() + (static_cast<std::size_t>(n) * s.c + 4 * c) * Q;
      T* dst = out.data() + (static_cast<std::size_t>(n) * C + c) * 4 * Q;
      synthesis_add(src, src + Q, src + 2 * Q, src + 3 * Q, s.h, s.w, dst);
    }
  }
}

}  // namespace

template <typename T>
Var<T> dwt2(Tape<T>& tape, const Var<T>& x) {
  const Shape s = x->value.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw ShapeError("dwt2: spatial dims must be even, got " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     "; pad the input before the wavelet transform");
  }
  const Shape os{s.n, 4 * s.c, s.h / 2, s.w / 2};
  auto out = make_var(Tensor<T>(os));
  dwt_planes(x->value, out->value);
  flops::Counter::add(flops::haar(os));
  if (needs_grad(tape, {&x})) {
    out->requires_grad = true;
    tape.push("dwt2", [x, out]() {
      if (!out->has_grad()) return;
      // The transform is orthonormal, so its adjoint is the synthesis operator.
      iwt_planes_add(out->grad, x->grad_ref());
    });
  }
  return out;
}

template <typename T>
Var<T> iwt2(Tape<T>& tape, const Var<T>& coeffs) {
  const Shape s = coeffs->value.shape();
  if (s.c % 4 != 0) {
    throw ShapeError("iwt2: channel count " + std::to_string(s.c) + " is not divisible by 4");
  }
  const Shape os{s.n, s.c / 4, 2 * s.h, 2 * s.w};
  auto out = make_var(Tensor<T>(os));
  iwt_planes_add(coeffs->value, out->value);
  flops::Counter::add(flops::haar(os));
  if (needs_grad(tape, {&coeffs})) {
    out->requires_grad = true;
    tape.push("iwt2", [coeffs, out]() {
      if (!out->has_grad()) return;
      Tensor<T> g(coeffs->value.shape());
      dwt_planes(out->grad, g);
      Tensor<T>& dst = coeffs->grad_ref();
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    });
  }
  return out;
}

template <typename T>
WtConv<T>::WtConv(const std::string& name, WtConvConfig cfg_, Rng& rng) : cfg(cfg_) {
  if (cfg.channels < 1) throw ConfigError(name + ": channels must be >= 1");
  if (cfg.stride < 1) throw ConfigError(name + ": stride must be >= 1");
  const int C = cfg.channels;
  const auto c4 = static_cast<std::uint32_t>(4 * C);
  subband_kernels = Parameter<T>(name + ".subband_kernels", {c4, 1, 3, 3}, Shape{4 * C, 1, 3, 3});
  for (int k = 0; k < 4 * C; ++k) subband_kernels.value()[static_cast<std::size_t>(k) * 9 + 4] = T(1);
  gamma = Parameter<T>(name + ".gamma", {c4}, Shape{1, 4 * C, 1, 1});
  gamma.value().fill(T(1));
  base_kernel = Parameter<T>(name + ".base_kernel", {static_cast<std::uint32_t>(C), 1, 3, 3}, Shape{C, 1, 3, 3});
  kaiming_uniform(base_kernel.value(), 9, rng);
}

template <typename T>
Var<T> WtConv<T>::forward(Tape<T>& tape, const Var<T>& x) const {
  const Shape s = x->value.shape();
  if (s.c != cfg.channels) {
    throw ShapeError("wtconv: expected " + std::to_string(cfg.channels) + " channels, got " + std::to_string(s.c));
  }
  const int C = cfg.channels;
  auto coeffs = dwt2(tape, x);
  auto filtered = conv2d(tape, coeffs, subband_kernels.var, Var<T>{}, Conv2dOptions{1, 1, 4 * C});
  auto scaled = mul(tape, filtered, gamma.var);
  auto recon = iwt2(tape, scaled);
  auto base = conv2d(tape, x, base_kernel.var, Var<T>{}, Conv2dOptions{1, 1, C});
  auto y = add(tape, base, recon);
  if (cfg.stride > 1) return avg_pool2d(tape, y, cfg.stride);
  return y;
}

template <typename T>
void WtConv<T>::collect(ParamRefs<T>& refs) {
  refs.params.push_back(&subband_kernels);
  refs.params.push_back(&gamma);
  refs.params.push_back(&base_kernel);
}

template <typename T>
std::uint64_t WtConv<T>::flops(const Shape& in, Shape& out) const {
  const int C = cfg.channels;
  const Shape coeff{in.n, 4 * C, in.h / 2, in.w / 2};
  std::uint64_t f = flops::haar(coeff);
  f += flops::conv(coeff, 1, 3, 3, false);
  f += flops::eltwise(coeff);
  f += flops::haar(in);
  f += flops::conv(in, 1, 3, 3, false);
  f += flops::eltwise(in);
  out = in;
  if (cfg.stride > 1) {
    f += flops::pool(in);
    out = Shape{in.n, in.c, (in.h - cfg.stride) / cfg.stride + 1, (in.w - cfg.stride) / cfg.stride + 1};
  }
  return f;
}

template <typename T>
std::uint64_t WtConv<T>::param_count() const {
  const std::uint64_t C = cfg.channels;
  return 4 * C * 9 + 4 * C + C * 9;
}

#define FSCE_INSTANTIATE_WT(T)                         \
  template Var<T> dwt2(Tape<T>&, const Var<T>&);       \
  template Var<T> iwt2(Tape<T>&, const Var<T>&);       \
  template class WtConv<T>;

FSCE_INSTANTIATE_WT(float)
FSCE_INSTANTIATE_WT(double)

}  // namespace fsce
