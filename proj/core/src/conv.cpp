#include <Eigen/Core>
#include <algorithm>
#include <vector>

#include "fsce/flops.hpp"
#include "fsce/ops.hpp"
#include "fsce/parallel.hpp"
#include "reduce.hpp"

namespace fsce {
namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

struct ConvGeom {
  int n, cin, h, w;
  int cout, kh, kw;
  int stride, pad, groups;
  int ho, wo;
  int cin_g() const { return cin / groups; }
  int cout_g() const { return cout / groups; }
  int k() const { return cin_g() * kh * kw; }
  int p() const { return ho * wo; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
  bool depthwise() const { return groups == cin && groups == cout; }
};

// Per-thread buffer of at least n elements, reused across calls. Contents are
// unspecified; callers overwrite what they read.
template <typename T, int Slot>
T* scratch(std::size_t n) {
  thread_local std::vector<T> buf;
  if (buf.size() < n) buf.resize(n);
  return buf.data();
}

// Valid output range [lo, hi) along one axis for kernel offset k.
inline void valid_range(int out_len, int in_len, int stride, int pad, int k, int& lo, int& hi) {
  // need 0 <= o*stride + k - pad < in_len
  int off = k - pad;
  lo = off >= 0 ? 0 : std::min(out_len, (-off + stride - 1) / stride);
  int last = in_len - 1 - off;  // o*stride <= last
  hi = last < 0 ? 0 : std::min(out_len, last / stride + 1);
  if (hi < lo) hi = lo;
}

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* col) {
  const int P = g.p();
  for (int ci = 0; ci < g.cin_g(); ++ci) {
    const T* xc = x + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ki = 0; ki < g.kh; ++ki) {
      int oh_lo, oh_hi;
      valid_range(g.ho, g.h, g.stride, g.pad, ki, oh_lo, oh_hi);
      for (int kj = 0; kj < g.kw; ++kj) {
        int ow_lo, ow_hi;
        valid_range(g.wo, g.w, g.stride, g.pad, kj, ow_lo, ow_hi);
        T* row = col + (static_cast<std::size_t>(ci * g.kh + ki) * g.kw + kj) * P;
        std::fill(row, row + static_cast<std::size_t>(oh_lo) * g.wo, T(0));
        std::fill(row + static_cast<std::size_t>(oh_hi) * g.wo, row + P, T(0));
        for (int oh = oh_lo; oh < oh_hi; ++oh) {
          const T* src = xc + static_cast<std::size_t>(oh * g.stride + ki - g.pad) * g.w;
          T* dst = row + static_cast<std::size_t>(oh) * g.wo;
          std::fill(dst, dst + ow_lo, T(0));
          std::fill(dst + ow_hi, dst + g.wo, T(0));
          if (g.stride == 1) {
            const int base = kj - g.pad;
            for (int ow = ow_lo; ow < ow_hi; ++ow) dst[ow] = src[ow + base];
          } else {
            for (int ow = ow_lo; ow < ow_hi; ++ow) dst[ow] = src[ow * g.stride + kj - g.pad];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeom& g, T* dx) {
  const int P = g.p();
  for (int ci = 0; ci < g.cin_g(); ++ci) {
    T* xc = dx + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ki = 0; ki < g.kh; ++ki) {
      int oh_lo, oh_hi;
      valid_range(g.ho, g.h, g.stride, g.pad, ki, oh_lo, oh_hi);
      for (int kj = 0; kj < g.kw; ++kj) {
        int ow_lo, ow_hi;
        valid_range(g.wo, g.w, g.stride, g.pad, kj, ow_lo, ow_hi);
        const T* row = col + (static_cast<std::size_t>(ci * g.kh + ki) * g.kw + kj) * P;
        for (int oh = oh_lo; oh < oh_hi; ++oh) {
          T* dst = xc + static_cast<std::size_t>(oh * g.stride + ki - g.pad) * g.w;
          const T* src = row + static_cast<std::size_t>(oh) * g.wo;
          if (g.stride == 1) {
            const int base = kj - g.pad;
            for (int ow = ow_lo; ow < ow_hi; ++ow) dst[ow + base] += src[ow];
          } else {
            for (int ow = ow_lo; ow < ow_hi; ++ow) dst[ow * g.stride + kj - g.pad] += src[ow];
          }
        }
      }
    }
  }
}

// Single-plane kernels: one input plane, one kernel, one output plane. Used
// for depthwise convolution and for direct convolution of narrow layers.
template <typename T>
void plane_forward_add(const T* x, const T* wk, const ConvGeom& g, T* y) {
  for (int ki = 0; ki < g.kh; ++ki) {
    int oh_lo, oh_hi;
    valid_range(g.ho, g.h, g.stride, g.pad, ki, oh_lo, oh_hi);
    for (int kj = 0; kj < g.kw; ++kj) {
      int ow_lo, ow_hi;
      valid_range(g.wo, g.w, g.stride, g.pad, kj, ow_lo, ow_hi);
      const T wv = wk[ki * g.kw + kj];
      for (int oh = oh_lo; oh < oh_hi; ++oh) {
        const T* src = x + static_cast<std::size_t>(oh * g.stride + ki - g.pad) * g.w;
        T* dst = y + static_cast<std::size_t>(oh) * g.wo;
        if (g.stride == 1) {
          const int base = kj - g.pad;
          for (int ow = ow_lo; ow < ow_hi; ++ow) dst[ow] += wv * src[ow + base];
        } else {
          for (int ow = ow_lo; ow < ow_hi; ++ow) dst[ow] += wv * src[ow * g.stride + kj - g.pad];
        }
      }
    }
  }
}

template <typename T>
void plane_backward(const T* x, const T* wk, const T* dy, const ConvGeom& g, T* dx, T* dw) {
  for (int ki = 0; ki < g.kh; ++ki) {
    int oh_lo, oh_hi;
    valid_range(g.ho, g.h, g.stride, g.pad, ki, oh_lo, oh_hi);
    for (int kj = 0; kj < g.kw; ++kj) {
      int ow_lo, ow_hi;
      valid_range(g.wo, g.w, g.stride, g.pad, kj, ow_lo, ow_hi);
      const T wv = wk[ki * g.kw + kj];
      const int len = ow_hi - ow_lo;
      T acc = 0;
      for (int oh = oh_lo; oh < oh_hi; ++oh) {
        const std::size_t in_row = static_cast<std::size_t>(oh * g.stride + ki - g.pad) * g.w;
        const T* g_out = dy + static_cast<std::size_t>(oh) * g.wo;
        const T* src = x + in_row;
        T* dsrc = dx ? dx + in_row : nullptr;
        if (g.stride == 1) {
          const int base = kj - g.pad;
          if (dw && len > 0) {
            acc += detail::dot_fixed(g_out + ow_lo, src + ow_lo + base, static_cast<std::size_t>(len));
          }
          if (dsrc) {
            for (int ow = ow_lo; ow < ow_hi; ++ow) dsrc[ow + base] += wv * g_out[ow];
          }
        } else {
          for (int ow = ow_lo; ow < ow_hi; ++ow) {
            const int iw = ow * g.stride + kj - g.pad;
            acc += g_out[ow] * src[iw];
            if (dsrc) dsrc[iw] += wv * g_out[ow];
          }
        }
      }
      if (dw) dw[ki * g.kw + kj] += acc;
    }
  }
}

// Stride-1 direct convolution on zero-padded planes. Used for depthwise
// layers and for narrow layers with large kernels, where im2col would build a
// large K x P matrix for a GEMM with only a few output rows.
bool use_direct(const ConvGeom& g) {
  if (g.stride != 1 || g.pad > g.kh - 1 || g.pad > g.kw - 1) return false;
  return g.depthwise() || (g.kh >= 5 && g.cout_g() * g.cin_g() <= 64);
}

// Copies c planes of h x w into a per-thread buffer with a zero border of ph
// rows and pw columns.
template <typename T, int Slot>
const T* pad_planes(const T* src, int c, int h, int w, int ph, int pw) {
  const int hp = h + 2 * ph, wp = w + 2 * pw;
  T* dst = scratch<T, Slot>(static_cast<std::size_t>(c) * hp * wp);
  for (int ch = 0; ch < c; ++ch) {
    T* plane = dst + static_cast<std::size_t>(ch) * hp * wp;
    std::fill(plane, plane + static_cast<std::size_t>(ph) * wp, T(0));
    std::fill(plane + static_cast<std::size_t>(ph + h) * wp, plane + static_cast<std::size_t>(hp) * wp, T(0));
    for (int i = 0; i < h; ++i) {
      T* row = plane + static_cast<std::size_t>(i + ph) * wp;
      std::fill(row, row + pw, T(0));
      std::copy_n(src + (static_cast<std::size_t>(ch) * h + i) * w, w, row + pw);
      std::fill(row + pw + w, row + wp, T(0));
    }
  }
  return dst;
}

// y[co] += sum_ci w[co][ci] (*) xp[ci], valid correlation of padded planes.
template <typename T>
void direct_forward(const T* __restrict xp, int cin, int hp, int wp, const T* __restrict w, int cout, int kh,
                    int kw, T* __restrict y, int ho, int wo) {
  for (int co = 0; co < cout; ++co) {
    T* yc = y + static_cast<std::size_t>(co) * ho * wo;
    for (int ci = 0; ci < cin; ++ci) {
      const T* xc = xp + static_cast<std::size_t>(ci) * hp * wp;
      const T* wk = w + (static_cast<std::size_t>(co) * cin + ci) * kh * kw;
      for (int oh = 0; oh < ho; ++oh) {
        T* __restrict yr = yc + static_cast<std::size_t>(oh) * wo;
        for (int ki = 0; ki < kh; ++ki) {
          const T* xr = xc + static_cast<std::size_t>(oh + ki) * wp;
          for (int kj = 0; kj < kw; ++kj) {
            const T wv = wk[ki * kw + kj];
            const T* __restrict src = xr + kj;
            for (int ow = 0; ow < wo; ++ow) yr[ow] += wv * src[ow];
          }
        }
      }
    }
  }
}

// dw[co][ci][ki][kj] += sum_{oh,ow} dy[co][oh][ow] xp[ci][oh+ki][ow+kj]. Products
// are accumulated per tap along the row and reduced once at the end.
template <typename T>
void direct_weight_grad(const T* __restrict xp, int cin, int hp, int wp, const T* __restrict dy, int cout, int kh,
                        int kw, int ho, int wo, T* __restrict dw) {
  const int taps = kh * kw;
  std::vector<T> acc(static_cast<std::size_t>(taps) * wo);
  for (int co = 0; co < cout; ++co) {
    for (int ci = 0; ci < cin; ++ci) {
      std::fill(acc.begin(), acc.end(), T(0));
      const T* xc = xp + static_cast<std::size_t>(ci) * hp * wp;
      const T* dc = dy + static_cast<std::size_t>(co) * ho * wo;
      for (int oh = 0; oh < ho; ++oh) {
        const T* __restrict gr = dc + static_cast<std::size_t>(oh) * wo;
        for (int ki = 0; ki < kh; ++ki) {
          const T* xr = xc + static_cast<std::size_t>(oh + ki) * wp;
          for (int kj = 0; kj < kw; ++kj) {
            T* __restrict a = acc.data() + static_cast<std::size_t>(ki * kw + kj) * wo;
            const T* __restrict src = xr + kj;
            for (int ow = 0; ow < wo; ++ow) a[ow] += gr[ow] * src[ow];
          }
        }
      }
      T* d = dw + (static_cast<std::size_t>(co) * cin + ci) * taps;
      for (int t = 0; t < taps; ++t) {
        const T* a = acc.data() + static_cast<std::size_t>(t) * wo;
        T sum = 0;
        for (int ow = 0; ow < wo; ++ow) sum += a[ow];
        d[t] += sum;
      }
    }
  }
}

ConvGeom make_geom(const Shape& xs, const Shape& ws, const Conv2dOptions& opt) {
  if (opt.groups < 1) throw ConfigError("conv2d: groups must be >= 1");
  if (opt.stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (opt.padding < 0) throw ConfigError("conv2d: padding must be >= 0");
  if (xs.c % opt.groups != 0) {
    throw ConfigError("conv2d: input channels " + std::to_string(xs.c) + " not divisible by groups " +
                      std::to_string(opt.groups));
  }
  if (ws.n % opt.groups != 0) {
    throw ConfigError("conv2d: output channels " + std::to_string(ws.n) +
                      " not divisible by groups " + std::to_string(opt.groups));
  }
  if (ws.c != xs.c / opt.groups) {
    throw ConfigError("conv2d: weight in-channel dimension " + std::to_string(ws.c) + " != Cin/groups " +
                     std::to_string(xs.c / opt.groups));
  }
  if (ws.h % 2 == 0 || ws.w % 2 == 0) {
    throw ConfigError("conv2d: kernel dims must be odd, got " + std::to_string(ws.h) + "x" +
                      std::to_string(ws.w));
  }
  ConvGeom g{xs.n, xs.c, xs.h, xs.w, ws.n, ws.h, ws.w, opt.stride, opt.padding, opt.groups, 0, 0};
  g.ho = conv_out_dim(xs.h, ws.h, opt.stride, opt.padding);
  g.wo = conv_out_dim(xs.w, ws.w, opt.stride, opt.padding);
  if (g.ho < 1) throw ShapeError("conv2d: output height < 1 for input height " + std::to_string(xs.h));
  if (g.wo < 1) throw ShapeError("conv2d: output width < 1 for input width " + std::to_string(xs.w));
  return g;
}

}  // namespace

template <typename T>
Var<T> conv2d(Tape<T>& tape, const Var<T>& x, const Var<T>& weight, const Var<T>& bias,
              Conv2dOptions opt) {
  const ConvGeom g = make_geom(x->value.shape(), weight->value.shape(), opt);
  if (bias && bias->value.size() != static_cast<std::size_t>(g.cout)) {
    throw ConfigError("conv2d: bias length " + std::to_string(bias->value.size()) +
                     " != output channels " + std::to_string(g.cout));
  }
  const Shape out_shape{g.n, g.cout, g.ho, g.wo};
  auto out = make_var(Tensor<T>(out_shape));
  const T* xd = x->value.data();
  const T* wd = weight->value.data();
  T* yd = out->value.data();
  const int P = g.p();
  const int K = g.k();
  const std::size_t x_stride = static_cast<std::size_t>(g.cin) * g.h * g.w;
  const std::size_t y_stride = static_cast<std::size_t>(g.cout) * P;

  if (use_direct(g)) {
    const std::size_t wg = static_cast<std::size_t>(g.cout_g()) * K;
    const int hp = g.h + 2 * g.pad, wp = g.w + 2 * g.pad;
    parallel_for(g.n, [&](int n) {
      const T* xp = pad_planes<T, 2>(xd + n * x_stride, g.cin, g.h, g.w, g.pad, g.pad);
      for (int gi = 0; gi < g.groups; ++gi) {
        direct_forward(xp + static_cast<std::size_t>(gi) * g.cin_g() * hp * wp, g.cin_g(), hp, wp,
                       wd + gi * wg, g.cout_g(), g.kh, g.kw,
                       yd + n * y_stride + static_cast<std::size_t>(gi) * g.cout_g() * P, g.ho, g.wo);
      }
    });
  } else if (g.depthwise()) {
    parallel_for(g.n, [&](int n) {
      for (int c = 0; c < g.cin; ++c) {
        plane_forward_add(xd + n * x_stride + static_cast<std::size_t>(c) * g.h * g.w,
                          wd + static_cast<std::size_t>(c) * g.kh * g.kw, g,
                          yd + n * y_stride + static_cast<std::size_t>(c) * P);
      }
    });
  } else {
    parallel_for(g.n, [&](int n) {
      T* col = g.pointwise() ? nullptr : scratch<T, 0>(static_cast<std::size_t>(K) * P);
      for (int gi = 0; gi < g.groups; ++gi) {
        const T* xg = xd + n * x_stride + static_cast<std::size_t>(gi) * g.cin_g() * g.h * g.w;
        const T* src = xg;
        if (col) {
          im2col(xg, g, col);
          src = col;
        }
        CMapR<T> wm(wd + static_cast<std::size_t>(gi) * g.cout_g() * K, g.cout_g(), K);
        CMapR<T> cm(src, K, P);
        MapR<T> ym(yd + n * y_stride + static_cast<std::size_t>(gi) * g.cout_g() * P, g.cout_g(), P);
        ym.noalias() = wm * cm;
      }
    });
  }
  if (bias) {
    const T* bd = bias->value.data();
    for (int n = 0; n < g.n; ++n) {
      for (int c = 0; c < g.cout; ++c) {
        T* row = yd + n * y_stride + static_cast<std::size_t>(c) * P;
        const T b = bd[c];
        for (int p = 0; p < P; ++p) row[p] += b;
      }
    }
  }
  flops::Counter::add(flops::conv(out_shape, g.cin_g(), g.kh, g.kw, static_cast<bool>(bias)));

  if (needs_grad(tape, {&x, &weight, &bias})) {
    out->requires_grad = true;
    tape.push("conv2d", [x, weight, bias, out, g]() {
      if (!out->has_grad()) return;
      const T* dy = out->grad.data();
      const T* xd = x->value.data();
      const T* wd = weight->value.data();
      const int P = g.p();
      const int K = g.k();
      const std::size_t x_stride = static_cast<std::size_t>(g.cin) * g.h * g.w;
      const std::size_t y_stride = static_cast<std::size_t>(g.cout) * P;
      T* dx = x->requires_grad ? x->grad_ref().data() : nullptr;
      T* dw = weight->requires_grad ? weight->grad_ref().data() : nullptr;

      if (bias && bias->requires_grad) {
        T* db = bias->grad_ref().data();
        for (int c = 0; c < g.cout; ++c) {
          T acc = 0;
          for (int n = 0; n < g.n; ++n) {
            const T* row = dy + n * y_stride + static_cast<std::size_t>(c) * P;
            T s = 0;
            for (int p = 0; p < P; ++p) s += row[p];
            acc += s;
          }
          db[c] += acc;
        }
      }

      if (use_direct(g)) {
        const std::size_t wsize = static_cast<std::size_t>(g.cout) * K;
        const std::size_t wg = static_cast<std::size_t>(g.cout_g()) * K;
        const int taps = g.kh * g.kw;
        // dx is the forward correlation of dy, padded by k - 1 - pad, with the
        // flipped kernel transposed over (cout, cin) within each group.
        std::vector<T> wflip;
        if (dx) {
          wflip.resize(wsize);
          for (int gi = 0; gi < g.groups; ++gi)
            for (int co = 0; co < g.cout_g(); ++co)
              for (int ci = 0; ci < g.cin_g(); ++ci)
                for (int t = 0; t < taps; ++t) {
                  wflip[gi * wg + (static_cast<std::size_t>(ci) * g.cout_g() + co) * taps + (taps - 1 - t)] =
                      wd[gi * wg + (static_cast<std::size_t>(co) * g.cin_g() + ci) * taps + t];
                }
        }
        const int hp = g.h + 2 * g.pad, wp = g.w + 2 * g.pad;
        const int qh = g.kh - 1 - g.pad, qw = g.kw - 1 - g.pad;
        const int hq = g.ho + 2 * qh, wq = g.wo + 2 * qw;
        std::vector<T> partial(dw ? wsize * g.n : 0, T(0));
        parallel_for(g.n, [&](int n) {
          if (dw) {
            const T* buf = pad_planes<T, 2>(xd + n * x_stride, g.cin, g.h, g.w, g.pad, g.pad);
            for (int gi = 0; gi < g.groups; ++gi) {
              direct_weight_grad(buf + static_cast<std::size_t>(gi) * g.cin_g() * hp * wp, g.cin_g(), hp, wp,
                                 dy + n * y_stride + static_cast<std::size_t>(gi) * g.cout_g() * P, g.cout_g(),
                                 g.kh, g.kw, g.ho, g.wo, partial.data() + n * wsize + gi * wg);
            }
          }
          if (dx) {
            const T* buf = pad_planes<T, 3>(dy + n * y_stride, g.cout, g.ho, g.wo, qh, qw);
            for (int gi = 0; gi < g.groups; ++gi) {
              direct_forward(buf + static_cast<std::size_t>(gi) * g.cout_g() * hq * wq, g.cout_g(), hq, wq,
                             wflip.data() + gi * wg, g.cin_g(), g.kh, g.kw,
                             dx + n * x_stride + static_cast<std::size_t>(gi) * g.cin_g() * g.h * g.w, g.h, g.w);
            }
          }
        });
        if (dw) {
          for (int n = 0; n < g.n; ++n) {
            const T* src = partial.data() + n * wsize;
            for (std::size_t i = 0; i < wsize; ++i) dw[i] += src[i];
          }
        }
        return;
      }

      if (g.depthwise()) {
        const std::size_t wsize = static_cast<std::size_t>(g.cout) * g.kh * g.kw;
        // Per-sample weight partials are summed in sample order afterwards so the
        // result does not depend on the worker count.
        std::vector<T> partial(dw ? wsize * g.n : 0, T(0));
        parallel_for(g.n, [&](int n) {
          for (int c = 0; c < g.cin; ++c) {
            const std::size_t plane = static_cast<std::size_t>(c) * g.h * g.w;
            plane_backward(xd + n * x_stride + plane, wd + static_cast<std::size_t>(c) * g.kh * g.kw,
                              dy + n * y_stride + static_cast<std::size_t>(c) * P, g,
                              dx ? dx + n * x_stride + plane : nullptr,
                              dw ? partial.data() + n * wsize + static_cast<std::size_t>(c) * g.kh * g.kw
                                 : nullptr);
          }
        });
        if (dw) {
          for (int n = 0; n < g.n; ++n) {
            const T* src = partial.data() + n * wsize;
            for (std::size_t i = 0; i < wsize; ++i) dw[i] += src[i];
          }
        }
        return;
      }

      const std::size_t wsize = static_cast<std::size_t>(g.cout) * K;
      const int workers = std::max(1, std::min(thread_cap(), g.n));
      // Samples are processed in waves of `workers`; each sample's weight
      // contribution lands in its own slot and slots are added in sample order.
      std::vector<T> partial(dw ? wsize * workers : 0);
      for (int wave = 0; wave < g.n; wave += workers) {
        const int count = std::min(workers, g.n - wave);
        parallel_for(count, [&](int slot) {
          const int n = wave + slot;
          T* col = g.pointwise() ? nullptr : scratch<T, 0>(static_cast<std::size_t>(K) * P);
          T* dcol = dx ? scratch<T, 1>(static_cast<std::size_t>(K) * P) : nullptr;
          for (int gi = 0; gi < g.groups; ++gi) {
            const std::size_t xoff = n * x_stride + static_cast<std::size_t>(gi) * g.cin_g() * g.h * g.w;
            const T* src = xd + xoff;
            if (col) {
              im2col(xd + xoff, g, col);
              src = col;
            }
            CMapR<T> dym(dy + n * y_stride + static_cast<std::size_t>(gi) * g.cout_g() * P, g.cout_g(), P);
            if (dw) {
              MapR<T> pw(partial.data() + slot * wsize + static_cast<std::size_t>(gi) * g.cout_g() * K,
                         g.cout_g(), K);
              CMapR<T> cm(src, K, P);
              pw.noalias() = dym * cm.transpose();
            }
            if (dx) {
              CMapR<T> wm(wd + static_cast<std::size_t>(gi) * g.cout_g() * K, g.cout_g(), K);
              if (g.pointwise()) {
                MapR<T> dxm(dx + xoff, K, P);
                MapR<T> dcm(dcol, K, P);
                dcm.noalias() = wm.transpose() * dym;
                dxm += dcm;
              } else {
                MapR<T> dcm(dcol, K, P);
                dcm.noalias() = wm.transpose() * dym;
                col2im_add(dcol, g, dx + xoff);
              }
            }
          }
        });
        if (dw) {
          for (int slot = 0; slot < count; ++slot) {
            const T* src = partial.data() + slot * wsize;
            for (std::size_t i = 0; i < wsize; ++i) dw[i] += src[i];
          }
        }
      }
    });
  }
  return out;
}

template Var<float> conv2d(Tape<float>&, const Var<float>&, const Var<float>&, const Var<float>&,
                           Conv2dOptions);
template Var<double> conv2d(Tape<double>&, const Var<double>&, const Var<double>&, const Var<double>&,
                            Conv2dOptions);

}  // namespace fsce
