#include <algorithm>
#include <limits>

#include "fsce/flops.hpp"
#include "fsce/ops.hpp"

namespace fsce {
namespace {

int window_out(int in, int window, int stride) { return (in - window) / stride + 1; }

void check_window(const Shape& s, int window, int stride, const char* op) {
  if (window < 1) throw ConfigError(std::string(op) + ": window must be >= 1");
  if (stride < 1) throw ConfigError(std::string(op) + ": stride must be >= 1");
  if (window > s.h || window > s.w) {
    throw ShapeError(std::string(op) + ": window " + std::to_string(window) + " exceeds input " + s.str());
  }
}

}  // namespace

template <typename T>
Var<T> avg_pool2d(Tape<T>& tape, const Var<T>& x, int window, int stride) {
  if (stride == 0) stride = window;
  const Shape in = x->value.shape();
  check_window(in, window, stride, "avg_pool2d");
  const Shape os{in.n, in.c, window_out(in.h, window, stride), window_out(in.w, window, stride)};
  auto out = make_var(Tensor<T>(os));
  const T inv = T(1) / static_cast<T>(window * window);
  const T* xd = x->value.data();
  T* yd = out->value.data();
  for (int nc = 0; nc < in.n * in.c; ++nc) {
    const T* xp = xd + static_cast<std::size_t>(nc) * in.plane();
    T* yp = yd + static_cast<std::size_t>(nc) * os.plane();
    for (int oh = 0; oh < os.h; ++oh) {
      for (int ow = 0; ow < os.w; ++ow) {
        T acc = 0;
        for (int i = 0; i < window; ++i) {
          const T* row = xp + static_cast<std::size_t>(oh * stride + i) * in.w + ow * stride;
          for (int j = 0; j < window; ++j) acc += row[j];
        }
        yp[oh * os.w + ow] = acc * inv;
      }
    }
  }
  flops::Counter::add(flops::pool(in));
  if (needs_grad(tape, {&x})) {
    out->requires_grad = true;
    tape.push("avg_pool2d", [x, out, window, stride, in, os, inv]() {
      if (!out->has_grad()) return;
      T* dx = x->grad_ref().data();
      const T* dy = out->grad.data();
      for (int nc = 0; nc < in.n * in.c; ++nc) {
        T* xp = dx + static_cast<std::size_t>(nc) * in.plane();
        const T* yp = dy + static_cast<std::size_t>(nc) * os.plane();
        for (int oh = 0; oh < os.h; ++oh) {
          for (int ow = 0; ow < os.w; ++ow) {
            const T gv = yp[oh * os.w + ow] * inv;
            for (int i = 0; i < window; ++i) {
              T* row = xp + static_cast<std::size_t>(oh * stride + i) * in.w + ow * stride;
              for (int j = 0; j < window; ++j) row[j] += gv;
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Var<T> max_pool2d(Tape<T>& tape, const Var<T>& x, int window, int stride) {
  if (stride == 0) stride = window;
  const Shape in = x->value.shape();
  check_window(in, window, stride, "max_pool2d");
  const Shape os{in.n, in.c, window_out(in.h, window, stride), window_out(in.w, window, stride)};
  auto out = make_var(Tensor<T>(os));
  std::vector<std::size_t> argmax(os.numel());
  const T* xd = x->value.data();
  T* yd = out->value.data();
  for (int nc = 0; nc < in.n * in.c; ++nc) {
    const std::size_t base = static_cast<std::size_t>(nc) * in.plane();
    for (int oh = 0; oh < os.h; ++oh) {
      for (int ow = 0; ow < os.w; ++ow) {
        std::size_t best = base + static_cast<std::size_t>(oh * stride) * in.w + ow * stride;
        T best_v = xd[best];
        for (int i = 0; i < window; ++i) {
          for (int j = 0; j < window; ++j) {
            const std::size_t idx = base + static_cast<std::size_t>(oh * stride + i) * in.w + ow * stride + j;
            // strict comparison keeps the first maximum in row-major scan order
            if (xd[idx] > best_v) {
              best_v = xd[idx];
              best = idx;
            }
          }
        }
        const std::size_t o = static_cast<std::size_t>(nc) * os.plane() + oh * os.w + ow;
        yd[o] = best_v;
        argmax[o] = best;
      }
    }
  }
  flops::Counter::add(flops::pool(in));
  if (needs_grad(tape, {&x})) {
    out->requires_grad = true;
    tape.push("max_pool2d", [x, out, argmax = std::move(argmax)]() {
      if (!out->has_grad()) return;
      T* dx = x->grad_ref().data();
      const T* dy = out->grad.data();
      for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += dy[o];
    });
  }
  return out;
}

template <typename T>
Var<T> adaptive_avg_pool2d(Tape<T>& tape, const Var<T>& x, int out_h, int out_w) {
  const Shape in = x->value.shape();
  if (out_h < 1 || out_w < 1) throw ConfigError("adaptive_avg_pool2d: target dims must be >= 1");
  if (out_h > in.h || out_w > in.w) {
    throw ShapeError("adaptive_avg_pool2d: target " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                     " exceeds input " + in.str());
  }
  const Shape os{in.n, in.c, out_h, out_w};
  auto bin = [](int i, int in_len, int out_len, int& lo, int& hi) {
    lo = (i * in_len) / out_len;
    hi = ((i + 1) * in_len + out_len - 1) / out_len;
  };
  auto out = make_var(Tensor<T>(os));
  const T* xd = x->value.data();
  T* yd = out->value.data();
  for (int nc = 0; nc < in.n * in.c; ++nc) {
    const T* xp = xd + static_cast<std::size_t>(nc) * in.plane();
    T* yp = yd + static_cast<std::size_t>(nc) * os.plane();
    for (int oh = 0; oh < out_h; ++oh) {
      int h0, h1;
      bin(oh, in.h, out_h, h0, h1);
      for (int ow = 0; ow < out_w; ++ow) {
        int w0, w1;
        bin(ow, in.w, out_w, w0, w1);
        T acc = 0;
        for (int i = h0; i < h1; ++i)
          for (int j = w0; j < w1; ++j) acc += xp[i * in.w + j];
        yp[oh * out_w + ow] = acc / static_cast<T>((h1 - h0) * (w1 - w0));
      }
    }
  }
  flops::Counter::add(flops::pool(in));
  if (needs_grad(tape, {&x})) {
    out->requires_grad = true;
    tape.push("adaptive_avg_pool2d", [x, out, in, os, bin]() {
      if (!out->has_grad()) return;
      T* dx = x->grad_ref().data();
      const T* dy = out->grad.data();
      for (int nc = 0; nc < in.n * in.c; ++nc) {
        T* xp = dx + static_cast<std::size_t>(nc) * in.plane();
        const T* yp = dy + static_cast<std::size_t>(nc) * os.plane();
        for (int oh = 0; oh < os.h; ++oh) {
          int h0, h1;
          bin(oh, in.h, os.h, h0, h1);
          for (int ow = 0; ow < os.w; ++ow) {
            int w0, w1;
            bin(ow, in.w, os.w, w0, w1);
            const T gv = yp[oh * os.w + ow] / static_cast<T>((h1 - h0) * (w1 - w0));
            for (int i = h0; i < h1; ++i)
              for (int j = w0; j < w1; ++j) xp[i * in.w + j] += gv;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Var<T> pool(Tape<T>& tape, const Var<T>& x, PoolKind kind, int dim_h, int dim_w) {
  if (dim_h == 0 || dim_w == 0) throw ConfigError("pool: window/target dimension of 0");
  switch (kind) {
    case PoolKind::avg:
      if (dim_h != dim_w) throw ConfigError("pool: only square windows are supported");
      return avg_pool2d(tape, x, dim_h);
    case PoolKind::max:
      if (dim_h != dim_w) throw ConfigError("pool: only square windows are supported");
      return max_pool2d(tape, x, dim_h);
    case PoolKind::adaptive_avg:
      return adaptive_avg_pool2d(tape, x, dim_h, dim_w);
  }
  throw ConfigError("pool: unknown kind");
}

template <typename T>
Var<T> spatial_mean(Tape<T>& tape, const Var<T>& x) {
  const Shape in = x->value.shape();
  const Shape os{in.n, in.c, 1, 1};
  auto out = make_var(Tensor<T>(os));
  const std::size_t P = in.plane();
  const T inv = T(1) / static_cast<T>(P);
  for (int nc = 0; nc < in.n * in.c; ++nc) {
    const T* xp = x->value.data() + nc * P;
    T acc = 0;
    for (std::size_t p = 0; p < P; ++p) acc += xp[p];
    out->value[nc] = acc * inv;
  }
  flops::Counter::add(flops::pool(in));
  if (needs_grad(tape, {&x})) {
    out->requires_grad = true;
    tape.push("spatial_mean", [x, out, P, inv, in]() {
      if (!out->has_grad()) return;
      T* dx = x->grad_ref().data();
      for (int nc = 0; nc < in.n * in.c; ++nc) {
        const T gv = out->grad[nc] * inv;
        T* xp = dx + nc * P;
        for (std::size_t p = 0; p < P; ++p) xp[p] += gv;
      }
    });
  }
  return out;
}

template <typename T>
Var<T> spatial_max(Tape<T>& tape, const Var<T>& x) {
  const Shape in = x->value.shape();
  const Shape os{in.n, in.c, 1, 1};
  auto out = make_var(Tensor<T>(os));
  const std::size_t P = in.plane();
  std::vector<std::size_t> arg(os.numel());
  for (int nc = 0; nc < in.n * in.c; ++nc) {
    const T* xp = x->value.data() + nc * P;
    std::size_t best = 0;
    for (std::size_t p = 1; p < P; ++p) {
      if (xp[p] > xp[best]) best = p;
    }
    out->value[nc] = xp[best];
    arg[nc] = nc * P + best;
  }
  flops::Counter::add(flops::pool(in));
  if (needs_grad(tape, {&x})) {
    out->requires_grad = true;
    tape.push("spatial_max", [x, out, arg = std::move(arg)]() {
      if (!out->has_grad()) return;
      T* dx = x->grad_ref().data();
      for (std::size_t i = 0; i < arg.size(); ++i) dx[arg[i]] += out->grad[i];
    });
  }
  return out;
}

template <typename T>
Var<T> channel_mean(Tape<T>& tape, const Var<T>& x) {
  const Shape in = x->value.shape();
  const Shape os{in.n, 1, in.h, in.w};
  auto out = make_var(Tensor<T>(os));
  const std::size_t P = in.plane();
  const T inv = T(1) / static_cast<T>(in.c);
  for (int n = 0; n < in.n; ++n) {
    T* yp = out->value.data() + n * P;
    for (int c = 0; c < in.c; ++c) {
      const T* xp = x->value.data() + (static_cast<std::size_t>(n) * in.c + c) * P;
      for (std::size_t p = 0; p < P; ++p) yp[p] += xp[p];
    }
    for (std::size_t p = 0; p < P; ++p) yp[p] *= inv;
  }
  flops::Counter::add(flops::pool(in));
  if (needs_grad(tape, {&x})) {
    out->requires_grad = true;
    tape.push("channel_mean", [x, out, in, P, inv]() {
      if (!out->has_grad()) return;
      T* dx = x->grad_ref().data();
      for (int n = 0; n < in.n; ++n) {
        const T* gp = out->grad.data() + n * P;
        for (int c = 0; c < in.c; ++c) {
          T* xp = dx + (static_cast<std::size_t>(n) * in.c + c) * P;
          for (std::size_t p = 0; p < P; ++p) xp[p] += gp[p] * inv;
        }
      }
    });
  }
  return out;
}

template <typename T>
Var<T> channel_max(Tape<T>& tape, const Var<T>& x) {
  const Shape in = x->value.shape();
  const Shape os{in.n, 1, in.h, in.w};
  auto out = make_var(Tensor<T>(os));
  const std::size_t P = in.plane();
  std::vector<int> arg(os.numel(), 0);
  for (int n = 0; n < in.n; ++n) {
    T* yp = out->value.data() + n * P;
    int* ap = arg.data() + n * P;
    const T* x0 = x->value.data() + static_cast<std::size_t>(n) * in.c * P;
    std::copy(x0, x0 + P, yp);
    for (int c = 1; c < in.c; ++c) {
      const T* xp = x0 + static_cast<std::size_t>(c) * P;
      for (std::size_t p = 0; p < P; ++p) {
        if (xp[p] > yp[p]) {
          yp[p] = xp[p];
          ap[p] = c;
        }
      }
    }
  }
  flops::Counter::add(flops::pool(in));
  if (needs_grad(tape, {&x})) {
    out->requires_grad = true;
    tape.push("channel_max", [x, out, in, P, arg = std::move(arg)]() {
      if (!out->has_grad()) return;
      T* dx = x->grad_ref().data();
      for (int n = 0; n < in.n; ++n) {
        for (std::size_t p = 0; p < P; ++p) {
          const std::size_t o = n * P + p;
          dx[(static_cast<std::size_t>(n) * in.c + arg[o]) * P + p] += out->grad[o];
        }
      }
    });
  }
  return out;
}

#define FSCE_INSTANTIATE_POOL(T)                                                      \
  template Var<T> avg_pool2d(Tape<T>&, const Var<T>&, int, int);                      \
  template Var<T> max_pool2d(Tape<T>&, const Var<T>&, int, int);                      \
  template Var<T> adaptive_avg_pool2d(Tape<T>&, const Var<T>&, int, int);             \
  template Var<T> pool(Tape<T>&, const Var<T>&, PoolKind, int, int);                  \
  template Var<T> spatial_mean(Tape<T>&, const Var<T>&);                              \
  template Var<T> spatial_max(Tape<T>&, const Var<T>&);                               \
  template Var<T> channel_mean(Tape<T>&, const Var<T>&);                              \
  template Var<T> channel_max(Tape<T>&, const Var<T>&);

FSCE_INSTANTIATE_POOL(float)
FSCE_INSTANTIATE_POOL(double)

}  // namespace fsce
