#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "fsce/flops.hpp"
#include "fsce/ops.hpp"

namespace fsce {
namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Strides of b when broadcast against a; 0 on broadcast dimensions.
struct BroadcastStrides {
  std::size_t n, c, h, w;
};

BroadcastStrides broadcast_strides(const Shape& a, const Shape& b, const char* op) {
  auto ok = [](int da, int db) { return db == da || db == 1; };
  if (!ok(a.n, b.n) || !ok(a.c, b.c) || !ok(a.h, b.h) || !ok(a.w, b.w)) {
    throw ShapeError(std::string(op) + ": cannot broadcast " + b.str() + " to " + a.str());
  }
  const std::size_t sw = 1;
  const std::size_t sh = static_cast<std::size_t>(b.w);
  const std::size_t sc = sh * b.h;
  const std::size_t sn = sc * b.c;
  return {b.n == 1 ? 0 : sn, b.c == 1 ? 0 : sc, b.h == 1 ? 0 : sh, b.w == 1 ? 0 : sw};
}

template <typename F>
void for_each_broadcast(const Shape& a, const BroadcastStrides& s, F&& f) {
  std::size_t ia = 0;
  for (int n = 0; n < a.n; ++n) {
    for (int c = 0; c < a.c; ++c) {
      for (int h = 0; h < a.h; ++h) {
        const std::size_t ib_row = n * s.n + c * s.c + h * s.h;
        for (int w = 0; w < a.w; ++w, ++ia) f(ia, ib_row + w * s.w);
      }
    }
  }
}

struct AxisSplit {
  std::size_t outer, axis, inner;
};

AxisSplit split_axis(const Shape& s, int axis) {
  const int dims[4] = {s.n, s.c, s.h, s.w};
  if (axis < 0 || axis > 3) throw ConfigError("softmax: axis must be in [0, 3]");
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= dims[i];
  for (int i = axis + 1; i < 4; ++i) inner *= dims[i];
  return {outer, static_cast<std::size_t>(dims[axis]), inner};
}

}  // namespace

template <typename T>
Var<T> relu(Tape<T>& tape, const Var<T>& x) {
  auto out = make_var(Tensor<T>(x->value.shape()));
  const std::size_t n = x->value.size();
  const T* xd = x->value.data();
  T* yd = out->value.data();
  for (std::size_t i = 0; i < n; ++i) yd[i] = xd[i] > T(0) ? xd[i] : T(0);
  flops::Counter::add(flops::activation(x->value.shape()));
  if (needs_grad(tape, {&x})) {
    out->requires_grad = true;
    tape.push("relu", [x, out]() {
      if (!out->has_grad()) return;
      T* dx = x->grad_ref().data();
      const T* xd = x->value.data();
      const T* dy = out->grad.data();
      const std::size_t n = x->value.size();
      for (std::size_t i = 0; i < n; ++i) dx[i] += xd[i] > T(0) ? dy[i] : T(0);
    });
  }
  return out;
}

template <typename T>
Var<T> sigmoid(Tape<T>& tape, const Var<T>& x) {
  auto out = make_var(Tensor<T>(x->value.shape()));
  const std::size_t n = x->value.size();
  const T* xd = x->value.data();
  T* yd = out->value.data();
  for (std::size_t i = 0; i < n; ++i) {
    const T v = xd[i];
    if (v >= T(0)) {
      yd[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      yd[i] = e / (T(1) + e);
    }
  }
  flops::Counter::add(flops::activation(x->value.shape()));
  if (needs_grad(tape, {&x})) {
    out->requires_grad = true;
    tape.push("sigmoid", [x, out]() {
      if (!out->has_grad()) return;
      T* dx = x->grad_ref().data();
      const T* y = out->value.data();
      const T* dy = out->grad.data();
      const std::size_t n = x->value.size();
      for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * y[i] * (T(1) - y[i]);
    });
  }
  return out;
}

template <typename T>
Var<T> softmax(Tape<T>& tape, const Var<T>& z, int axis) {
  const AxisSplit s = split_axis(z->value.shape(), axis);
  auto out = make_var(Tensor<T>(z->value.shape()));
  const T* zd = z->value.data();
  T* yd = out->value.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.axis * s.inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t k = 0; k < s.axis; ++k) mx = std::max(mx, zd[base + k * s.inner]);
      T total = 0;
      for (std::size_t k = 0; k < s.axis; ++k) {
        const T e = std::exp(zd[base + k * s.inner] - mx);
        yd[base + k * s.inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < s.axis; ++k) yd[base + k * s.inner] /= total;
    }
  }
  if (needs_grad(tape, {&z})) {
    out->requires_grad = true;
    tape.push("softmax", [z, out, s]() {
      if (!out->has_grad()) return;
      T* dz = z->grad_ref().data();
      const T* y = out->value.data();
      const T* dy = out->grad.data();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
          const std::size_t base = o * s.axis * s.inner + in;
          T dot = 0;
          for (std::size_t k = 0; k < s.axis; ++k) dot += dy[base + k * s.inner] * y[base + k * s.inner];
          for (std::size_t k = 0; k < s.axis; ++k) {
            const std::size_t i = base + k * s.inner;
            dz[i] += y[i] * (dy[i] - dot);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Var<T> log_softmax(Tape<T>& tape, const Var<T>& z, int axis) {
  const AxisSplit s = split_axis(z->value.shape(), axis);
  auto out = make_var(Tensor<T>(z->value.shape()));
  const T* zd = z->value.data();
  T* yd = out->value.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.axis * s.inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t k = 0; k < s.axis; ++k) mx = std::max(mx, zd[base + k * s.inner]);
      T total = 0;
      for (std::size_t k = 0; k < s.axis; ++k) total += std::exp(zd[base + k * s.inner] - mx);
      const T lse = mx + std::log(total);
      for (std::size_t k = 0; k < s.axis; ++k) yd[base + k * s.inner] = zd[base + k * s.inner] - lse;
    }
  }
  if (needs_grad(tape, {&z})) {
    out->requires_grad = true;
    tape.push("log_softmax", [z, out, s]() {
      if (!out->has_grad()) return;
      T* dz = z->grad_ref().data();
      const T* y = out->value.data();
      const T* dy = out->grad.data();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
          const std::size_t base = o * s.axis * s.inner + in;
          T total = 0;
          for (std::size_t k = 0; k < s.axis; ++k) total += dy[base + k * s.inner];
          for (std::size_t k = 0; k < s.axis; ++k) {
            const std::size_t i = base + k * s.inner;
            dz[i] += dy[i] - std::exp(y[i]) * total;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Var<T> linear(Tape<T>& tape, const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const Shape xs = x->value.shape();
  const Shape ws = weight->value.shape();
  const int batch = xs.n;
  const int in = xs.c * xs.h * xs.w;
  const int out_f = ws.n;
  if (ws.c * ws.h * ws.w != in) {
    throw ShapeError("linear: weight expects " + std::to_string(ws.c * ws.h * ws.w) + " inputs, got " +
                     std::to_string(in));
  }
  if (bias && bias->value.size() != static_cast<std::size_t>(out_f)) {
    throw ShapeError("linear: bias length mismatch");
  }
  auto out = make_var(Tensor<T>(Shape{batch, out_f, 1, 1}));
  Eigen::Map<const MatR<T>> xm(x->value.data(), batch, in);
  Eigen::Map<const MatR<T>> wm(weight->value.data(), out_f, in);
  Eigen::Map<MatR<T>> ym(out->value.data(), batch, out_f);
  ym.noalias() = xm * wm.transpose();
  if (bias) {
    for (int n = 0; n < batch; ++n)
      for (int o = 0; o < out_f; ++o) ym(n, o) += bias->value[o];
  }
  flops::Counter::add(flops::linear(batch, in, out_f, static_cast<bool>(bias)));
  if (needs_grad(tape, {&x, &weight, &bias})) {
    out->requires_grad = true;
    tape.push("linear", [x, weight, bias, out, batch, in, out_f]() {
      if (!out->has_grad()) return;
      Eigen::Map<const MatR<T>> dy(out->grad.data(), batch, out_f);
      if (x->requires_grad) {
        Eigen::Map<MatR<T>> dx(x->grad_ref().data(), batch, in);
        Eigen::Map<const MatR<T>> wm(weight->value.data(), out_f, in);
        MatR<T> tmp = dy * wm;
        dx += tmp;
      }
      if (weight->requires_grad) {
        Eigen::Map<MatR<T>> dw(weight->grad_ref().data(), out_f, in);
        Eigen::Map<const MatR<T>> xm(x->value.data(), batch, in);
        MatR<T> tmp = dy.transpose() * xm;
        dw += tmp;
      }
      if (bias && bias->requires_grad) {
        T* db = bias->grad_ref().data();
        for (int o = 0; o < out_f; ++o) {
          T acc = 0;
          for (int n = 0; n < batch; ++n) acc += dy(n, o);
          db[o] += acc;
        }
      }
    });
  }
  return out;
}

template <typename T>
Var<T> mlp2(Tape<T>& tape, const Var<T>& v, const Var<T>& w1, const Var<T>& w2) {
  auto hidden = relu(tape, linear(tape, v, w1, Var<T>{}));
  return linear(tape, hidden, w2, Var<T>{});
}

template <typename T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  const Shape as = a->value.shape();
  const Shape bs = b->value.shape();
  const bool same = as == bs;
  const BroadcastStrides s = same ? BroadcastStrides{} : broadcast_strides(as, bs, "add");
  auto out = make_var(Tensor<T>(as));
  const T* ad = a->value.data();
  const T* bd = b->value.data();
  T* yd = out->value.data();
  if (same) {
    for (std::size_t i = 0; i < a->value.size(); ++i) yd[i] = ad[i] + bd[i];
  } else {
    for_each_broadcast(as, s, [&](std::size_t ia, std::size_t ib) { yd[ia] = ad[ia] + bd[ib]; });
  }
  flops::Counter::add(flops::eltwise(as));
  if (needs_grad(tape, {&a, &b})) {
    out->requires_grad = true;
    tape.push("add", [a, b, out, same, s, as]() {
      if (!out->has_grad()) return;
      const T* dy = out->grad.data();
      if (a->requires_grad) {
        T* da = a->grad_ref().data();
        for (std::size_t i = 0; i < a->value.size(); ++i) da[i] += dy[i];
      }
      if (b->requires_grad) {
        T* db = b->grad_ref().data();
        if (same) {
          for (std::size_t i = 0; i < b->value.size(); ++i) db[i] += dy[i];
        } else {
          for_each_broadcast(as, s, [&](std::size_t ia, std::size_t ib) { db[ib] += dy[ia]; });
        }
      }
    });
  }
  return out;
}

template <typename T>
Var<T> mul(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  const Shape as = a->value.shape();
  const Shape bs = b->value.shape();
  const bool same = as == bs;
  const BroadcastStrides s = same ? BroadcastStrides{} : broadcast_strides(as, bs, "mul");
  auto out = make_var(Tensor<T>(as));
  const T* ad = a->value.data();
  const T* bd = b->value.data();
  T* yd = out->value.data();
  if (same) {
    for (std::size_t i = 0; i < a->value.size(); ++i) yd[i] = ad[i] * bd[i];
  } else {
    for_each_broadcast(as, s, [&](std::size_t ia, std::size_t ib) { yd[ia] = ad[ia] * bd[ib]; });
  }
  flops::Counter::add(flops::eltwise(as));
  if (needs_grad(tape, {&a, &b})) {
    out->requires_grad = true;
    tape.push("mul", [a, b, out, same, s, as]() {
      if (!out->has_grad()) return;
      const T* dy = out->grad.data();
      const T* ad = a->value.data();
      const T* bd = b->value.data();
      if (a->requires_grad) {
        T* da = a->grad_ref().data();
        if (same) {
          for (std::size_t i = 0; i < a->value.size(); ++i) da[i] += dy[i] * bd[i];
        } else {
          for_each_broadcast(as, s, [&](std::size_t ia, std::size_t ib) { da[ia] += dy[ia] * bd[ib]; });
        }
      }
      if (b->requires_grad) {
        T* db = b->grad_ref().data();
        if (same) {
          for (std::size_t i = 0; i < b->value.size(); ++i) db[i] += dy[i] * ad[i];
        } else {
          for_each_broadcast(as, s, [&](std::size_t ia, std::size_t ib) { db[ib] += dy[ia] * ad[ia]; });
        }
      }
    });
  }
  return out;
}

template <typename T>
Var<T> scale(Tape<T>& tape, const Var<T>& x, T factor) {
  auto out = make_var(Tensor<T>(x->value.shape()));
  for (std::size_t i = 0; i < x->value.size(); ++i) out->value[i] = x->value[i] * factor;
  flops::Counter::add(flops::eltwise(x->value.shape()));
  if (needs_grad(tape, {&x})) {
    out->requires_grad = true;
    tape.push("scale", [x, out, factor]() {
      if (!out->has_grad()) return;
      T* dx = x->grad_ref().data();
      for (std::size_t i = 0; i < x->value.size(); ++i) dx[i] += out->grad[i] * factor;
    });
  }
  return out;
}

template <typename T>
Var<T> sum(Tape<T>& tape, const Var<T>& x) {
  auto out = make_var(Tensor<T>(Shape{1, 1, 1, 1}));
  T acc = 0;
  for (std::size_t i = 0; i < x->value.size(); ++i) acc += x->value[i];
  out->value[0] = acc;
  if (needs_grad(tape, {&x})) {
    out->requires_grad = true;
    tape.push("sum", [x, out]() {
      if (!out->has_grad()) return;
      T* dx = x->grad_ref().data();
      const T g = out->grad[0];
      for (std::size_t i = 0; i < x->value.size(); ++i) dx[i] += g;
    });
  }
  return out;
}

template <typename T>
Var<T> mean(Tape<T>& tape, const Var<T>& x) {
  if (x->value.size() == 0) throw ContractError("mean: empty input");
  return scale(tape, sum(tape, x), T(1) / static_cast<T>(x->value.size()));
}

template <typename T>
Var<T> weighted_sum(Tape<T>& tape, const Var<T>& x, const Tensor<T>& weights) {
  if (weights.shape() != x->value.shape()) {
    throw ShapeError("weighted_sum: weights " + weights.shape().str() + " vs input " + x->value.shape().str());
  }
  auto out = make_var(Tensor<T>(Shape{1, 1, 1, 1}));
  T acc = 0;
  for (std::size_t i = 0; i < x->value.size(); ++i) acc += x->value[i] * weights[i];
  out->value[0] = acc;
  if (needs_grad(tape, {&x})) {
    out->requires_grad = true;
    tape.push("weighted_sum", [x, out, weights]() {
      if (!out->has_grad()) return;
      T* dx = x->grad_ref().data();
      const T g = out->grad[0];
      for (std::size_t i = 0; i < x->value.size(); ++i) dx[i] += g * weights[i];
    });
  }
  return out;
}

template <typename T>
Var<T> concat_channels(Tape<T>& tape, const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_channels: no inputs");
  const Shape first = parts.front()->value.shape();
  int total_c = 0;
  for (const auto& p : parts) {
    const Shape s = p->value.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError("concat_channels: " + s.str() + " incompatible with " + first.str());
    }
    total_c += s.c;
  }
  const Shape os{first.n, total_c, first.h, first.w};
  auto out = make_var(Tensor<T>(os));
  const std::size_t P = first.plane();
  for (int n = 0; n < first.n; ++n) {
    int c_off = 0;
    for (const auto& p : parts) {
      const int pc = p->value.shape().c;
      const T* src = p->value.data() + static_cast<std::size_t>(n) * pc * P;
      std::copy(src, src + pc * P, out->value.data() + (static_cast<std::size_t>(n) * total_c + c_off) * P);
      c_off += pc;
    }
  }
  bool any = false;
  for (const auto& p : parts) any = any || needs_grad(tape, {&p});
  if (any) {
    out->requires_grad = true;
    tape.push("concat_channels", [parts, out, P, total_c]() {
      if (!out->has_grad()) return;
      const int batch = out->value.shape().n;
      int c_off = 0;
      for (const auto& p : parts) {
        const int pc = p->value.shape().c;
        if (p->requires_grad) {
          T* dst = p->grad_ref().data();
          for (int n = 0; n < batch; ++n) {
            const T* src = out->grad.data() + (static_cast<std::size_t>(n) * total_c + c_off) * P;
            T* d = dst + static_cast<std::size_t>(n) * pc * P;
            for (std::size_t i = 0; i < pc * P; ++i) d[i] += src[i];
          }
        }
        c_off += pc;
      }
    });
  }
  return out;
}

template <typename T>
Var<T> slice_channels(Tape<T>& tape, const Var<T>& x, int begin, int end) {
  const Shape in = x->value.shape();
  if (begin < 0 || end > in.c || begin >= end) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for " + std::to_string(in.c) + " channels");
  }
  const int oc = end - begin;
  const Shape os{in.n, oc, in.h, in.w};
  auto out = make_var(Tensor<T>(os));
  const std::size_t P = in.plane();
  for (int n = 0; n < in.n; ++n) {
    const T* src = x->value.data() + (static_cast<std::size_t>(n) * in.c + begin) * P;
    std::copy(src, src + oc * P, out->value.data() + static_cast<std::size_t>(n) * oc * P);
  }
  if (needs_grad(tape, {&x})) {
    out->requires_grad = true;
    tape.push("slice_channels", [x, out, in, begin, oc, P]() {
      if (!out->has_grad()) return;
      T* dx = x->grad_ref().data();
      for (int n = 0; n < in.n; ++n) {
        T* dst = dx + (static_cast<std::size_t>(n) * in.c + begin) * P;
        const T* src = out->grad.data() + static_cast<std::size_t>(n) * oc * P;
        for (std::size_t i = 0; i < oc * P; ++i) dst[i] += src[i];
      }
    });
  }
  return out;
}

template <typename T>
Var<T> pick(Tape<T>& tape, const Var<T>& x, const std::vector<int>& index) {
  const Shape in = x->value.shape();
  if (in.h != 1 || in.w != 1) throw ShapeError("pick: expects (N, K, 1, 1), got " + in.str());
  if (index.size() != static_cast<std::size_t>(in.n)) throw ShapeError("pick: index count != batch");
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= in.c) {
      throw DataError("pick: index " + std::to_string(index[i]) + " out of range at sample " + std::to_string(i));
    }
  }
  auto out = make_var(Tensor<T>(Shape{in.n, 1, 1, 1}));
  for (int n = 0; n < in.n; ++n) out->value[n] = x->value[static_cast<std::size_t>(n) * in.c + index[n]];
  if (needs_grad(tape, {&x})) {
    out->requires_grad = true;
    tape.push("pick", [x, out, index, in]() {
      if (!out->has_grad()) return;
      T* dx = x->grad_ref().data();
      for (int n = 0; n < in.n; ++n) dx[static_cast<std::size_t>(n) * in.c + index[n]] += out->grad[n];
    });
  }
  return out;
}

#define FSCE_INSTANTIATE_ELT(T)                                                              \
  template Var<T> relu(Tape<T>&, const Var<T>&);                                             \
  template Var<T> sigmoid(Tape<T>&, const Var<T>&);                                          \
  template Var<T> softmax(Tape<T>&, const Var<T>&, int);                                     \
  template Var<T> log_softmax(Tape<T>&, const Var<T>&, int);                                 \
  template Var<T> linear(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&);             \
  template Var<T> mlp2(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&);               \
  template Var<T> add(Tape<T>&, const Var<T>&, const Var<T>&);                               \
  template Var<T> mul(Tape<T>&, const Var<T>&, const Var<T>&);                               \
  template Var<T> scale(Tape<T>&, const Var<T>&, T);                                         \
  template Var<T> sum(Tape<T>&, const Var<T>&);                                              \
  template Var<T> mean(Tape<T>&, const Var<T>&);                                             \
  template Var<T> weighted_sum(Tape<T>&, const Var<T>&, const Tensor<T>&);                   \
  template Var<T> concat_channels(Tape<T>&, const std::vector<Var<T>>&);                     \
  template Var<T> slice_channels(Tape<T>&, const Var<T>&, int, int);                         \
  template Var<T> pick(Tape<T>&, const Var<T>&, const std::vector<int>&);

FSCE_INSTANTIATE_ELT(float)
FSCE_INSTANTIATE_ELT(double)

}  // namespace fsce
