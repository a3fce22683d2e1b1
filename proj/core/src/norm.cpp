#include <cmath>
#include <vector>

#include "fsce/flops.hpp"
#include "fsce/ops.hpp"
#include "reduce.hpp"

namespace fsce {
template <typename T>
Var<T> batch_norm(Tape<T>& tape, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  Tensor<T>& running_mean, Tensor<T>& running_var, Mode mode, BatchNormState cfg) {
  const Shape in = x->value.shape();
  const int C = in.c;
  if (gamma->value.size() != static_cast<std::size_t>(C) || beta->value.size() != static_cast<std::size_t>(C) ||
      running_mean.size() != static_cast<std::size_t>(C) || running_var.size() != static_cast<std::size_t>(C)) {
    throw ShapeError("batch_norm: parameter length does not match " + std::to_string(C) + " channels");
  }
  const std::size_t P = in.plane();
  const std::size_t M = static_cast<std::size_t>(in.n) * P;
  if (mode == Mode::train && M <= 1) {
    throw ContractError("batch_norm: degenerate statistics (one value per channel) in train mode for input " +
                        in.str());
  }
  std::vector<T> mu(C), invstd(C);
  if (mode == Mode::train) {
    for (int c = 0; c < C; ++c) {
      double acc = 0;
      for (int n = 0; n < in.n; ++n) {
        acc += detail::sum_fixed(x->value.data() + (static_cast<std::size_t>(n) * C + c) * P, P);
      }
      const T m = static_cast<T>(acc / static_cast<double>(M));
      double sq = 0;
      for (int n = 0; n < in.n; ++n) {
        sq += detail::sq_dev_fixed(x->value.data() + (static_cast<std::size_t>(n) * C + c) * P, m, P);
      }
      const T var = static_cast<T>(sq / static_cast<double>(M));
      mu[c] = m;
      invstd[c] = T(1) / std::sqrt(var + static_cast<T>(cfg.eps));
      const T mom = static_cast<T>(cfg.momentum);
      running_mean[c] = (T(1) - mom) * running_mean[c] + mom * m;
      running_var[c] = (T(1) - mom) * running_var[c] + mom * static_cast<T>(sq / static_cast<double>(M - 1));
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mu[c] = running_mean[c];
      invstd[c] = T(1) / std::sqrt(running_var[c] + static_cast<T>(cfg.eps));
    }
  }

  auto out = make_var(Tensor<T>(in));
  for (int n = 0; n < in.n; ++n) {
    for (int c = 0; c < C; ++c) {
      const std::size_t off = (static_cast<std::size_t>(n) * C + c) * P;
      const T* xp = x->value.data() + off;
      T* yp = out->value.data() + off;
      const T a = gamma->value[c] * invstd[c];
      const T b = beta->value[c] - a * mu[c];
      for (std::size_t p = 0; p < P; ++p) yp[p] = a * xp[p] + b;
    }
  }
  flops::Counter::add(flops::batchnorm(in));

  if (needs_grad(tape, {&x, &gamma, &beta})) {
    out->requires_grad = true;
    tape.push("batch_norm", [x, gamma, beta, out, mode, mu = std::move(mu), invstd = std::move(invstd), in, P, M]() {
      if (!out->has_grad()) return;
      const int C = in.c;
      const T* dy = out->grad.data();
      const T* xd = x->value.data();
      for (int c = 0; c < C; ++c) {
        double acc_dy = 0, acc_dy_x = 0;
        for (int n = 0; n < in.n; ++n) {
          const std::size_t off = (static_cast<std::size_t>(n) * C + c) * P;
          acc_dy += detail::sum_fixed(dy + off, P);
          acc_dy_x += detail::dot_fixed(dy + off, xd + off, P);
        }
        const T sum_dy = static_cast<T>(acc_dy);
        const T sum_dy_xhat = static_cast<T>((acc_dy_x - static_cast<double>(mu[c]) * acc_dy) * invstd[c]);
        if (gamma->requires_grad) gamma->grad_ref()[c] += sum_dy_xhat;
        if (beta->requires_grad) beta->grad_ref()[c] += sum_dy;
        if (!x->requires_grad) continue;
        T* dx = x->grad_ref().data();
        const T g = gamma->value[c];
        if (mode == Mode::train) {
          const T k = g * invstd[c] / static_cast<T>(M);
          for (int n = 0; n < in.n; ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * P;
            for (std::size_t p = 0; p < P; ++p) {
              const T xhat = (xd[off + p] - mu[c]) * invstd[c];
              dx[off + p] += k * (static_cast<T>(M) * dy[off + p] - sum_dy - xhat * sum_dy_xhat);
            }
          }
        } else {
          const T k = g * invstd[c];
          for (int n = 0; n < in.n; ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * P;
            for (std::size_t p = 0; p < P; ++p) dx[off + p] += k * dy[off + p];
          }
        }
      }
    });
  }
  return out;
}

template Var<float> batch_norm(Tape<float>&, const Var<float>&, const Var<float>&, const Var<float>&,
                               Tensor<float>&, Tensor<float>&, Mode, BatchNormState);
template Var<double> batch_norm(Tape<double>&, const Var<double>&, const Var<double>&, const Var<double>&,
                                Tensor<double>&, Tensor<double>&, Mode, BatchNormState);

}  // namespace fsce
