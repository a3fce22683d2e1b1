#pragma once

#include <vector>

#include "fsce/autograd.hpp"

// Differentiable layer primitives. Every function records its backward pass
// on the tape when an input requires a gradient and the tape is recording.
namespace fsce {

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

inline int conv_out_dim(int in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

// Cross-correlation with zero padding. weight is (Cout, Cin/groups, kh, kw);
// bias is (1, Cout, 1, 1) or null.
template <typename T>
Var<T> conv2d(Tape<T>& tape, const Var<T>& x, const Var<T>& weight, const Var<T>& bias,
              Conv2dOptions opt);

enum class PoolKind { avg, max, adaptive_avg };

// Fixed-window pooling drops trailing rows/columns that do not fill a window
// (output = floor((in - window) / stride) + 1). stride 0 means stride = window.
template <typename T>
Var<T> avg_pool2d(Tape<T>& tape, const Var<T>& x, int window, int stride = 0);
template <typename T>
Var<T> max_pool2d(Tape<T>& tape, const Var<T>& x, int window, int stride = 0);
// Bin i covers [floor(i*in/out), ceil((i+1)*in/out)).
template <typename T>
Var<T> adaptive_avg_pool2d(Tape<T>& tape, const Var<T>& x, int out_h, int out_w);
// Dispatcher: `dims` is the window for avg/max and the target for adaptive-avg.
template <typename T>
Var<T> pool(Tape<T>& tape, const Var<T>& x, PoolKind kind, int dim_h, int dim_w);

// Reductions to (N, C, 1, 1) over H x W and to (N, 1, H, W) over C.
template <typename T>
Var<T> spatial_mean(Tape<T>& tape, const Var<T>& x);
template <typename T>
Var<T> spatial_max(Tape<T>& tape, const Var<T>& x);
template <typename T>
Var<T> channel_mean(Tape<T>& tape, const Var<T>& x);
template <typename T>
Var<T> channel_max(Tape<T>& tape, const Var<T>& x);

template <typename T>
Var<T> relu(Tape<T>& tape, const Var<T>& x);
template <typename T>
Var<T> sigmoid(Tape<T>& tape, const Var<T>& x);
template <typename T>
Var<T> softmax(Tape<T>& tape, const Var<T>& z, int axis = 1);
template <typename T>
Var<T> log_softmax(Tape<T>& tape, const Var<T>& z, int axis = 1);

struct BatchNormState {
  double momentum = 0.1;
  double eps = 1e-5;
};

// Per-channel batch normalization. In train mode, batch statistics normalize
// the input and the running estimates move toward them with `momentum`
// (running variance uses the unbiased batch variance). Eval mode normalizes
// with the running estimates.
template <typename T>
Var<T> batch_norm(Tape<T>& tape, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  Tensor<T>& running_mean, Tensor<T>& running_var, Mode mode,
                  BatchNormState cfg = {});

// x viewed as (N, C*H*W); weight is (out, in, 1, 1); bias (1, out, 1, 1) or null.
// Output is (N, out, 1, 1).
template <typename T>
Var<T> linear(Tape<T>& tape, const Var<T>& x, const Var<T>& weight, const Var<T>& bias);
// v -> w2 * relu(w1 * v), no biases.
template <typename T>
Var<T> mlp2(Tape<T>& tape, const Var<T>& v, const Var<T>& w1, const Var<T>& w2);

// Elementwise with b broadcast to a's shape (each dim of b equals a's or is 1).
template <typename T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(Tape<T>& tape, const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(Tape<T>& tape, const Var<T>& x, T factor);
template <typename T>
Var<T> sum(Tape<T>& tape, const Var<T>& x);
template <typename T>
Var<T> mean(Tape<T>& tape, const Var<T>& x);
// sum(x * weights) with constant weights; used to project outputs to a scalar.
template <typename T>
Var<T> weighted_sum(Tape<T>& tape, const Var<T>& x, const Tensor<T>& weights);

template <typename T>
Var<T> concat_channels(Tape<T>& tape, const std::vector<Var<T>>& parts);
template <typename T>
Var<T> slice_channels(Tape<T>& tape, const Var<T>& x, int begin, int end);
// Picks (n, index[n], 0, 0) from an (N, K, 1, 1) map; output (N, 1, 1, 1).
template <typename T>
Var<T> pick(Tape<T>& tape, const Var<T>& x, const std::vector<int>& index);

}  // namespace fsce
