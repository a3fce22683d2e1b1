#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fsce/autograd.hpp"
#include "fsce/ops.hpp"
#include "fsce/rng.hpp"

namespace fsce {

// Non-owning views of a module's learnable parameters and state buffers.
template <typename T>
struct ParamRefs {
  std::vector<Parameter<T>*> params;
  std::vector<Buffer<T>*> buffers;
};

// Kaiming-uniform (fan-in, ReLU gain): U(-sqrt(6/fan_in), sqrt(6/fan_in)).
template <typename T>
void kaiming_uniform(Tensor<T>& w, int fan_in, Rng& rng);

template <typename T>
class Conv2dLayer {
 public:
  Conv2dLayer() = default;
  Conv2dLayer(const std::string& name, int cin, int cout, int kernel, Conv2dOptions opt, bool bias, Rng& rng);

  Var<T> forward(Tape<T>& tape, const Var<T>& x) const;
  void collect(ParamRefs<T>& refs);
  std::uint64_t flops(const Shape& in, Shape& out) const;
  std::uint64_t param_count() const;

  Parameter<T> weight;
  std::optional<Parameter<T>> bias;
  int cin = 0, cout = 0, kernel = 0;
  Conv2dOptions opt;
};

template <typename T>
class BatchNorm2dLayer {
 public:
  BatchNorm2dLayer() = default;
  BatchNorm2dLayer(const std::string& name, int channels);

  Var<T> forward(Tape<T>& tape, const Var<T>& x, Mode mode);
  void collect(ParamRefs<T>& refs);
  std::uint64_t flops(const Shape& in) const;
  std::uint64_t param_count() const { return 2ULL * channels; }

  Parameter<T> gamma;
  Parameter<T> beta;
  Buffer<T> running_mean;
  Buffer<T> running_var;
  int channels = 0;
};

template <typename T>
class LinearLayer {
 public:
  LinearLayer() = default;
  LinearLayer(const std::string& name, int in, int out, bool bias, Rng& rng);

  Var<T> forward(Tape<T>& tape, const Var<T>& x) const;
  void collect(ParamRefs<T>& refs);
  std::uint64_t flops(int batch) const;
  std::uint64_t param_count() const;

  Parameter<T> weight;
  std::optional<Parameter<T>> bias;
  int in = 0, out = 0;
};

extern template class Conv2dLayer<float>;
extern template class Conv2dLayer<double>;
extern template class BatchNorm2dLayer<float>;
extern template class BatchNorm2dLayer<double>;
extern template class LinearLayer<float>;
extern template class LinearLayer<double>;

}  // namespace fsce
