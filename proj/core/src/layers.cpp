#include "fsce/layers.hpp"

#include <cmath>

#include "fsce/flops.hpp"

namespace fsce {

template <typename T>
void kaiming_uniform(Tensor<T>& w, int fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / std::max(1, fan_in));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
Conv2dLayer<T>::Conv2dLayer(const std::string& name, int cin_, int cout_, int kernel_, Conv2dOptions opt_,
                            bool with_bias, Rng& rng)
    : cin(cin_), cout(cout_), kernel(kernel_), opt(opt_) {
  if (cin < 1 || cout < 1) throw ConfigError(name + ": channel counts must be >= 1");
  if (opt.groups < 1 || cin % opt.groups != 0 || cout % opt.groups != 0) {
    throw ConfigError(name + ": channels " + std::to_string(cin) + "->" + std::to_string(cout) +
                      " not divisible by groups " + std::to_string(opt.groups));
  }
  if (kernel % 2 == 0) throw ConfigError(name + ": kernel size must be odd");
  const int cin_g = cin / opt.groups;
  weight = Parameter<T>(name + ".weight",
                        {static_cast<std::uint32_t>(cout), static_cast<std::uint32_t>(cin_g),
                         static_cast<std::uint32_t>(kernel), static_cast<std::uint32_t>(kernel)},
                        Shape{cout, cin_g, kernel, kernel});
  const int fan_in = cin_g * kernel * kernel;
  kaiming_uniform(weight.value(), fan_in, rng);
  if (with_bias) {
    bias = Parameter<T>(name + ".bias", {static_cast<std::uint32_t>(cout)}, Shape{1, cout, 1, 1});
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < bias->numel(); ++i) bias->value()[i] = static_cast<T>(rng.uniform(-bound, bound));
  }
}

template <typename T>
Var<T> Conv2dLayer<T>::forward(Tape<T>& tape, const Var<T>& x) const {
  return conv2d(tape, x, weight.var, bias ? bias->var : Var<T>{}, opt);
}

template <typename T>
void Conv2dLayer<T>::collect(ParamRefs<T>& refs) {
  refs.params.push_back(&weight);
  if (bias) refs.params.push_back(&*bias);
}

template <typename T>
std::uint64_t Conv2dLayer<T>::flops(const Shape& in, Shape& out) const {
  out = Shape{in.n, cout, conv_out_dim(in.h, kernel, opt.stride, opt.padding),
              conv_out_dim(in.w, kernel, opt.stride, opt.padding)};
  return flops::conv(out, cin / opt.groups, kernel, kernel, bias.has_value());
}

template <typename T>
std::uint64_t Conv2dLayer<T>::param_count() const {
  std::uint64_t n = static_cast<std::uint64_t>(cout) * (cin / opt.groups) * kernel * kernel;
  if (bias) n += cout;
  return n;
}

template <typename T>
BatchNorm2dLayer<T>::BatchNorm2dLayer(const std::string& name, int channels_) : channels(channels_) {
  const auto c = static_cast<std::uint32_t>(channels);
  gamma = Parameter<T>(name + ".weight", {c}, Shape{1, channels, 1, 1});
  beta = Parameter<T>(name + ".bias", {c}, Shape{1, channels, 1, 1});
  gamma.value().fill(T(1));
  running_mean = Buffer<T>{name + ".running_mean", {c}, Tensor<T>(Shape{1, channels, 1, 1}, T(0))};
  running_var = Buffer<T>{name + ".running_var", {c}, Tensor<T>(Shape{1, channels, 1, 1}, T(1))};
}

template <typename T>
Var<T> BatchNorm2dLayer<T>::forward(Tape<T>& tape, const Var<T>& x, Mode mode) {
  return batch_norm(tape, x, gamma.var, beta.var, running_mean.value, running_var.value, mode);
}

template <typename T>
void BatchNorm2dLayer<T>::collect(ParamRefs<T>& refs) {
  refs.params.push_back(&gamma);
  refs.params.push_back(&beta);
  refs.buffers.push_back(&running_mean);
  refs.buffers.push_back(&running_var);
}

template <typename T>
std::uint64_t BatchNorm2dLayer<T>::flops(const Shape& in) const {
  return flops::batchnorm(in);
}

template <typename T>
LinearLayer<T>::LinearLayer(const std::string& name, int in_, int out_, bool with_bias, Rng& rng)
    : in(in_), out(out_) {
  if (in < 1 || out < 1) throw ConfigError(name + ": linear dims must be >= 1");
  weight = Parameter<T>(name + ".weight", {static_cast<std::uint32_t>(out), static_cast<std::uint32_t>(in)},
                        Shape{out, in, 1, 1});
  kaiming_uniform(weight.value(), in, rng);
  if (with_bias) {
    bias = Parameter<T>(name + ".bias", {static_cast<std::uint32_t>(out)}, Shape{1, out, 1, 1});
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::size_t i = 0; i < bias->numel(); ++i) bias->value()[i] = static_cast<T>(rng.uniform(-bound, bound));
  }
}

template <typename T>
Var<T> LinearLayer<T>::forward(Tape<T>& tape, const Var<T>& x) const {
  return linear(tape, x, weight.var, bias ? bias->var : Var<T>{});
}

template <typename T>
void LinearLayer<T>::collect(ParamRefs<T>& refs) {
  refs.params.push_back(&weight);
  if (bias) refs.params.push_back(&*bias);
}

template <typename T>
std::uint64_t LinearLayer<T>::flops(int batch) const {
  return flops::linear(batch, in, out, bias.has_value());
}

template <typename T>
std::uint64_t LinearLayer<T>::param_count() const {
  return static_cast<std::uint64_t>(in) * out + (bias ? out : 0);
}

template void kaiming_uniform(Tensor<float>&, int, Rng&);
template void kaiming_uniform(Tensor<double>&, int, Rng&);
template class Conv2dLayer<float>;
template class Conv2dLayer<double>;
template class BatchNorm2dLayer<float>;
template class BatchNorm2dLayer<double>;
template class LinearLayer<float>;
template class LinearLayer<double>;

}  // namespace fsce
