#include "fsce/attention.hpp"

#include "fsce/flops.hpp"

namespace fsce {

template <typename T>
Cbam<T>::Cbam(const std::string& name, CbamConfig cfg_, Rng& rng) : cfg(cfg_) {
  if (cfg.channels < 1) throw ConfigError(name + ": CBAM needs at least 1 channel");
  if (cfg.reduction < 1) throw ConfigError(name + ": reduction ratio must be >= 1");
  const int C = cfg.channels;
  const int hid = cfg.hidden();
  w1 = Parameter<T>(name + ".mlp.w1", {static_cast<std::uint32_t>(hid), static_cast<std::uint32_t>(C)},
                    Shape{hid, C, 1, 1});
  w2 = Parameter<T>(name + ".mlp.w2", {static_cast<std::uint32_t>(C), static_cast<std::uint32_t>(hid)},
                    Shape{C, hid, 1, 1});
  kaiming_uniform(w1.value(), C, rng);
  kaiming_uniform(w2.value(), hid, rng);
  const int maps = cfg.legacy_order ? 2 : 1;
  spatial_kernel = Parameter<T>(name + ".spatial.weight", {1, static_cast<std::uint32_t>(maps), 7, 7},
                                Shape{1, maps, 7, 7});
  kaiming_uniform(spatial_kernel.value(), maps * 49, rng);
}

template <typename T>
Var<T> Cbam<T>::channel_attention(Tape<T>& tape, const Var<T>& f, Var<T>* gate) const {
  const Shape s = f->value.shape();
  if (s.c != cfg.channels) {
    throw ShapeError("cbam: expected " + std::to_string(cfg.channels) + " channels, got " + std::to_string(s.c));
  }
  auto avg = spatial_mean(tape, f);
  auto mx = spatial_max(tape, f);
  Var<T> logits;
  if (cfg.legacy_order) {
    logits = add(tape, mlp2(tape, avg, w1.var, w2.var), mlp2(tape, mx, w1.var, w2.var));
  } else {
    logits = mlp2(tape, add(tape, avg, mx), w1.var, w2.var);
  }
  auto mc = sigmoid(tape, logits);
  if (gate) *gate = mc;
  return mul(tape, f, mc);
}

template <typename T>
Var<T> Cbam<T>::spatial_attention(Tape<T>& tape, const Var<T>& f, Var<T>* gate) const {
  auto avg = channel_mean(tape, f);
  auto mx = channel_max(tape, f);
  auto desc = cfg.legacy_order ? concat_channels(tape, std::vector<Var<T>>{avg, mx}) : add(tape, avg, mx);
  auto ms = sigmoid(tape, conv2d(tape, desc, spatial_kernel.var, Var<T>{}, Conv2dOptions{1, 3, 1}));
  if (gate) *gate = ms;
  return mul(tape, f, ms);
}

template <typename T>
Var<T> Cbam<T>::forward(Tape<T>& tape, const Var<T>& f) const {
  return spatial_attention(tape, channel_attention(tape, f));
}

template <typename T>
void Cbam<T>::collect(ParamRefs<T>& refs) {
  refs.params.push_back(&w1);
  refs.params.push_back(&w2);
  refs.params.push_back(&spatial_kernel);
}

template <typename T>
std::uint64_t Cbam<T>::flops(const Shape& in) const {
  const int C = cfg.channels;
  const int hid = cfg.hidden();
  const Shape vec{in.n, C, 1, 1};
  const Shape map{in.n, 1, in.h, in.w};
  std::uint64_t f = 0;
  // channel gate
  f += 2 * flops::pool(in);
  const std::uint64_t mlp = flops::linear(in.n, C, hid, false) + flops::activation(Shape{in.n, hid, 1, 1}) +
                            flops::linear(in.n, hid, C, false);
  f += cfg.legacy_order ? 2 * mlp + flops::eltwise(vec) : flops::eltwise(vec) + mlp;
  f += flops::activation(vec) + flops::eltwise(in);
  // spatial gate
  f += 2 * flops::pool(in);
  const int maps = cfg.legacy_order ? 2 : 1;
  if (!cfg.legacy_order) f += flops::eltwise(map);
  f += flops::conv(map, maps, 7, 7, false) + flops::activation(map) + flops::eltwise(in);
  return f;
}

template <typename T>
std::uint64_t Cbam<T>::param_count() const {
  const std::uint64_t C = cfg.channels;
  const std::uint64_t hid = cfg.hidden();
  return 2 * C * hid + (cfg.legacy_order ? 2 : 1) * 49;
}

template class Cbam<float>;
template class Cbam<double>;

}  // namespace fsce
