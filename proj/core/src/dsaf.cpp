#include "fsce/dsaf.hpp"

#include <cmath>

#include "fsce/flops.hpp"

namespace fsce {

template <typename T>
Dsaf<T>::Dsaf(const std::string& name, DsafConfig cfg_, Rng& rng) : cfg(std::move(cfg_)) {
  const int C = cfg.in_channels;
  if (C < 2 || C % 2 != 0) {
    throw ConfigError(name + ": in_channels must be even and >= 2, got " + std::to_string(C));
  }
  if (cfg.kernel_sizes.empty()) throw ConfigError(name + ": kernel_sizes is empty");
  if (cfg.kernel_sizes.size() != cfg.paddings.size()) {
    throw ConfigError(name + ": kernel_sizes and paddings differ in length");
  }
  const int h = half();
  const int S = static_cast<int>(cfg.kernel_sizes.size());
  for (int i = 0; i < S; ++i) {
    const int k = cfg.kernel_sizes[i];
    const int p = cfg.paddings[i];
    if (k < 1 || k % 2 == 0) throw ConfigError(name + ": kernel sizes must be odd, got " + std::to_string(k));
    if (p < 0) throw ConfigError(name + ": paddings must be >= 0");
    scale_convs.emplace_back(name + ".spatial.conv" + std::to_string(k), h, h, k, Conv2dOptions{1, p, 1}, false, rng);
  }
  fuse_dw = Conv2dLayer<T>(name + ".spatial.fuse_dw", S * h, S * h, 3, Conv2dOptions{1, 1, S * h}, false, rng);
  fuse_pw = Conv2dLayer<T>(name + ".spatial.fuse_pw", S * h, h, 1, Conv2dOptions{}, false, rng);
  bn_s = BatchNorm2dLayer<T>(name + ".spatial.bn", h);
  CbamConfig cc{h, cfg.cbam_reduction, cfg.cbam_legacy_order};
  cbam_s = Cbam<T>(name + ".spatial.cbam", cc, rng);
  wt = WtConv<T>(name + ".frequency.wtconv", WtConvConfig{h, 1}, rng);
  bn_f = BatchNorm2dLayer<T>(name + ".frequency.bn", h);
  cbam_f = Cbam<T>(name + ".frequency.cbam", cc, rng);
}

template <typename T>
Var<T> Dsaf<T>::spatial_branch(Tape<T>& tape, const Var<T>& xs, Mode mode) {
  std::vector<Var<T>> scales;
  scales.reserve(scale_convs.size());
  int ref_h = 0, ref_w = 0;
  for (std::size_t i = 0; i < scale_convs.size(); ++i) {
    auto y = scale_convs[i].forward(tape, xs);
    if (i == 0) {
      ref_h = y->value.shape().h;
      ref_w = y->value.shape().w;
    } else {
      y = adaptive_avg_pool2d(tape, y, ref_h, ref_w);
    }
    scales.push_back(std::move(y));
  }
  auto cat = scales.size() == 1 ? scales[0] : concat_channels(tape, scales);
  auto y = fuse_pw.forward(tape, fuse_dw.forward(tape, cat));
  y = relu(tape, bn_s.forward(tape, y, mode));
  return cbam_s.forward(tape, y);
}

template <typename T>
Var<T> Dsaf<T>::frequency_branch(Tape<T>& tape, const Var<T>& xf, Mode mode) {
  auto y = relu(tape, bn_f.forward(tape, wt.forward(tape, xf), mode));
  return cbam_f.forward(tape, y);
}

template <typename T>
Var<T> Dsaf<T>::forward(Tape<T>& tape, const Var<T>& x, Mode mode) {
  const Shape s = x->value.shape();
  if (s.c != cfg.in_channels) {
    throw ShapeError("dsaf: expected " + std::to_string(cfg.in_channels) + " channels, got " + std::to_string(s.c));
  }
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw ShapeError("dsaf: spatial dims must be even, got " + s.str());
  }
  const int h = half();
  auto xs = slice_channels(tape, x, 0, h);
  auto xf = slice_channels(tape, x, h, 2 * h);
  auto fs = cfg.spatial ? spatial_branch(tape, xs, mode) : xs;
  auto ff = cfg.frequency ? frequency_branch(tape, xf, mode) : xf;
  if (fs->value.shape().h != ff->value.shape().h || fs->value.shape().w != ff->value.shape().w) {
    throw ConfigError("dsaf: branch outputs disagree in size (" + fs->value.shape().str() + " vs " +
                      ff->value.shape().str() + "); check paddings");
  }
  return concat_channels(tape, std::vector<Var<T>>{fs, ff});
}

template <typename T>
void Dsaf<T>::collect(ParamRefs<T>& refs) {
  if (cfg.spatial) {
    for (auto& c : scale_convs) c.collect(refs);
    fuse_dw.collect(refs);
    fuse_pw.collect(refs);
    bn_s.collect(refs);
    cbam_s.collect(refs);
  }
  if (cfg.frequency) {
    wt.collect(refs);
    bn_f.collect(refs);
    cbam_f.collect(refs);
  }
}

template <typename T>
std::uint64_t Dsaf<T>::flops(const Shape& in) const {
  const int h = half();
  const Shape hs{in.n, h, in.h, in.w};
  std::uint64_t f = 0;
  if (cfg.spatial) {
    Shape ref{};
    for (std::size_t i = 0; i < scale_convs.size(); ++i) {
      Shape out;
      f += scale_convs[i].flops(hs, out);
      if (i == 0) {
        ref = out;
      } else {
        f += flops::pool(out);
      }
    }
    Shape cat{in.n, static_cast<int>(scale_convs.size()) * h, ref.h, ref.w};
    Shape o1, o2;
    f += fuse_dw.flops(cat, o1);
    f += fuse_pw.flops(o1, o2);
    f += bn_s.flops(o2) + flops::activation(o2) + cbam_s.flops(o2);
  }
  if (cfg.frequency) {
    Shape o;
    f += wt.flops(hs, o);
    f += bn_f.flops(o) + flops::activation(o) + cbam_f.flops(o);
  }
  return f;
}

template <typename T>
std::uint64_t Dsaf<T>::param_count() const {
  std::uint64_t n = 0;
  if (cfg.spatial) {
    for (const auto& c : scale_convs) n += c.param_count();
    n += fuse_dw.param_count() + fuse_pw.param_count() + bn_s.param_count() + cbam_s.param_count();
  }
  if (cfg.frequency) n += wt.param_count() + bn_f.param_count() + cbam_f.param_count();
  return n;
}

namespace {

template <typename T>
double background_variance(const Tensor<T>& x, const std::vector<std::vector<char>>& mask) {
  const Shape s = x.shape();
  double total = 0;
  for (int n = 0; n < s.n; ++n) {
    const auto& m = mask[n];
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.data() + x.index(n, c, 0, 0);
      double sum = 0, sq = 0;
      std::size_t cnt = 0;
      for (std::size_t i = 0; i < s.plane(); ++i) {
        if (!m[i]) continue;
        sum += p[i];
        sq += static_cast<double>(p[i]) * p[i];
        ++cnt;
      }
      if (cnt == 0) continue;
      const double mu = sum / cnt;
      total += std::max(0.0, sq / cnt - mu * mu);
    }
  }
  return total;
}

}  // namespace

template <typename T>
double dsaf_smoothness_probe(Dsaf<T>& block, const Tensor<T>& x_noisy, const Tensor<T>& x_clean) {
  const Shape s = x_noisy.shape();
  if (!(x_clean.shape() == s)) {
    throw ShapeError("smoothness probe: noisy " + s.str() + " and clean " + x_clean.shape().str() + " differ");
  }
  std::vector<std::vector<char>> mask(s.n, std::vector<char>(s.plane(), 0));
  for (int n = 0; n < s.n; ++n) {
    std::vector<double> avg(s.plane(), 0.0);
    for (int c = 0; c < s.c; ++c) {
      const T* p = x_clean.data() + x_clean.index(n, c, 0, 0);
      for (std::size_t i = 0; i < s.plane(); ++i) avg[i] += p[i];
    }
    const auto [lo, hi] = std::minmax_element(avg.begin(), avg.end());
    const double mid = 0.5 * (*lo + *hi);
    for (std::size_t i = 0; i < s.plane(); ++i) mask[n][i] = avg[i] <= mid;
  }
  const double in_var = background_variance(x_noisy, mask);
  if (!(in_var > 0)) throw ContractError("smoothness probe: input background variance is zero");
  Tape<T> tape(false);
  auto out = block.forward(tape, make_var(x_noisy), Mode::eval);
  return background_variance(out->value, mask) / in_var;
}

template class Dsaf<float>;
template class Dsaf<double>;
template double dsaf_smoothness_probe(Dsaf<float>&, const Tensor<float>&, const Tensor<float>&);
template double dsaf_smoothness_probe(Dsaf<double>&, const Tensor<double>&, const Tensor<double>&);

}  // namespace fsce
