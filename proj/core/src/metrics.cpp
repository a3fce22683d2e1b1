#include "fsce/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "fsce/checkpoint.hpp"

namespace fsce {

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (int i = 0; i < k; ++i) t += at(i, i);
  return t;
}

namespace {

void check_pair(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.empty()) throw ContractError("metrics: empty input");
  if (preds.size() != labels.size()) {
    throw ContractError("metrics: " + std::to_string(preds.size()) + " predictions vs " +
                        std::to_string(labels.size()) + " labels");
  }
}

}  // namespace

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels, int k) {
  check_pair(preds, labels);
  if (k < 1) throw ContractError("confusion: class count must be >= 1");
  ConfusionMatrix m{k, std::vector<std::uint64_t>(static_cast<std::size_t>(k) * k, 0)};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= k || preds[i] < 0 || preds[i] >= k) {
      throw DataError("confusion: sample " + std::to_string(i) + " has a class outside [0, " + std::to_string(k) + ")");
    }
    ++m.counts[static_cast<std::size_t>(labels[i]) * k + preds[i]];
  }
  return m;
}

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
  check_pair(preds, labels);
  int k = 1;
  for (std::size_t i = 0; i < preds.size(); ++i) k = std::max({k, preds[i] + 1, labels[i] + 1});
  const auto m = confusion(preds, labels, k);
  return static_cast<double>(m.trace()) / static_cast<double>(m.total());
}

double silhouette(const std::vector<double>& f, int dim, const std::vector<int>& labels) {
  const std::size_t n = labels.size();
  if (dim < 1 || f.size() != n * static_cast<std::size_t>(dim)) throw ContractError("silhouette: features are not N x D");
  std::map<int, std::size_t> sizes;
  for (int l : labels) ++sizes[l];
  if (sizes.size() < 2) throw ContractError("silhouette: needs at least 2 classes");
  for (const auto& [cls, cnt] : sizes) {
    if (cnt < 2) throw ContractError("silhouette: class " + std::to_string(cls) + " has a single member");
  }
  std::map<int, int> slot;
  for (const auto& [cls, cnt] : sizes) slot.emplace(cls, static_cast<int>(slot.size()));
  std::vector<std::size_t> count(slot.size());
  for (const auto& [cls, cnt] : sizes) count[slot[cls]] = cnt;

  double total = 0;
  std::vector<double> acc(slot.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const double* fi = f.data() + i * dim;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double* fj = f.data() + j * dim;
      double d2 = 0;
      for (int k = 0; k < dim; ++k) d2 += (fi[k] - fj[k]) * (fi[k] - fj[k]);
      acc[slot[labels[j]]] += std::sqrt(d2);
    }
    const int own = slot[labels[i]];
    const double a = acc[own] / static_cast<double>(count[own] - 1);
    double b = INFINITY;
    for (std::size_t c = 0; c < acc.size(); ++c) {
      if (static_cast<int>(c) != own) b = std::min(b, acc[c] / static_cast<double>(count[c]));
    }
    const double den = std::max(a, b);
    total += den > 0 ? (b - a) / den : 0.0;
  }
  return total / static_cast<double>(n);
}

Image grad_cam_map(const Tensor<double>& act, const Tensor<double>& grad, int out_h, int out_w) {
  const Shape s = act.shape();
  if (!(grad.shape() == s)) throw ShapeError("grad_cam: activation and gradient shapes differ");
  if (s.n != 1) throw ShapeError("grad_cam: expects a single sample");
  const std::size_t P = s.plane();
  std::vector<double> cam(P, 0.0);
  for (int c = 0; c < s.c; ++c) {
    const double* g = grad.data() + grad.index(0, c, 0, 0);
    const double* a = act.data() + act.index(0, c, 0, 0);
    double alpha = 0;
    for (std::size_t i = 0; i < P; ++i) alpha += g[i];
    alpha /= static_cast<double>(P);
    for (std::size_t i = 0; i < P; ++i) cam[i] += alpha * a[i];
  }
  Image small(s.h, s.w);
  for (std::size_t i = 0; i < P; ++i) small.px[i] = static_cast<float>(std::max(0.0, cam[i]));
  Image out = resize_bilinear(small, out_h, out_w);
  const float mx = *std::max_element(out.px.begin(), out.px.end());
  if (mx > 0) {
    for (auto& v : out.px) v = std::clamp(v / mx, 0.0f, 1.0f);
  } else {
    std::fill(out.px.begin(), out.px.end(), 0.0f);
  }
  return out;
}

Image grad_cam(Model<float>& model, const Tensor<float>& input, int class_id, const std::string& tap) {
  const Shape s = input.shape();
  if (s.n != 1) throw ShapeError("grad_cam: expects a single (1, C, H, W) input");
  const int K = model.config().num_classes;
  if (class_id < 0 || class_id >= K) throw ConfigError("grad_cam: class id outside [0, " + std::to_string(K) + ")");
  const int idx = parse_tap(tap, static_cast<int>(model.config().stages.size()));
  Tape<float> tape;
  ModelTaps<float> taps;
  auto logits = model.forward(tape, make_var(input, true), Mode::eval, &taps);
  auto score = pick(tape, logits, std::vector<int>{class_id});
  tape.backward(score);
  const auto& a = taps.points[idx];
  Tensor<double> act = a->value.cast<double>();
  Tensor<double> grad = a->has_grad() ? a->grad.cast<double>() : Tensor<double>(a->value.shape());
  return grad_cam_map(act, grad, s.h, s.w);
}

std::vector<std::uint8_t> encode_pgm(const Image& img) {
  const std::string header = "P5\n" + std::to_string(img.w) + " " + std::to_string(img.h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (float v : img.px) out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
  return out;
}

void write_pgm(const std::string& path, const Image& img) { write_file_bytes(path, encode_pgm(img)); }

}  // namespace fsce
