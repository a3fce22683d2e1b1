#include <doctest.h>

#include <cmath>
#include <cstring>

#include "fsce/metrics.hpp"
#include "helpers.hpp"

using namespace fsce;

namespace {

// Direct O(N^2) evaluation of the mean silhouette.
double silhouette_ref(const std::vector<double>& f, int d, const std::vector<int>& y) {
  const int n = static_cast<int>(y.size());
  int k = 0;
  for (int v : y) k = std::max(k, v + 1);
  double total = 0;
  for (int i = 0; i < n; ++i) {
    std::vector<double> sum(k, 0);
    std::vector<int> cnt(k, 0);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      double s = 0;
      for (int t = 0; t < d; ++t) s += (f[i * d + t] - f[j * d + t]) * (f[i * d + t] - f[j * d + t]);
      sum[y[j]] += std::sqrt(s);
      ++cnt[y[j]];
    }
    const double a = sum[y[i]] / cnt[y[i]];
    double b = INFINITY;
    for (int c = 0; c < k; ++c)
      if (c != y[i] && cnt[c] > 0) b = std::min(b, sum[c] / cnt[c]);
    total += (b - a) / std::max(a, b);
  }
  return total / n;
}

std::vector<double> random_features(int n, int d, std::uint64_t seed, const std::vector<int>& y, double sep) {
  Rng rng(seed);
  std::vector<double> f(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < d; ++t) f[i * d + t] = rng.normal() + (t == 0 ? sep * y[i] : 0.0);
  return f;
}

}  // namespace

TEST_CASE("accuracy and confusion") {
  const std::vector<int> y{0, 1, 2, 3, 0, 1, 2, 3};
  CHECK(accuracy(y, y) == 1.0);
  std::vector<int> shifted(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) shifted[i] = (y[i] + 1) % 4;
  CHECK(accuracy(shifted, y) == 0.0);
  CHECK_THROWS_AS(accuracy({}, {}), ContractError);
  CHECK_THROWS_AS(accuracy({1}, {1, 2}), ContractError);

  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 2 + trial % 5, n = 30 + trial;
    std::vector<int> p(n), t(n);
    for (int i = 0; i < n; ++i) {
      p[i] = static_cast<int>(rng.below(k));
      t[i] = static_cast<int>(rng.below(k));
    }
    const auto cm = confusion(p, t, k);
    int hits = 0;
    std::vector<int> per_class(k, 0);
    for (int i = 0; i < n; ++i) {
      hits += p[i] == t[i];
      ++per_class[t[i]];
    }
    CHECK(cm.total() == static_cast<std::uint64_t>(n));
    CHECK(cm.trace() == static_cast<std::uint64_t>(hits));
    CHECK(accuracy(p, t) == doctest::Approx(static_cast<double>(hits) / n));
    for (int c = 0; c < k; ++c) {
      std::uint64_t row = 0;
      for (int q = 0; q < k; ++q) row += cm.at(c, q);
      CHECK(row == static_cast<std::uint64_t>(per_class[c]));
    }
  }
  CHECK_THROWS_AS(confusion({0, 5}, {0, 1}, 4), DataError);
}

TEST_CASE("silhouette of the four-point case") {
  const std::vector<double> f{0, 1, 10, 11};
  const std::vector<int> y{0, 0, 1, 1};
  // a = 1 for every point; b = 10.5 for the outer points and 9.5 for the inner ones.
  CHECK(silhouette(f, 1, y) == doctest::Approx((9.5 / 10.5 + 8.5 / 9.5) / 2).epsilon(1e-12));
  CHECK(std::abs(silhouette(f, 1, y) - 0.89975) <= 1e-5);
}

TEST_CASE("silhouette degenerate and limiting cases") {
  CHECK(silhouette({0, 1, 0, 1}, 1, {0, 0, 1, 1}) <= 0);
  CHECK(std::abs(silhouette({0, 1, 1e6, 1e6 + 1}, 1, {0, 0, 1, 1}) - 1.0) <= 1e-3);
  CHECK_THROWS_WITH_AS(silhouette({0, 1, 2}, 1, {0, 0, 1}), doctest::Contains("class 1"), ContractError);
  CHECK_THROWS_AS(silhouette({0, 1}, 1, {0, 0}), ContractError);
}

TEST_CASE("silhouette matches the direct evaluation and its invariances") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 24, d = 3;
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) y[i] = i % 3;
    const auto f = random_features(n, d, 100 + trial, y, 0.5 * trial);
    const double s = silhouette(f, d, y);
    CHECK(s >= -1);
    CHECK(s <= 1);
    CHECK(s == doctest::Approx(silhouette_ref(f, d, y)).epsilon(1e-9));

    // Translation, a rotation about a random axis, and positive scaling.
    const double ang = rng.uniform(0, 6.28), c = std::cos(ang), sn = std::sin(ang), scale = rng.uniform(0.1, 50);
    const double shift[3] = {rng.uniform(-9, 9), rng.uniform(-9, 9), rng.uniform(-9, 9)};
    std::vector<double> moved(f.size()), turned(f.size()), scaled(f.size());
    for (int i = 0; i < n; ++i) {
      const double* p = &f[i * d];
      for (int t = 0; t < d; ++t) {
        moved[i * d + t] = p[t] + shift[t];
        scaled[i * d + t] = scale * p[t];
      }
      turned[i * d + 0] = c * p[0] - sn * p[1];
      turned[i * d + 1] = sn * p[0] + c * p[1];
      turned[i * d + 2] = p[2];
    }
    CHECK(silhouette(moved, d, y) == doctest::Approx(s).epsilon(1e-9));
    CHECK(silhouette(turned, d, y) == doctest::Approx(s).epsilon(1e-9));
    CHECK(silhouette(scaled, d, y) == doctest::Approx(s).epsilon(1e-9));
  }
}

TEST_CASE("Grad-CAM of a one-channel linear toy model is relu(w A) normalized") {
  // logit = w * mean(A): the gradient is w / (h w) everywhere.
  const int h = 6, wd = 5;
  for (double w : {2.0, -1.5}) {
    const auto A = test::random_tensor<double>({1, 1, h, wd}, 7, -1, 1);
    Tensor<double> dA(A.shape(), w / (h * wd));
    const Image hm = grad_cam_map(A, dA, h, wd);
    double mx = 0;
    for (std::size_t i = 0; i < A.size(); ++i) mx = std::max(mx, std::max(w * A[i], 0.0));
    for (std::size_t i = 0; i < A.size(); ++i) CHECK(hm.px[i] == doctest::Approx(std::max(w * A[i], 0.0) / mx).epsilon(1e-6));
  }
  // Two channels: positive rescaling of the gradient keeps the normalized map.
  const auto A = test::random_tensor<double>({1, 2, 4, 4}, 8);
  const auto G = test::random_tensor<double>({1, 2, 4, 4}, 9);
  Tensor<double> G3(G.shape());
  for (std::size_t i = 0; i < G.size(); ++i) G3[i] = 3 * G[i];
  const Image a = grad_cam_map(A, G, 4, 4), b = grad_cam_map(A, G3, 4, 4);
  for (std::size_t i = 0; i < a.px.size(); ++i) CHECK(a.px[i] == doctest::Approx(b.px[i]).epsilon(1e-6));
  // Zero activations give an all-zero map.
  const Image z = grad_cam_map(Tensor<double>(Shape{1, 2, 4, 4}), G, 8, 8);
  for (float v : z.px) CHECK(v == 0.0f);
  CHECK_THROWS_AS(grad_cam_map(A, Tensor<double>(Shape{1, 2, 4, 3}), 4, 4), ShapeError);
}

TEST_CASE("Grad-CAM on a model") {
  Model<float> m(preset("student-M", 4, Insertion::s1), 3);
  const auto x = test::random_tensor<float>({1, 1, 32, 32}, 4, 0, 1);
  for (const char* tap : {"stem", "s1", "s2", "s4"}) {
    const Image hm = grad_cam(m, x, 1, tap);
    CHECK(hm.h == 32);
    CHECK(hm.w == 32);
    float mx = 0;
    for (float v : hm.px) {
      CHECK((v >= 0 && v <= 1));
      mx = std::max(mx, v);
    }
    CHECK((mx == 1.0f || mx == 0.0f));
  }
  CHECK_THROWS_AS(grad_cam(m, x, 1, "s7"), ConfigError);
  CHECK_THROWS_AS(grad_cam(m, x, 4, "s1"), ConfigError);

  // Zero stem weights make the stem tap identically zero.
  Model<float> dead(preset("student-M"), 3);
  for (auto* p : dead.refs().params)
    if (p->name == "stem.conv.weight") p->value().fill(0);
  const Image hm = grad_cam(dead, x, 0, "stem");
  for (float v : hm.px) CHECK(v == 0.0f);
}

TEST_CASE("PGM bytes") {
  Image img(2, 3);
  img.px = {0.0f, 0.5f, 1.0f, 1.5f, -1.0f, 0.2f};
  const auto bytes = encode_pgm(img);
  const std::string head = "P5\n3 2\n255\n";
  REQUIRE(bytes.size() == head.size() + 6);
  CHECK(std::memcmp(bytes.data(), head.data(), head.size()) == 0);
  const std::uint8_t px[6] = {0, 128, 255, 255, 0, 51};
  CHECK(std::memcmp(bytes.data() + head.size(), px, 6) == 0);
}
