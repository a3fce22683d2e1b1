#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fsce/gradcheck.hpp"
#include "fsce/ops.hpp"
#include "fsce/optim.hpp"
#include "helpers.hpp"

using namespace fsce;

namespace {

// Sliding-window reference: y[n][o][i][j] = b[o] + sum over the group's input
// channels and taps of w * x, with zeros outside the input.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b, int stride,
                          int pad, int groups) {
  const Shape xs = x.shape(), ws = w.shape();
  const int ho = (xs.h + 2 * pad - ws.h) / stride + 1, wo = (xs.w + 2 * pad - ws.w) / stride + 1;
  const int cin_g = xs.c / groups, cout_g = ws.n / groups;
  Tensor<double> y(Shape{xs.n, ws.n, ho, wo});
  for (int n = 0; n < xs.n; ++n)
    for (int o = 0; o < ws.n; ++o)
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j) {
          double acc = b ? (*b)[o] : 0.0;
          for (int c = 0; c < cin_g; ++c)
            for (int ki = 0; ki < ws.h; ++ki)
              for (int kj = 0; kj < ws.w; ++kj) {
                const int r = i * stride + ki - pad, q = j * stride + kj - pad;
                if (r < 0 || q < 0 || r >= xs.h || q >= xs.w) continue;
                acc += w.at(o, c, ki, kj) * x.at(n, (o / cout_g) * cin_g + c, r, q);
              }
          y.at(n, o, i, j) = acc;
        }
  return y;
}

Var<double> run_conv(const Tensor<double>& x, const Tensor<double>& w, Conv2dOptions opt) {
  Tape<double> tape(false);
  return conv2d(tape, make_var(x), make_var(w), Var<double>{}, opt);
}

}  // namespace

TEST_CASE("conv2d all-ones 3x3 with padding 1 gives the window-count pattern") {
  Tape<float> tape;
  auto x = make_var(Tensor<float>(Shape{1, 1, 3, 3}, 1.0f));
  auto w = make_var(Tensor<float>(Shape{1, 1, 3, 3}, 1.0f));
  auto y = conv2d(tape, x, w, Var<float>{}, {1, 1, 1});
  const float expected[9] = {4, 6, 4, 6, 9, 6, 4, 6, 4};
  REQUIRE(y->value.shape() == Shape{1, 1, 3, 3});
  for (int i = 0; i < 9; ++i) CHECK(y->value[i] == expected[i]);
}

TEST_CASE("conv2d with a centered delta kernel is the identity") {
  for (int k : {1, 3, 5, 7, 9}) {
    for (int groups : {1, 3}) {
      auto x = test::random_tensor<double>({2, 3, 10, 10}, 11 + k);
      Tensor<double> w(Shape{3, 3 / groups, k, k});
      for (int o = 0; o < 3; ++o) w.at(o, groups == 1 ? o : 0, k / 2, k / 2) = 1.0;
      auto y = run_conv(x, w, {1, k / 2, groups});
      CHECK(test::max_abs(y->value, x) == 0.0);
    }
  }
}

TEST_CASE("conv2d matches the sliding-window reference for every kernel path") {
  struct Cfg {
    int cin, cout, k, stride, pad, groups, hw;
  };
  // Covers the pointwise, im2col, depthwise and direct large-kernel paths.
  const Cfg cfgs[] = {{3, 4, 3, 1, 1, 1, 7},  {3, 4, 3, 2, 1, 1, 8},  {4, 6, 3, 1, 0, 2, 6}, {4, 3, 1, 1, 0, 1, 5},
                      {4, 3, 1, 2, 0, 1, 6},  {4, 4, 3, 1, 1, 4, 6},  {3, 3, 3, 2, 1, 3, 7}, {2, 3, 5, 1, 2, 1, 9},
                      {2, 2, 7, 1, 1, 1, 9},  {4, 2, 7, 1, 3, 2, 6},  {4, 4, 9, 1, 4, 1, 8}, {2, 2, 5, 2, 2, 1, 9},
                      {6, 6, 5, 1, 2, 6, 8}, {1, 8, 3, 1, 1, 1, 12}, {12, 12, 9, 1, 4, 1, 2},
                      {4, 4, 9, 2, 4, 1, 2}};
  int seed = 0;
  for (const Cfg& c : cfgs) {
    CAPTURE(c.cin);
    CAPTURE(c.cout);
    CAPTURE(c.k);
    CAPTURE(c.stride);
    CAPTURE(c.groups);
    auto x = test::random_tensor<double>({2, c.cin, c.hw, c.hw}, ++seed);
    auto w = test::random_tensor<double>({c.cout, c.cin / c.groups, c.k, c.k}, ++seed);
    auto b = test::random_tensor<double>({1, c.cout, 1, 1}, ++seed);
    Tape<double> tape(false);
    auto y = conv2d(tape, make_var(x), make_var(w), make_var(b), {c.stride, c.pad, c.groups});
    const auto ref = naive_conv(x, w, &b, c.stride, c.pad, c.groups);
    REQUIRE(y->value.shape() == ref.shape());
    CHECK(test::max_abs(y->value, ref) < 1e-12);
  }
}

TEST_CASE("conv2d is linear in its input") {
  for (int k : {3, 9}) {
    auto x = test::random_tensor<float>({2, 4, 12, 12}, 1);
    auto z = test::random_tensor<float>({2, 4, 12, 12}, 2);
    auto w = make_var(test::random_tensor<float>({4, 4, k, k}, 3));
    const float a = 0.7f, b = -1.3f;
    Tensor<float> mix(x.shape());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * z[i];
    Tape<float> tape(false);
    const Conv2dOptions opt{1, k / 2, 1};
    auto lhs = conv2d(tape, make_var(mix), w, Var<float>{}, opt)->value;
    auto cx = conv2d(tape, make_var(x), w, Var<float>{}, opt)->value;
    auto cz = conv2d(tape, make_var(z), w, Var<float>{}, opt)->value;
    double worst = 0;
    for (std::size_t i = 0; i < lhs.size(); ++i) {
      const double rhs = a * cx[i] + b * cz[i];
      worst = std::max(worst, std::abs(lhs[i] - rhs) / std::max(1.0, std::abs(rhs)));
    }
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("conv2d output shapes follow the closed form") {
  for (int k : {1, 3, 5})
    for (int s : {1, 2, 3})
      for (int p : {0, 1, 2}) {
        if (k == 1 && p > 0) continue;
        Tape<float> tape(false);
        auto x = make_var(Tensor<float>(Shape{1, 2, 11, 9}));
        auto w = make_var(Tensor<float>(Shape{3, 2, k, k}));
        auto y = conv2d(tape, x, w, Var<float>{}, {s, p, 1});
        CHECK(y->value.shape() == Shape{1, 3, (11 + 2 * p - k) / s + 1, (9 + 2 * p - k) / s + 1});
      }
}

TEST_CASE("conv2d rejects bad configurations") {
  Tape<float> tape(false);
  auto x = make_var(Tensor<float>(Shape{1, 4, 6, 6}));
  CHECK_THROWS_AS(conv2d(tape, x, make_var(Tensor<float>(Shape{3, 2, 3, 3})), Var<float>{}, {1, 1, 2}),
                  ConfigError);
  CHECK_THROWS_AS(conv2d(tape, x, make_var(Tensor<float>(Shape{4, 4, 3, 3})), Var<float>{}, {1, 1, 3}),
                  ConfigError);
  CHECK_THROWS_WITH_AS(conv2d(tape, x, make_var(Tensor<float>(Shape{4, 3, 3, 3})), Var<float>{}, {1, 1, 1}),
                       doctest::Contains("in-channel"), ConfigError);
  CHECK_THROWS_AS(conv2d(tape, x, make_var(Tensor<float>(Shape{4, 4, 2, 2})), Var<float>{}, {1, 1, 1}),
                  ConfigError);
}

TEST_CASE("pooling examples") {
  Tape<float> tape(false);
  auto x = make_var(Tensor<float>(Shape{1, 1, 2, 2}, {1, 2, 3, 4}));
  CHECK(avg_pool2d(tape, x, 2)->value[0] == doctest::Approx(2.5));
  CHECK(max_pool2d(tape, x, 2)->value[0] == 4.0f);
  auto y = make_var(test::random_tensor<float>({2, 3, 3, 3}, 5));
  CHECK(test::bitwise_equal(adaptive_avg_pool2d(tape, y, 3, 3)->value, y->value));
  CHECK_THROWS_AS(pool(tape, y, PoolKind::adaptive_avg, 0, 3), ConfigError);
  CHECK_THROWS_AS(pool(tape, y, PoolKind::avg, 0, 0), ConfigError);
  // Trailing rows and columns that do not fill a window are dropped.
  auto z = make_var(Tensor<float>(Shape{1, 1, 3, 3}, {1, 2, 9, 3, 4, 9, 9, 9, 9}));
  auto p = avg_pool2d(tape, z, 2);
  REQUIRE(p->value.shape() == Shape{1, 1, 1, 1});
  CHECK(p->value[0] == doctest::Approx(2.5));
}

TEST_CASE("adaptive average pooling bins follow floor/ceil edges") {
  Tape<double> tape(false);
  Tensor<double> t(Shape{1, 1, 1, 5}, {1, 2, 3, 4, 5});
  auto y = adaptive_avg_pool2d(tape, make_var(t), 1, 3);
  // bins [0,2), [1,4), [3,5)
  CHECK(y->value[0] == doctest::Approx(1.5));
  CHECK(y->value[1] == doctest::Approx(3.0));
  CHECK(y->value[2] == doctest::Approx(4.5));
}

TEST_CASE("max pooling routes the gradient to the first maximum in scan order") {
  Tape<float> tape;
  auto x = make_var(Tensor<float>(Shape{1, 1, 2, 2}, {7, 7, 1, 7}), true);
  auto y = max_pool2d(tape, x, 2);
  tape.backward(sum(tape, y));
  CHECK(x->grad[0] == 1.0f);
  CHECK(x->grad[1] == 0.0f);
  CHECK(x->grad[3] == 0.0f);
}

TEST_CASE("activation examples") {
  Tape<double> tape(false);
  CHECK(sigmoid(tape, make_var(Tensor<double>(Shape{1, 1, 1, 1}, 0.0)))->value[0] == 0.5);
  auto r = relu(tape, make_var(Tensor<double>(Shape{1, 2, 1, 1}, {-3, 3})));
  CHECK(r->value[0] == 0.0);
  CHECK(r->value[1] == 3.0);
  // softmax([2, 0] / 2) = softmax([1, 0]) = (e, 1) / (e + 1)
  auto z = make_var(Tensor<double>(Shape{1, 2, 1, 1}, {2.0 / 2, 0.0 / 2}));
  auto s = softmax(tape, z);
  const double e = std::numbers::e;
  CHECK(s->value[0] == doctest::Approx(e / (e + 1)).epsilon(1e-9));
  CHECK(s->value[0] == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(s->value[1] == doctest::Approx(0.2689).epsilon(1e-4));
}

TEST_CASE("softmax rows sum to one and log_softmax is its logarithm") {
  auto z = make_var(test::random_tensor<double>({6, 5, 1, 1}, 9, -30, 30));
  Tape<double> tape(false);
  auto s = softmax(tape, z);
  auto ls = log_softmax(tape, z);
  for (int n = 0; n < 6; ++n) {
    double row = 0;
    for (int k = 0; k < 5; ++k) {
      row += s->value.at(n, k, 0, 0);
      CHECK(std::abs(ls->value.at(n, k, 0, 0) - std::log(s->value.at(n, k, 0, 0))) <= 1e-6);
    }
    CHECK(std::abs(row - 1.0) <= 1e-6);
  }
  // Spatial axis works too.
  auto zs = make_var(test::random_tensor<double>({2, 3, 4, 4}, 10));
  auto ss = softmax(tape, zs, 1);
  for (int h = 0; h < 4; ++h) {
    double col = 0;
    for (int c = 0; c < 3; ++c) col += ss->value.at(1, c, h, 2);
    CHECK(std::abs(col - 1.0) <= 1e-12);
  }
}

TEST_CASE("batch_norm train mode normalizes and moves the running estimates") {
  const auto xt = test::random_tensor<double>({4, 2, 3, 3}, 21, -2, 3);
  auto x = make_var(xt);
  auto g = make_var(Tensor<double>(Shape{1, 2, 1, 1}, 1.0));
  auto b = make_var(Tensor<double>(Shape{1, 2, 1, 1}, 0.0));
  Tensor<double> rm(Shape{1, 2, 1, 1}, 0.0), rv(Shape{1, 2, 1, 1}, 1.0);
  Tape<double> tape(false);
  auto y = batch_norm(tape, x, g, b, rm, rv, Mode::train);
  for (int c = 0; c < 2; ++c) {
    double m = 0, v = 0, ym = 0, yv = 0;
    const int M = 4 * 9;
    for (int n = 0; n < 4; ++n)
      for (int p = 0; p < 9; ++p) m += xt.at(n, c, p / 3, p % 3);
    m /= M;
    for (int n = 0; n < 4; ++n)
      for (int p = 0; p < 9; ++p) {
        const double d = xt.at(n, c, p / 3, p % 3) - m;
        v += d * d;
        ym += y->value.at(n, c, p / 3, p % 3);
      }
    ym /= M;
    for (int n = 0; n < 4; ++n)
      for (int p = 0; p < 9; ++p) yv += std::pow(y->value.at(n, c, p / 3, p % 3) - ym, 2);
    CHECK(std::abs(ym) < 1e-12);
    CHECK(yv / M == doctest::Approx(v / M / (v / M + 1e-5)).epsilon(1e-9));
    CHECK(rm[c] == doctest::Approx(0.1 * m).epsilon(1e-12));
    CHECK(rv[c] == doctest::Approx(0.9 + 0.1 * v / (M - 1)).epsilon(1e-12));
  }
  // Eval mode uses the running estimates.
  auto ye = batch_norm(tape, x, g, b, rm, rv, Mode::eval);
  CHECK(ye->value[0] == doctest::Approx((xt[0] - rm[0]) / std::sqrt(rv[0] + 1e-5)).epsilon(1e-12));
}

TEST_CASE("batch_norm rejects degenerate batch statistics in train mode") {
  auto x = make_var(Tensor<float>(Shape{1, 3, 1, 1}, 1.0f));
  auto g = make_var(Tensor<float>(Shape{1, 3, 1, 1}, 1.0f));
  auto b = make_var(Tensor<float>(Shape{1, 3, 1, 1}, 0.0f));
  Tensor<float> rm(Shape{1, 3, 1, 1}), rv(Shape{1, 3, 1, 1}, 1.0f);
  Tape<float> tape(false);
  CHECK_THROWS_AS(batch_norm(tape, x, g, b, rm, rv, Mode::train), ContractError);
  CHECK_NOTHROW(batch_norm(tape, x, g, b, rm, rv, Mode::eval));
}

TEST_CASE("mlp2 computes W2 relu(W1 v) and accumulates gradients of shared weights") {
  Tensor<double> v(Shape{1, 2, 1, 1}, {1.0, -2.0});
  Tensor<double> w1(Shape{2, 2, 1, 1}, {1.0, 1.0, 2.0, 0.5});  // rows: (1,1), (2,0.5)
  Tensor<double> w2(Shape{1, 2, 1, 1}, {3.0, -1.0});
  auto W1 = make_var(w1, true), W2 = make_var(w2, true);
  Tape<double> tape;
  auto y = mlp2(tape, make_var(v), W1, W2);
  // hidden = relu(-1, 1) = (0, 1); y = 3*0 - 1*1 = -1
  CHECK(y->value[0] == doctest::Approx(-1.0));
  auto y2 = mlp2(tape, make_var(v), W1, W2);
  tape.backward(add(tape, y, y2));
  // d/dW2 = hidden per call, summed over two call sites.
  CHECK(W2->grad[0] == doctest::Approx(0.0));
  CHECK(W2->grad[1] == doctest::Approx(2.0));
}

TEST_CASE("backward basics") {
  auto xt = test::random_tensor<double>({2, 3, 2, 2}, 31);
  {
    auto x = make_var(xt, true);
    Tape<double> tape;
    tape.backward(sum(tape, x));
    for (std::size_t i = 0; i < xt.size(); ++i) CHECK(x->grad[i] == 1.0);
  }
  {
    auto x = make_var(xt, true);
    Tape<double> tape;
    tape.backward(sum(tape, mul(tape, x, x)));
    for (std::size_t i = 0; i < xt.size(); ++i) CHECK(std::abs(x->grad[i] - 2 * xt[i]) <= 1e-6);
  }
  {
    auto x = make_var(xt, true);
    Tape<double> tape;
    auto y = relu(tape, x);
    CHECK_THROWS_AS(tape.backward(y), ContractError);
  }
  {
    Parameter<double> used("used", {1}, Shape{1, 1, 1, 1});
    Parameter<double> unused("unused", {1}, Shape{1, 1, 1, 1});
    used.value()[0] = 2.0;
    used.zero_grad();
    unused.zero_grad();
    Tape<double> tape;
    tape.backward(scale(tape, used.var, 3.0));
    CHECK(used.grad()[0] == 3.0);
    CHECK(unused.grad()[0] == 0.0);
  }
}

TEST_CASE("forward and backward are bitwise deterministic") {
  auto run = [] {
    Rng rng(3);
    auto x = make_var(test::random_tensor<float>({4, 3, 16, 16}, 1), true);
    auto w = make_var(test::random_tensor<float>({6, 3, 5, 5}, 2), true);
    auto w2 = make_var(test::random_tensor<float>({6, 1, 3, 3}, 3), true);
    Tape<float> tape;
    auto y = conv2d(tape, relu(tape, conv2d(tape, x, w, Var<float>{}, {1, 2, 1})), w2, Var<float>{}, {2, 1, 6});
    tape.backward(sum(tape, y));
    return std::vector<Tensor<float>>{y->value, x->grad, w->grad, w2->grad};
  };
  const auto a = run(), b = run();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(test::bitwise_equal(a[i], b[i]));
}

TEST_CASE("AdamW step matches a hand-computed update") {
  Parameter<double> p("p", {2}, Shape{1, 2, 1, 1});
  p.value()[0] = 1.0;
  p.value()[1] = -0.5;
  AdamW<double> opt({&p}, AdamWConfig{0.9, 0.999, 1e-8, 0.01});
  const double lr = 0.1;
  double m[2] = {0, 0}, v[2] = {0, 0}, w[2] = {1.0, -0.5};
  const double grads[2][2] = {{0.3, -0.2}, {0.1, 0.4}};
  for (int t = 1; t <= 2; ++t) {
    p.zero_grad();
    p.grad()[0] = grads[t - 1][0];
    p.grad()[1] = grads[t - 1][1];
    opt.step(lr);
    for (int i = 0; i < 2; ++i) {
      const double g = grads[t - 1][i];
      w[i] -= lr * 0.01 * w[i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      w[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
      CHECK(p.value()[i] == doctest::Approx(w[i]).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(opt.step(-1.0), ConfigError);
}

TEST_CASE("learning-rate schedules") {
  ScheduleConfig c;
  c.lr_max = 2e-3;
  c.lr_min = 1e-5;
  CHECK(scheduler_lr(Schedule::cosine, 0, 100, c) == doctest::Approx(c.lr_max));
  CHECK(scheduler_lr(Schedule::cosine, 100, 100, c) == doctest::Approx(c.lr_min));
  CHECK(scheduler_lr(Schedule::cosine, 50, 100, c) == doctest::Approx((c.lr_max + c.lr_min) / 2));
  CHECK(scheduler_lr(Schedule::onecycle, 30, 100, c) == doctest::Approx(c.lr_max));
  CHECK(scheduler_lr(Schedule::onecycle, 0, 100, c) == doctest::Approx(c.lr_max / 25));
  CHECK(scheduler_lr(Schedule::onecycle, 100, 100, c) == doctest::Approx(c.lr_max / 25 / 1e4));
  CHECK(scheduler_lr(Schedule::onecycle, 15, 100, c) == doctest::Approx((c.lr_max / 25 + c.lr_max) / 2));
  ScheduleConfig bad = c;
  bad.lr_max = -1;
  CHECK_THROWS_AS(scheduler_lr(Schedule::cosine, 0, 10, bad), ConfigError);
  CHECK_THROWS_AS(scheduler_lr(Schedule::cosine, 11, 10, c), ConfigError);
}

TEST_CASE("finite-difference suite: every primitive within tolerance") {
  GradcheckOptions opt;
  REQUIRE(opt.trials >= 20);
  const auto results = run_gradcheck(opt);
  CHECK(results.size() >= 40);
  for (const auto& r : results) {
    CAPTURE(r.name);
    CAPTURE(r.max_rel_error);
    const bool block = r.name.rfind("cbam", 0) == 0 || r.name.rfind("wtconv", 0) == 0 || r.name.rfind("dsaf", 0) == 0;
    CHECK(r.tolerance == (block ? 1e-4 : 1e-5));
    CHECK(r.trials == (block ? opt.block_trials : opt.trials));
    CHECK(r.passed());
  }
}

TEST_CASE("gradcheck_once detects a wrong gradient") {
  // An op whose recorded backward is off by a factor of two must be caught.
  auto x = make_var(test::random_tensor<double>({1, 1, 2, 2}, 1), true);
  auto f = [&](Tape<double>& tape) {
    auto y = make_var(x->value);
    for (std::size_t i = 0; i < y->value.size(); ++i) y->value[i] = 3 * x->value[i];
    if (tape.recording()) {
      y->requires_grad = true;
      tape.push("bad", [x, y] {
        for (std::size_t i = 0; i < y->value.size(); ++i) x->grad_ref()[i] += 6 * y->grad[i];
      });
    }
    return y;
  };
  CHECK(gradcheck_once(f, {x}, 1e-5, 7) > 0.4);
}
