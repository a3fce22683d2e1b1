#include "fsce/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "fsce/attention.hpp"
#include "fsce/distill.hpp"
#include "fsce/dsaf.hpp"
#include "fsce/ops.hpp"
#include "fsce/rng.hpp"
#include "fsce/wavelet.hpp"

namespace fsce {

using D = double;
using Fn = std::function<Var<D>(Tape<D>&)>;

double gradcheck_once(const Fn& f, const std::vector<Var<D>>& vars, double h, std::uint64_t projection_seed) {
  Tensor<D> proj;
  {
    Tape<D> probe(false);
    const Shape s = f(probe)->value.shape();
    proj = Tensor<D>(s);
    Rng rng(projection_seed);
    for (std::size_t i = 0; i < proj.size(); ++i) proj[i] = rng.uniform(-1.0, 1.0);
  }
  for (const auto& v : vars) v->grad_ref().fill(0);
  {
    Tape<D> tape;
    auto loss = weighted_sum(tape, f(tape), proj);
    tape.backward(loss);
  }
  auto eval = [&] {
    Tape<D> tape(false);
    return weighted_sum(tape, f(tape), proj)->value[0];
  };
  double worst = 0;
  for (const auto& v : vars) {
    for (std::size_t i = 0; i < v->value.size(); ++i) {
      const D orig = v->value[i];
      v->value[i] = orig + h;
      const D up = eval();
      v->value[i] = orig - h;
      const D down = eval();
      v->value[i] = orig;
      const double num = (up - down) / (2 * h);
      const double ana = v->grad[i];
      const double denom = std::max({std::abs(ana), std::abs(num), kGradcheckFloor});
      worst = std::max(worst, std::abs(ana - num) / denom);
    }
  }
  return worst;
}

namespace {

Var<D> rand_var(Rng& rng, Shape s, double lo = -1, double hi = 1) {
  Tensor<D> t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return make_var(std::move(t), true);
}

struct Case {
  std::string name;
  bool block = false;
  // Builds the inputs for one trial and returns the function to check.
  std::function<Fn(Rng&, std::vector<Var<D>>&)> setup;
};

Case conv_case(const std::string& name, int cin, int cout, int k, Conv2dOptions opt, bool bias, int hw) {
  return {name, false, [=](Rng& rng, std::vector<Var<D>>& vars) {
            auto x = rand_var(rng, {2, cin, hw, hw});
            auto w = rand_var(rng, {cout, cin / opt.groups, k, k});
            Var<D> b = bias ? rand_var(rng, {1, cout, 1, 1}) : nullptr;
            vars = {x, w};
            if (b) vars.push_back(b);
            return Fn([=](Tape<D>& t) { return conv2d(t, x, w, b, opt); });
          }};
}

template <typename Op>
Case unary_case(const std::string& name, Shape s, Op op) {
  return {name, false, [=](Rng& rng, std::vector<Var<D>>& vars) {
            auto x = rand_var(rng, s);
            vars = {x};
            return Fn([=](Tape<D>& t) { return op(t, x); });
          }};
}

std::vector<Case> cases() {
  std::vector<Case> c;
  c.push_back(conv_case("conv2d 3x3 g1", 3, 4, 3, {1, 1, 1}, true, 6));
  c.push_back(conv_case("conv2d 3x3 g1 stride2", 3, 4, 3, {2, 1, 1}, false, 7));
  c.push_back(conv_case("conv2d 3x3 g2", 4, 6, 3, {1, 1, 2}, true, 5));
  c.push_back(conv_case("conv2d 1x1 pointwise", 4, 3, 1, {1, 0, 1}, true, 5));
  c.push_back(conv_case("conv2d 1x1 stride2", 4, 3, 1, {2, 0, 1}, false, 6));
  c.push_back(conv_case("conv2d depthwise 3x3", 4, 4, 3, {1, 1, 4}, true, 6));
  c.push_back(conv_case("conv2d depthwise 3x3 stride2", 3, 3, 3, {2, 1, 3}, false, 7));
  c.push_back(conv_case("conv2d 5x5 direct", 2, 3, 5, {1, 2, 1}, false, 6));
  c.push_back(conv_case("conv2d 7x7 direct pad1", 2, 2, 7, {1, 1, 1}, true, 9));
  c.push_back(conv_case("conv2d 7x7 direct g2", 4, 2, 7, {1, 3, 2}, false, 6));
  c.push_back(unary_case("avg_pool2d", {2, 2, 6, 6}, [](Tape<D>& t, const Var<D>& x) { return avg_pool2d(t, x, 2); }));
  c.push_back(unary_case("max_pool2d", {2, 2, 6, 6}, [](Tape<D>& t, const Var<D>& x) { return max_pool2d(t, x, 2); }));
  c.push_back(unary_case("max_pool2d overlapping", {1, 2, 7, 7},
                         [](Tape<D>& t, const Var<D>& x) { return max_pool2d(t, x, 3, 2); }));
  c.push_back(unary_case("adaptive_avg_pool2d", {2, 2, 7, 5},
                         [](Tape<D>& t, const Var<D>& x) { return adaptive_avg_pool2d(t, x, 3, 2); }));
  c.push_back(unary_case("spatial_mean", {2, 3, 4, 4}, [](Tape<D>& t, const Var<D>& x) { return spatial_mean(t, x); }));
  c.push_back(unary_case("spatial_max", {2, 3, 4, 4}, [](Tape<D>& t, const Var<D>& x) { return spatial_max(t, x); }));
  c.push_back(unary_case("channel_mean", {2, 3, 4, 4}, [](Tape<D>& t, const Var<D>& x) { return channel_mean(t, x); }));
  c.push_back(unary_case("channel_max", {2, 3, 4, 4}, [](Tape<D>& t, const Var<D>& x) { return channel_max(t, x); }));
  c.push_back(unary_case("relu", {2, 3, 4, 4}, [](Tape<D>& t, const Var<D>& x) { return relu(t, x); }));
  c.push_back(unary_case("sigmoid", {2, 3, 4, 4}, [](Tape<D>& t, const Var<D>& x) { return sigmoid(t, x); }));
  c.push_back(unary_case("softmax", {3, 5, 1, 1}, [](Tape<D>& t, const Var<D>& x) { return softmax(t, x); }));
  c.push_back(unary_case("log_softmax", {3, 5, 1, 1}, [](Tape<D>& t, const Var<D>& x) { return log_softmax(t, x); }));
  c.push_back(unary_case("scale", {2, 3, 2, 2}, [](Tape<D>& t, const Var<D>& x) { return scale(t, x, 1.7); }));
  c.push_back(unary_case("sum", {2, 3, 2, 2}, [](Tape<D>& t, const Var<D>& x) { return sum(t, x); }));
  c.push_back(unary_case("mean", {2, 3, 2, 2}, [](Tape<D>& t, const Var<D>& x) { return mean(t, x); }));
  c.push_back(unary_case("slice_channels", {2, 5, 2, 2},
                         [](Tape<D>& t, const Var<D>& x) { return slice_channels(t, x, 1, 4); }));
  c.push_back(unary_case("pick", {3, 4, 1, 1}, [](Tape<D>& t, const Var<D>& x) { return pick(t, x, {2, 0, 3}); }));
  c.push_back(unary_case("dwt2", {2, 2, 6, 4}, [](Tape<D>& t, const Var<D>& x) { return dwt2(t, x); }));
  c.push_back(unary_case("iwt2", {2, 8, 3, 2}, [](Tape<D>& t, const Var<D>& x) { return iwt2(t, x); }));
  for (Mode mode : {Mode::train, Mode::eval}) {
    c.push_back({mode == Mode::train ? "batch_norm train" : "batch_norm eval", false,
                 [mode](Rng& rng, std::vector<Var<D>>& vars) {
                   auto x = rand_var(rng, {3, 2, 3, 3});
                   auto g = rand_var(rng, {1, 2, 1, 1}, 0.5, 1.5);
                   auto b = rand_var(rng, {1, 2, 1, 1});
                   auto rm = std::make_shared<Tensor<D>>(Shape{1, 2, 1, 1}, 0.1);
                   auto rv = std::make_shared<Tensor<D>>(Shape{1, 2, 1, 1}, 0.8);
                   vars = {x, g, b};
                   return Fn([=](Tape<D>& t) { return batch_norm(t, x, g, b, *rm, *rv, mode); });
                 }});
  }
  c.push_back({"linear", false, [](Rng& rng, std::vector<Var<D>>& vars) {
                 auto x = rand_var(rng, {3, 2, 2, 1});
                 auto w = rand_var(rng, {5, 4, 1, 1});
                 auto b = rand_var(rng, {1, 5, 1, 1});
                 vars = {x, w, b};
                 return Fn([=](Tape<D>& t) { return linear(t, x, w, b); });
               }});
  c.push_back({"mlp2", false, [](Rng& rng, std::vector<Var<D>>& vars) {
                 auto v = rand_var(rng, {2, 6, 1, 1});
                 auto w1 = rand_var(rng, {4, 6, 1, 1});
                 auto w2 = rand_var(rng, {6, 4, 1, 1});
                 vars = {v, w1, w2};
                 return Fn([=](Tape<D>& t) { return mlp2(t, v, w1, w2); });
               }});
  for (bool broadcast : {false, true}) {
    const std::string suffix = broadcast ? " broadcast" : "";
    const Shape bs = broadcast ? Shape{2, 3, 1, 1} : Shape{2, 3, 4, 4};
    c.push_back({"add" + suffix, false, [bs](Rng& rng, std::vector<Var<D>>& vars) {
                   auto a = rand_var(rng, {2, 3, 4, 4});
                   auto b = rand_var(rng, bs);
                   vars = {a, b};
                   return Fn([=](Tape<D>& t) { return add(t, a, b); });
                 }});
    c.push_back({"mul" + suffix, false, [bs](Rng& rng, std::vector<Var<D>>& vars) {
                   auto a = rand_var(rng, {2, 3, 4, 4});
                   auto b = rand_var(rng, bs);
                   vars = {a, b};
                   return Fn([=](Tape<D>& t) { return mul(t, a, b); });
                 }});
  }
  c.push_back({"concat_channels", false, [](Rng& rng, std::vector<Var<D>>& vars) {
                 auto a = rand_var(rng, {2, 2, 3, 3});
                 auto b = rand_var(rng, {2, 3, 3, 3});
                 vars = {a, b};
                 return Fn([=](Tape<D>& t) { return concat_channels(t, std::vector<Var<D>>{a, b}); });
               }});
  c.push_back({"kd_loss", false, [](Rng& rng, std::vector<Var<D>>& vars) {
                 auto s = rand_var(rng, {4, 5, 1, 1}, -3, 3);
                 Tensor<D> teacher(Shape{4, 5, 1, 1});
                 for (std::size_t i = 0; i < teacher.size(); ++i) teacher[i] = rng.uniform(-3, 3);
                 const double temp = rng.uniform(1, 5);
                 vars = {s};
                 return Fn([=](Tape<D>& t) { return kd_loss(t, s, teacher, temp); });
               }});
  c.push_back({"ce_loss", false, [](Rng& rng, std::vector<Var<D>>& vars) {
                 auto s = rand_var(rng, {4, 5, 1, 1}, -3, 3);
                 std::vector<int> labels(4);
                 for (auto& l : labels) l = rng.uniform_int(0, 4);
                 vars = {s};
                 return Fn([=](Tape<D>& t) { return ce_loss(t, s, labels); });
               }});
  for (bool legacy : {false, true}) {
    c.push_back({legacy ? "cbam legacy order" : "cbam", true, [legacy](Rng& rng, std::vector<Var<D>>& vars) {
                   CbamConfig cfg;
                   cfg.channels = 6;
                   cfg.reduction = 2;
                   cfg.legacy_order = legacy;
                   auto m = std::make_shared<Cbam<D>>("cbam", cfg, rng);
                   auto x = rand_var(rng, {2, 6, 5, 5});
                   ParamRefs<D> r;
                   m->collect(r);
                   vars = {x};
                   for (auto* p : r.params) vars.push_back(p->var);
                   return Fn([=](Tape<D>& t) { return m->forward(t, x); });
                 }});
  }
  for (int stride : {1, 2}) {
    c.push_back({stride == 1 ? "wtconv" : "wtconv stride2", true, [stride](Rng& rng, std::vector<Var<D>>& vars) {
                   auto m = std::make_shared<WtConv<D>>("wt", WtConvConfig{3, stride}, rng);
                   // Move off the delta / unit initialization so every term is exercised.
                   for (std::size_t i = 0; i < m->subband_kernels.value().size(); ++i)
                     m->subband_kernels.value()[i] += rng.uniform(-0.5, 0.5);
                   for (std::size_t i = 0; i < m->gamma.value().size(); ++i) m->gamma.value()[i] = rng.uniform(0.5, 1.5);
                   auto x = rand_var(rng, {2, 3, 6, 6});
                   ParamRefs<D> r;
                   m->collect(r);
                   vars = {x};
                   for (auto* p : r.params) vars.push_back(p->var);
                   return Fn([=](Tape<D>& t) { return m->forward(t, x); });
                 }});
  }
  c.push_back({"dsaf (1,4,8,8)", true, [](Rng& rng, std::vector<Var<D>>& vars) {
                 DsafConfig cfg;
                 cfg.in_channels = 4;
                 auto m = std::make_shared<Dsaf<D>>("dsaf", cfg, rng);
                 auto x = rand_var(rng, {1, 4, 8, 8});
                 ParamRefs<D> r;
                 m->collect(r);
                 for (auto* p : r.params) {
                   if (p->name.find("subband") != std::string::npos || p->name.find("gamma") != std::string::npos) {
                     for (std::size_t i = 0; i < p->numel(); ++i) p->value()[i] += rng.uniform(-0.5, 0.5);
                   }
                 }
                 vars = {x};
                 for (auto* p : r.params) vars.push_back(p->var);
                 return Fn([=](Tape<D>& t) { return m->forward(t, x, Mode::eval); });
               }});
  return c;
}

}  // namespace

std::vector<GradcheckResult> run_gradcheck(const GradcheckOptions& opt,
                                           const std::function<void(const GradcheckResult&)>& on_result) {
  std::vector<GradcheckResult> out;
  const auto all = cases();
  for (std::size_t ci = 0; ci < all.size(); ++ci) {
    const Case& c = all[ci];
    GradcheckResult r;
    r.name = c.name;
    r.tolerance = c.block ? opt.tol_block : opt.tol_primitive;
    r.trials = c.block ? opt.block_trials : opt.trials;
    for (int trial = 0; trial < r.trials; ++trial) {
      Rng rng(hash_seed(opt.seed, ci, trial));
      std::vector<Var<D>> vars;
      Fn f = c.setup(rng, vars);
      r.max_rel_error = std::max(r.max_rel_error, gradcheck_once(f, vars, opt.h, hash_seed(hash_seed(opt.seed, ci, trial), 1)));
    }
    if (on_result) on_result(r);
    out.push_back(r);
  }
  return out;
}

}  // namespace fsce
