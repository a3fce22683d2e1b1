#include <benchmark/benchmark.h>

#include <numeric>

#include "fsce/distill.hpp"
#include "fsce/dsaf.hpp"
#include "fsce/ops.hpp"
#include "fsce/wavelet.hpp"

using namespace fsce;

namespace {

Var<float> random_var(Shape s, std::uint64_t seed, bool grad = false) {
  Rng rng(seed);
  Tensor<float> t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform(-1, 1));
  return make_var(std::move(t), grad);
}

// Args: cin, cout, kernel, side, groups.
void BM_Conv2dForwardBackward(benchmark::State& state) {
  const int cin = state.range(0), cout = state.range(1), k = state.range(2), side = state.range(3);
  const int groups = state.range(4);
  auto x = random_var({32, cin, side, side}, 1, true);
  auto w = random_var({cout, cin / groups, k, k}, 2, true);
  const Conv2dOptions opt{1, k / 2, groups};
  for (auto _ : state) {
    Tape<float> tape;
    auto y = conv2d(tape, x, w, Var<float>{}, opt);
    tape.backward(sum(tape, y));
    benchmark::DoNotOptimize(w->grad.data());
  }
  const double flops = 2.0 * 32 * cout * side * side * (cin / groups) * k * k;
  state.counters["GFLOP/s"] = benchmark::Counter(3 * flops, benchmark::Counter::kIsIterationInvariantRate,
                                                 benchmark::Counter::kIs1000);
}
BENCHMARK(BM_Conv2dForwardBackward)
    ->Args({8, 8, 3, 32, 1})
    ->Args({24, 24, 3, 32, 1})
    ->Args({4, 4, 9, 32, 1})
    ->Args({16, 16, 3, 32, 16})
    ->Unit(benchmark::kMillisecond);

void BM_HaarRoundTrip(benchmark::State& state) {
  const int side = state.range(0);
  auto x = random_var({16, 8, side, side}, 3);
  for (auto _ : state) {
    Tape<float> tape(false);
    benchmark::DoNotOptimize(iwt2(tape, dwt2(tape, x))->value.data());
  }
}
BENCHMARK(BM_HaarRoundTrip)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_DsafForwardBackward(benchmark::State& state) {
  Rng rng(4);
  DsafConfig cfg;
  cfg.in_channels = 8;
  Dsaf<float> block("dsaf", cfg, rng);
  auto x = random_var({32, 8, 32, 32}, 5, true);
  for (auto _ : state) {
    Tape<float> tape;
    auto y = block.forward(tape, x, Mode::train);
    tape.backward(sum(tape, y));
  }
}
BENCHMARK(BM_DsafForwardBackward)->Unit(benchmark::kMillisecond);

void BM_TrainingStep(benchmark::State& state) {
  const Insertion at = state.range(0) ? Insertion::s1 : Insertion::none;
  Model<float> model(preset("student-M", 4, at), 6);
  auto refs = model.refs();
  AdamW<float> opt(refs.params);
  auto x = random_var({64, 1, 64, 64}, 7);
  std::vector<int> labels(64);
  for (int i = 0; i < 64; ++i) labels[i] = i % 4;
  for (auto _ : state) {
    opt.zero_grad();
    Tape<float> tape;
    auto loss = ce_loss(tape, model.forward(tape, x, Mode::train), labels);
    tape.backward(loss);
    opt.step(1e-3);
  }
}
BENCHMARK(BM_TrainingStep)->Arg(0)->Arg(1)->ArgNames({"dsaf"})->Unit(benchmark::kMillisecond);

void BM_GenerateDataset(benchmark::State& state) {
  SceneConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(generate_dataset(cfg, 25).pixels.data());
}
BENCHMARK(BM_GenerateDataset)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
