#include <benchmark/benchmark.h>

#include "hypernet/hypernet.hpp"

using namespace hypernet;

namespace {

void BM_Conv2d(benchmark::State& state) {
  const std::size_t c = std::size_t(state.range(0));
  Rng rng(1);
  const ConvKernel<double> k(random_uniform<double>({c, c, 3, 3}, rng, -0.1, 0.1));
  const Tensor<double> x = random_uniform<double>({c, 32, 32}, rng, -1.0, 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d(x, k));
  }
  state.SetItemsProcessed(std::int64_t(state.iterations()) *
                          std::int64_t(c * c * 9 * 32 * 32));
}
BENCHMARK(BM_Conv2d)->Arg(4)->Arg(16)->Arg(64);

void BM_HaarForward(benchmark::State& state) {
  Rng rng(2);
  const Tensor<double> x = random_uniform<double>({8, 64, 64}, rng, -1.0, 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(haar_forward(x));
  }
}
BENCHMARK(BM_HaarForward);

void BM_HaarRoundTrip(benchmark::State& state) {
  Rng rng(3);
  const Tensor<double> x = random_uniform<double>({8, 64, 64}, rng, -1.0, 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(haar_inverse(haar_forward(x)));
  }
}
BENCHMARK(BM_HaarRoundTrip);

void BM_LeapfrogStep(benchmark::State& state) {
  const std::size_t c = std::size_t(state.range(0));
  Rng rng(4);
  BlockParams<double> p(ConvKernel<double>(random_uniform<double>({c, c, 3, 3}, rng, -0.1, 0.1)),
                        Tensor<double>({c}));
  const StatePair<double> s(random_uniform<double>({c, 16, 16}, rng, -1.0, 1.0),
                            random_uniform<double>({c, 16, 16}, rng, -1.0, 1.0), 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(leapfrog_step(s, p, StepTransform::None));
  }
}
BENCHMARK(BM_LeapfrogStep)->Arg(8)->Arg(32);

void BM_LeapfrogReverse(benchmark::State& state) {
  const std::size_t c = std::size_t(state.range(0));
  Rng rng(5);
  BlockParams<double> p(ConvKernel<double>(random_uniform<double>({c, c, 3, 3}, rng, -0.1, 0.1)),
                        Tensor<double>({c}));
  const StatePair<double> s(random_uniform<double>({c, 16, 16}, rng, -1.0, 1.0),
                            random_uniform<double>({c, 16, 16}, rng, -1.0, 1.0), 0);
  const StatePair<double> next = leapfrog_step(s, p, StepTransform::None);
  for (auto _ : state) {
    benchmark::DoNotOptimize(leapfrog_reverse(next, p, StepTransform::None));
  }
}
BENCHMARK(BM_LeapfrogReverse)->Arg(8)->Arg(32);

NetworkSpec bench_spec(std::size_t depth, GradMode mode) {
  NetworkSpec spec;
  spec.input_channels = 1;
  spec.opening_width = 2;
  spec.levels = 1;
  spec.blocks_per_level = depth;
  spec.classes = 4;
  spec.mode = mode;
  return spec;
}

void BM_Backprop(benchmark::State& state) {
  const std::size_t depth = std::size_t(state.range(0));
  const GradMode mode = state.range(1) == 0 ? GradMode::Stored : GradMode::Reversible;
  const NetworkSpec spec = bench_spec(depth, mode);
  Rng rng(6);
  const NetworkParams<double> p = init_params<double>(spec, 16, 16, rng);
  const Tensor<double> x = random_uniform<double>({1, 16, 16}, rng, -1.0, 1.0);
  Tensor<double> label({1});
  const Tensor<double> weights;
  const LossFn<double> loss = [&](const Tensor<double>& out) {
    return weighted_cross_entropy(out, label, weights);
  };
  std::size_t peak = 0;
  for (auto _ : state) {
    const GradResult<double> r = backprop(spec, p, x, loss);
    peak = r.peak_activation_bytes;
    benchmark::DoNotOptimize(r.loss);
  }
  state.counters["peak_bytes"] = double(peak);
}
BENCHMARK(BM_Backprop)
    ->ArgsProduct({{8, 32}, {0, 1}})
    ->ArgNames({"depth", "reversible"});

void BM_WavePool(benchmark::State& state) {
  Rng rng(7);
  const Tensor<double> x = random_uniform<double>({8, 32, 32}, rng, -1.0, 1.0);
  const ConvKernel<double> mix(random_uniform<double>({16, 32, 1, 1}, rng, -0.1, 0.1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(wavepool(x, mix));
  }
}
BENCHMARK(BM_WavePool);

}  // namespace

BENCHMARK_MAIN();
