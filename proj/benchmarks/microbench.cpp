// Microbenchmarks for the hot kernels and whole-model forwards.
// Opt-in via the EDGESEG_BUILD_BENCHMARKS CMake option.

#include <benchmark/benchmark.h>

#include "edgeseg/model.hpp"
#include "edgeseg/ops.hpp"
#include "edgeseg/rng.hpp"

namespace {

using namespace edgeseg;

Tensor rand_tensor(const Shape4& s, std::uint64_t seed = 1) {
  Rng rng(seed);
  Tensor t(s);
  for (float& v : t.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

void bm_conv3x3(benchmark::State& state) {
  const auto c = state.range(0);
  const Tensor x = rand_tensor(Shape4{1, c, 64, 64});
  const Tensor w = rand_tensor(Shape4{c, c, 3, 3}, 2);
  const ConvParams p{3, 3, 1, 1, 1};
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d<float>(x, w, nullptr, p));
  }
  state.SetItemsProcessed(state.iterations() * 9 * c * c * 64 * 64);
}
BENCHMARK(bm_conv3x3)->Arg(16)->Arg(32)->Arg(64);

void bm_conv3x3_depthwise(benchmark::State& state) {
  const auto c = state.range(0);
  const Tensor x = rand_tensor(Shape4{1, c, 64, 64});
  const Tensor w = rand_tensor(Shape4{c, 1, 3, 3}, 2);
  const ConvParams p{3, 3, 1, 1, static_cast<int>(c)};
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d<float>(x, w, nullptr, p));
  }
  state.SetItemsProcessed(state.iterations() * 9 * c * 64 * 64);
}
BENCHMARK(bm_conv3x3_depthwise)->Arg(32)->Arg(96);

void bm_conv1x1(benchmark::State& state) {
  const auto c = state.range(0);
  const Tensor x = rand_tensor(Shape4{1, c, 64, 64});
  const Tensor w = rand_tensor(Shape4{c * 2, c, 1, 1}, 2);
  const ConvParams p{1, 1, 1, 0, 1};
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d<float>(x, w, nullptr, p));
  }
  state.SetItemsProcessed(state.iterations() * c * c * 2 * 64 * 64);
}
BENCHMARK(bm_conv1x1)->Arg(16)->Arg(48);

void bm_tconv2x2(benchmark::State& state) {
  const Tensor x = rand_tensor(Shape4{1, 64, 32, 32});
  const Tensor w = rand_tensor(Shape4{64, 32, 2, 2}, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(transpose_conv2x2(x, w));
  }
}
BENCHMARK(bm_tconv2x2);

void bm_maxpool(benchmark::State& state) {
  const Tensor x = rand_tensor(Shape4{1, 64, 128, 128});
  for (auto _ : state) {
    benchmark::DoNotOptimize(maxpool2x2(x));
  }
}
BENCHMARK(bm_maxpool);

void bm_batchnorm_eval(benchmark::State& state) {
  const Tensor x = rand_tensor(Shape4{1, 64, 128, 128});
  std::vector<float> gamma(64, 1.0f), beta(64, 0.0f), rm(64, 0.0f), rv(64, 1.0f);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        batchnorm2d(x, gamma, beta, rm, rv, 1e-5f, /*training=*/false));
  }
}
BENCHMARK(bm_batchnorm_eval);

void bm_model_forward(benchmark::State& state, ModelKind kind) {
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.num_classes = 9;
  if (kind == ModelKind::unet_baseline) {
    cfg.base_width = 16;
    cfg.depth = 4;
  }
  Model m = build_model(cfg);
  init_weights(m, 0);
  const Tensor x = rand_tensor(Shape4{1, 3, 96, 96});
  for (auto _ : state) {
    benchmark::DoNotOptimize(model_logits(m, x, ExecMode::eval));
  }
}
BENCHMARK_CAPTURE(bm_model_forward, unet, ModelKind::unet_baseline)
    ->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bm_model_forward, umbv2, ModelKind::unet_mbv2)
    ->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bm_model_forward, umbv3, ModelKind::unet_mbv3)
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
