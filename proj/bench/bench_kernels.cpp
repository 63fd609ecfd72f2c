#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "gcnet/kernels.hpp"
#include "gcnet/model.hpp"
#include "gcnet/training.hpp"

using namespace gcnet;

namespace {

std::vector<float> random_buffer(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// A mid-network 3-D layer: 3x3x3, 16 -> 16 channels on a 16x32x64 volume.
ConvGeometry geometry(int stride) {
  const std::size_t s = std::size_t(stride);
  return make_conv_geometry({16, 32, 64}, {3, 3, 3}, {s, s, s}, 16, 16);
}

template <bool Fast>
void BM_ConvForward(benchmark::State& state) {
  const auto g = geometry(int(state.range(0)));
  const auto x = random_buffer(g.in_voxels() * g.in_channels, 1);
  const auto w = random_buffer(g.weight_size(), 2);
  const auto b = random_buffer(g.out_channels, 3);
  std::vector<float> y(g.out_voxels() * g.out_channels);
  for (auto _ : state) {
    if constexpr (Fast)
      kernels::conv_forward(g, x.data(), w.data(), b.data(), y.data());
    else
      reference::conv_forward(g, x.data(), w.data(), b.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * std::int64_t(g.out_voxels() * g.weight_size()));
}

template <bool Fast>
void BM_ConvTranspose(benchmark::State& state) {
  const auto g = geometry(int(state.range(0)));
  const auto y = random_buffer(g.out_voxels() * g.out_channels, 4);
  const auto w = random_buffer(g.weight_size(), 5);
  std::vector<float> x(g.in_voxels() * g.in_channels);
  for (auto _ : state) {
    if constexpr (Fast)
      kernels::conv_transpose(g, y.data(), w.data(), x.data());
    else
      reference::conv_transpose(g, y.data(), w.data(), x.data());
    benchmark::DoNotOptimize(x.data());
  }
  state.SetItemsProcessed(state.iterations() * std::int64_t(g.out_voxels() * g.weight_size()));
}

template <bool Fast>
void BM_ConvWeightGrad(benchmark::State& state) {
  const auto g = geometry(int(state.range(0)));
  const auto x = random_buffer(g.in_voxels() * g.in_channels, 6);
  const auto dy = random_buffer(g.out_voxels() * g.out_channels, 7);
  std::vector<float> dw(g.weight_size());
  for (auto _ : state) {
    if constexpr (Fast)
      kernels::conv_weight_grad(g, x.data(), dy.data(), dw.data());
    else
      reference::conv_weight_grad(g, x.data(), dy.data(), dw.data());
    benchmark::DoNotOptimize(dw.data());
  }
  state.SetItemsProcessed(state.iterations() * std::int64_t(g.out_voxels() * g.weight_size()));
}

template <bool Fast>
void BM_CostVolume(benchmark::State& state) {
  const std::size_t D = 16, H = 32, W = 64, F = 32;
  const auto l = random_buffer(H * W * F, 8), r = random_buffer(H * W * F, 9);
  std::vector<float> vol(D * H * W * 2 * F);
  for (auto _ : state) {
    if constexpr (Fast)
      kernels::cost_volume_forward(D, H, W, F, l.data(), r.data(), vol.data());
    else
      reference::cost_volume_forward(D, H, W, F, l.data(), r.data(), vol.data());
    benchmark::DoNotOptimize(vol.data());
  }
  state.SetBytesProcessed(state.iterations() * std::int64_t(vol.size() * sizeof(float)));
}

// One optimisation step of the desk-scale model (F=8, D=32, 64x128 crop).
void BM_TrainStep(benchmark::State& state) {
  ModelConfig c{.features = 8, .max_disparity = 32, .height = 64, .width = 128, .channels = 1};
  c.variant = Variant(state.range(0));
  auto params = ModelParams<float>::initialize(c, 1);
  SynthSpec s;
  s.field = DisparityField::TwoPlane;
  const auto pair = gen_synthetic_pair(s);
  const auto l = normalize_image(pair.left, PixelRange::Unit), r = normalize_image(pair.right, PixelRange::Unit);
  OptimState opt;
  for (auto _ : state) {
    auto out = forward(l, r, params, true);
    auto loss = model_loss(out, pair.gt, pair.mask, c.loss);
    backward(loss);
    rmsprop_step(params, opt);
  }
  state.SetLabel(to_string(c.variant));
}

}  // namespace

BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/omp")->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/reference")->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvTranspose<true>)->Name("conv_transpose/omp")->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvTranspose<false>)->Name("conv_transpose/reference")->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvWeightGrad<true>)->Name("conv_weight_grad/omp")->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvWeightGrad<false>)->Name("conv_weight_grad/reference")->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CostVolume<true>)->Name("cost_volume/omp")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CostVolume<false>)->Name("cost_volume/reference")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainStep)->Name("train_step")->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
