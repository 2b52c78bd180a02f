#include <benchmark/benchmark.h>

#include "chsnet/kernels.hpp"
#include "chsnet/rng.hpp"

using namespace chsnet;

namespace {

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

void BM_GemmReference(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto a = random_vector(static_cast<std::size_t>(n) * n, 1);
  const auto b = random_vector(static_cast<std::size_t>(n) * n, 2);
  std::vector<double> c(static_cast<std::size_t>(n) * n);
  for (auto _ : state) {
    kernels::reference::gemm(kernels::Trans::no, kernels::Trans::no, n, n, n, a.data(), b.data(), 0.0, c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}

void BM_GemmParallel(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto a = random_vector(static_cast<std::size_t>(n) * n, 1);
  const auto b = random_vector(static_cast<std::size_t>(n) * n, 2);
  std::vector<double> c(static_cast<std::size_t>(n) * n);
  for (auto _ : state) {
    kernels::gemm(kernels::Trans::no, kernels::Trans::no, n, n, n, a.data(), b.data(), 0.0, c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}

kernels::ConvGeometry conv_geometry(int size) {
  return {.in_channels = 32, .out_channels = 32, .in_height = size, .in_width = size,
          .kernel = 3, .stride = 1, .pad = 1, .dilation = 1};
}

void BM_ConvReference(benchmark::State& state) {
  const auto g = conv_geometry(static_cast<int>(state.range(0)));
  const int batch = 4;
  const auto x = random_vector(static_cast<std::size_t>(batch) * g.in_channels * g.in_height * g.in_width, 3);
  const auto w = random_vector(static_cast<std::size_t>(g.out_channels) * g.patch_size(), 4);
  const auto bias = random_vector(static_cast<std::size_t>(g.out_channels), 5);
  std::vector<double> y(static_cast<std::size_t>(batch) * g.out_channels * g.out_height() * g.out_width());
  for (auto _ : state) {
    kernels::reference::conv2d_forward(g, batch, x.data(), w.data(), bias.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_ConvParallel(benchmark::State& state) {
  const auto g = conv_geometry(static_cast<int>(state.range(0)));
  const int batch = 4;
  const auto x = random_vector(static_cast<std::size_t>(batch) * g.in_channels * g.in_height * g.in_width, 3);
  const auto w = random_vector(static_cast<std::size_t>(g.out_channels) * g.patch_size(), 4);
  const auto bias = random_vector(static_cast<std::size_t>(g.out_channels), 5);
  std::vector<double> y(static_cast<std::size_t>(batch) * g.out_channels * g.out_height() * g.out_width());
  for (auto _ : state) {
    kernels::conv2d_forward(g, batch, x.data(), w.data(), bias.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_GemmReference)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_GemmParallel)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_ConvReference)->Arg(16)->Arg(32)->Arg(64);
BENCHMARK(BM_ConvParallel)->Arg(16)->Arg(32)->Arg(64);

BENCHMARK_MAIN();
