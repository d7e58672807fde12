#include <benchmark/benchmark.h>

#include <vector>

#include "cdpcl/kernels/conv2d.hpp"
#include "cdpcl/kernels/parallel.hpp"
#include "cdpcl/kernels/pooling.hpp"
#include "cdpcl/rng.hpp"

using namespace cdpcl;

namespace {

// The three encoder layers of the default network at batch 8, 64x64 input.
kernels::ConvGeometry layer(int which) {
  switch (which) {
    case 0: return {8, 3, 64, 64, 16, 3, 1, 1};
    case 1: return {8, 16, 64, 64, 32, 3, 2, 1};
    default: return {8, 32, 32, 32, 32, 3, 2, 1};
  }
}

struct ConvData {
  kernels::ConvGeometry g;
  std::vector<double> x, w, b, y, gy, gx, gw, gb;
  explicit ConvData(const kernels::ConvGeometry& geo) : g(geo) {
    Rng rng(1);
    std::uniform_real_distribution<double> d(-1, 1);
    auto fill = [&](std::vector<double>& v, std::size_t n) {
      v.resize(n);
      for (auto& e : v) e = d(rng);
    };
    fill(x, g.input_size());
    fill(w, g.weight_size());
    fill(b, g.out_channels);
    fill(gy, g.output_size());
    y.assign(g.output_size(), 0.0);
    gx.assign(x.size(), 0.0);
    gw.assign(w.size(), 0.0);
    gb.assign(b.size(), 0.0);
  }
};

void BM_ConvForwardReference(benchmark::State& state) {
  ConvData d(layer(static_cast<int>(state.range(0))));
  for (auto _ : state) {
    kernels::reference::conv2d_forward(d.g, d.x, d.w, d.b, d.y);
    benchmark::DoNotOptimize(d.y.data());
  }
}

void BM_ConvForwardParallel(benchmark::State& state) {
  ConvData d(layer(static_cast<int>(state.range(0))));
  kernels::set_thread_count(static_cast<int>(state.range(1)));
  for (auto _ : state) {
    kernels::conv2d_forward(d.g, d.x, d.w, d.b, d.y);
    benchmark::DoNotOptimize(d.y.data());
  }
}

void BM_ConvBackwardReference(benchmark::State& state) {
  ConvData d(layer(static_cast<int>(state.range(0))));
  for (auto _ : state) {
    kernels::reference::conv2d_backward(d.g, d.x, d.w, d.gy, d.gx, d.gw, d.gb);
    benchmark::DoNotOptimize(d.gw.data());
  }
}

void BM_ConvBackwardParallel(benchmark::State& state) {
  ConvData d(layer(static_cast<int>(state.range(0))));
  kernels::set_thread_count(static_cast<int>(state.range(1)));
  for (auto _ : state) {
    kernels::conv2d_backward(d.g, d.x, d.w, d.gy, d.gx, d.gw, d.gb);
    benchmark::DoNotOptimize(d.gw.data());
  }
}

void BM_ClassSums(benchmark::State& state) {
  const std::size_t batch = 8, channels = 32, plane = 256, classes = 6;
  std::vector<double> f(batch * channels * plane, 0.5), sums(classes * channels);
  std::vector<std::int32_t> labels(batch * plane);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::int32_t>(i % 7 == 6 ? 255 : i % 7);
  std::vector<std::size_t> counts(classes);
  const bool parallel = state.range(0) != 0;
  for (auto _ : state) {
    if (parallel) {
      kernels::class_sums(batch, channels, plane, classes, f, labels, sums, counts);
    } else {
      kernels::reference::class_sums(batch, channels, plane, classes, f, labels, sums, counts);
    }
    benchmark::DoNotOptimize(sums.data());
  }
}

}  // namespace

BENCHMARK(BM_ConvForwardReference)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForwardParallel)->ArgsProduct({{0, 1, 2}, {1, 2, 4}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardReference)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardParallel)->ArgsProduct({{0, 1, 2}, {1, 2, 4}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ClassSums)->Arg(0)->Arg(1);

BENCHMARK_MAIN();
