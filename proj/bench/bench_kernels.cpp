// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

// Parallel im2col/GEMM kernels against the serial reference loops, on the
// layer shapes that dominate a training step.

#include <benchmark/benchmark.h>

#include <random>

#include "dic/kernels.hpp"

namespace {

using dic::ConvGeometry;
using dic::Shape;
using dic::Tensor;

Tensor<float> filled(Shape s, unsigned seed) {
  Tensor<float> t(s);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (auto& v : t.vec()) v = u(rng);
  return t;
}

struct Layer {
  const char* name;
  Shape x;
  Shape w;
  ConvGeometry g;
  bool transposed;
};

// Indexed by the benchmark argument.
const Layer kLayers[] = {
    {"fb_conv3x3_48", {4, 48, 32, 32}, {48, 48, 3, 3}, {1, 1, 1}, false},
    {"fb_down_k8s4", {4, 48, 128, 128}, {48, 48, 8, 8}, {4, 2, 1}, false},
    {"fb_up_k8s4", {4, 48, 32, 32}, {48, 48, 8, 8}, {4, 2, 1}, true},
    {"fusion_group", {4, 240, 32, 32}, {240, 48, 3, 3}, {1, 1, 5}, false},
    {"align_1x1_512", {4, 512, 32, 32}, {512, 512, 1, 1}, {1, 0, 1}, false},
};

const Tensor<float>* const kNoBias = nullptr;
Tensor<float>* const kNoBiasGrad = nullptr;

Shape out_shape(const Layer& l) {
  const int k = l.w.h;
  if (l.transposed) {
    const int oc = l.w.c * l.g.groups;
    return {l.x.n, oc, dic::conv_transpose_out_size(l.x.h, k, l.g), dic::conv_transpose_out_size(l.x.w, k, l.g)};
  }
  return {l.x.n, l.w.n, dic::conv_out_size(l.x.h, k, l.g), dic::conv_out_size(l.x.w, k, l.g)};
}

template <bool Parallel>
void Forward(benchmark::State& state) {
  const Layer& l = kLayers[state.range(0)];
  state.SetLabel(l.name);
  const Tensor<float> x = filled(l.x, 1);
  const Tensor<float> w = filled(l.w, 2);
  Tensor<float> y;
  for (auto _ : state) {
    if (l.transposed) {
      Parallel ? dic::kernels::conv_transpose2d_forward(x, w, kNoBias, l.g, y)
               : dic::reference::conv_transpose2d_forward(x, w, kNoBias, l.g, y);
    } else {
      Parallel ? dic::kernels::conv2d_forward(x, w, kNoBias, l.g, y)
               : dic::reference::conv2d_forward(x, w, kNoBias, l.g, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void Backward(benchmark::State& state) {
  const Layer& l = kLayers[state.range(0)];
  state.SetLabel(l.name);
  const Tensor<float> x = filled(l.x, 1);
  const Tensor<float> w = filled(l.w, 2);
  const Tensor<float> gy = filled(out_shape(l), 3);
  Tensor<float> gx(l.x), gw(l.w);
  for (auto _ : state) {
    if (l.transposed) {
      Parallel ? dic::kernels::conv_transpose2d_backward(x, w, gy, l.g, &gx, &gw, kNoBiasGrad)
               : dic::reference::conv_transpose2d_backward(x, w, gy, l.g, &gx, &gw, kNoBiasGrad);
    } else {
      Parallel ? dic::kernels::conv2d_backward(x, w, gy, l.g, &gx, &gw, kNoBiasGrad)
               : dic::reference::conv2d_backward(x, w, gy, l.g, &gx, &gw, kNoBiasGrad);
    }
    benchmark::DoNotOptimize(gx.data());
  }
}

void Layers(benchmark::internal::Benchmark* b) {
  for (int i = 0; i < static_cast<int>(std::size(kLayers)); ++i) b->Arg(i);
  b->Unit(benchmark::kMillisecond);
}

BENCHMARK(Forward<true>)->Name("conv_forward/parallel")->Apply(Layers);
BENCHMARK(Forward<false>)->Name("conv_forward/reference")->Apply(Layers);
BENCHMARK(Backward<true>)->Name("conv_backward/parallel")->Apply(Layers);
BENCHMARK(Backward<false>)->Name("conv_backward/reference")->Apply(Layers);

}  // namespace

int main(int argc, char** argv) {
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::AddCustomContext("omp_threads", std::to_string(dic::kernels::max_threads()));
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
