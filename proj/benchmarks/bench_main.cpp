// Micro-benchmarks for the hot paths: convolution kernels, the full network
// forward, the windowed loss and its backward sweep. Useful for spotting
// regressions when touching conv.hpp or ssim.hpp loop structure.

#include <benchmark/benchmark.h>

#include <random>

#include "mfuse/conv.hpp"
#include "mfuse/graph.hpp"
#include "mfuse/model.hpp"
#include "mfuse/ssim.hpp"
#include "mfuse/tensor.hpp"

namespace {

mfuse::Tensor rand_tensor(const mfuse::TensorShape& s, uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  mfuse::Tensor t = mfuse::Tensor::zeros(s);
  for (float& v : t.data()) v = dist(rng);
  return t;
}

mfuse::ConvParams rand_conv(int64_t in_c, int64_t out_c, uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> dist(-0.3f, 0.3f);
  mfuse::ConvParams p;
  p.weight = mfuse::Tensor::zeros({out_c, in_c, 3, 3});
  p.bias = mfuse::Tensor::zeros({1, out_c, 1, 1});
  for (float& v : p.weight.data()) v = dist(rng);
  for (float& v : p.bias.data()) v = dist(rng);
  return p;
}

void BM_ConvForward(benchmark::State& state) {
  const int64_t c = state.range(0);
  const int64_t hw = state.range(1);
  const mfuse::Tensor x = rand_tensor({1, c, hw, hw}, 1);
  const mfuse::ConvParams p = rand_conv(c, c, 2);
  mfuse::Tensor y = mfuse::Tensor::zeros({1, c, hw, hw});
  for (auto _ : state) {
    mfuse::conv2d_forward(x.shape(), x.data().data(), c,
                          p.weight.data().data(), p.bias.data().data(),
                          y.data().data());
    benchmark::DoNotOptimize(y.data().data());
  }
  state.SetItemsProcessed(state.iterations() * c * c * hw * hw * 9);
}
BENCHMARK(BM_ConvForward)->Args({8, 64})->Args({8, 128})->Args({64, 64});

void BM_ConvBackwardInput(benchmark::State& state) {
  const int64_t c = state.range(0);
  const int64_t hw = state.range(1);
  const mfuse::Tensor x = rand_tensor({1, c, hw, hw}, 1);
  const mfuse::ConvParams p = rand_conv(c, c, 2);
  const mfuse::Tensor dout = rand_tensor({1, c, hw, hw}, 3);
  mfuse::Tensor din = mfuse::Tensor::zeros({1, c, hw, hw});
  for (auto _ : state) {
    std::fill(din.data().begin(), din.data().end(), 0.0f);
    mfuse::conv2d_backward_input(x.shape(), c, p.weight.data().data(),
                                 dout.data().data(), din.data().data());
    benchmark::DoNotOptimize(din.data().data());
  }
  state.SetItemsProcessed(state.iterations() * c * c * hw * hw * 9);
}
BENCHMARK(BM_ConvBackwardInput)->Args({8, 64})->Args({64, 64});

void BM_ConvBackwardParams(benchmark::State& state) {
  const int64_t c = state.range(0);
  const int64_t hw = state.range(1);
  const mfuse::Tensor x = rand_tensor({1, c, hw, hw}, 1);
  const mfuse::Tensor dout = rand_tensor({1, c, hw, hw}, 3);
  mfuse::Tensor dw = mfuse::Tensor::zeros({c, c, 3, 3});
  mfuse::Tensor db = mfuse::Tensor::zeros({1, c, 1, 1});
  for (auto _ : state) {
    std::fill(dw.data().begin(), dw.data().end(), 0.0f);
    std::fill(db.data().begin(), db.data().end(), 0.0f);
    mfuse::conv2d_backward_params(x.shape(), x.data().data(), c,
                                  dout.data().data(), dw.data().data(),
                                  db.data().data());
    benchmark::DoNotOptimize(dw.data().data());
  }
  state.SetItemsProcessed(state.iterations() * c * c * hw * hw * 9);
}
BENCHMARK(BM_ConvBackwardParams)->Args({8, 64})->Args({64, 64});

void BM_ModelForward(benchmark::State& state) {
  mfuse::FusionNetConfig cfg = mfuse::FusionNetConfig::tiny();
  const mfuse::FusionNetWeights w = mfuse::fusion_net_init<float>(cfg);
  const int64_t hw = state.range(0);
  const mfuse::Tensor x1 = rand_tensor({1, 1, hw, hw}, 4);
  const mfuse::Tensor x2 = rand_tensor({1, 1, hw, hw}, 5);
  for (auto _ : state) {
    mfuse::Graph g(false);
    mfuse::Tensor y = mfuse::fusion_net_forward(g, w, x1, x2);
    benchmark::DoNotOptimize(y.data().data());
  }
}
BENCHMARK(BM_ModelForward)->Arg(64)->Arg(128)->Arg(256);

void BM_WindowStats(benchmark::State& state) {
  const int hw = static_cast<int>(state.range(0));
  const mfuse::Tensor x = rand_tensor({1, 1, hw, hw}, 6);
  const mfuse::Tensor y = rand_tensor({1, 1, hw, hw}, 7);
  for (auto _ : state) {
    mfuse::WindowStatsMap m =
        mfuse::window_stats(x.data().data(), y.data().data(), hw, hw, {});
    benchmark::DoNotOptimize(m.mean_x.data());
  }
  state.SetItemsProcessed(state.iterations() * hw * hw);
}
BENCHMARK(BM_WindowStats)->Arg(64)->Arg(256)->Arg(512);

void BM_FusionLossForward(benchmark::State& state) {
  const int64_t hw = state.range(0);
  const mfuse::Tensor x1 = rand_tensor({4, 1, hw, hw}, 8);
  const mfuse::Tensor x2 = rand_tensor({4, 1, hw, hw}, 9);
  const mfuse::Tensor yhat = rand_tensor({4, 1, hw, hw}, 10);
  for (auto _ : state) {
    mfuse::Graph g(false);
    mfuse::Tensor loss = mfuse::fusion_loss(g, x1, x2, yhat);
    benchmark::DoNotOptimize(loss.scalar());
  }
}
BENCHMARK(BM_FusionLossForward)->Arg(64)->Arg(128);

void BM_TrainStepGraph(benchmark::State& state) {
  // one full forward + backward of the tiny model on a training-size batch
  mfuse::FusionNetConfig cfg = mfuse::FusionNetConfig::tiny();
  mfuse::FusionNetWeights w = mfuse::fusion_net_init<float>(cfg);
  w.set_requires_grad(true);
  const int64_t hw = state.range(0);
  const mfuse::Tensor x1 = rand_tensor({8, 1, hw, hw}, 11);
  const mfuse::Tensor x2 = rand_tensor({8, 1, hw, hw}, 12);
  for (auto _ : state) {
    w.clear_grads();
    mfuse::Graph g;
    mfuse::Tensor yhat = mfuse::fusion_net_forward(g, w, x1, x2);
    mfuse::Tensor loss = mfuse::fusion_loss(g, x1, x2, yhat);
    g.backward(loss);
    benchmark::DoNotOptimize(loss.scalar());
  }
}
BENCHMARK(BM_TrainStepGraph)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
