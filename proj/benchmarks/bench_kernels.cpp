#include <benchmark/benchmark.h>

#include <random>

#include "nsd/autodiff.hpp"
#include "nsd/dsp.hpp"
#include "nsd/graph_attention.hpp"
#include "nsd/model.hpp"

using namespace nsd;

namespace {

Tensor<float> noise(Shape shape, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd;
  Tensor<float> t(std::move(shape));
  for (auto& v : t.data()) v = nd(rng);
  return t;
}

void BM_ModelInference(benchmark::State& state) {
  model::Model<float> net(model::ModelConfig{});
  const auto x = noise({std::size_t(state.range(0)), 12, 384});
  for (auto _ : state) {
    auto out = net.infer(x);
    benchmark::DoNotOptimize(out.probability.value().data().data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ModelInference)->Arg(1)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  model::Model<float> net(model::ModelConfig{});
  const auto x = ad::Var<float>::constant(noise({32, 12, 384}));
  ad::Rng rng(3);
  for (auto _ : state) {
    model::ForwardOptions o;
    o.mode = ad::Mode::kTrain;
    o.rng = &rng;
    auto out = net.forward(x, o);
    ad::backward(ad::mean(out.logit));
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_Conv1d(benchmark::State& state) {
  const auto cin = std::size_t(state.range(0)), cout = std::size_t(state.range(1));
  const auto x = ad::Var<float>::constant(noise({12, cin, 192}));
  const auto w = ad::Var<float>::constant(noise({cout, cin, 7}, 2));
  for (auto _ : state) {
    auto y = ad::conv1d(x, w, ad::Var<float>());
    benchmark::DoNotOptimize(y.value().data().data());
  }
}
BENCHMARK(BM_Conv1d)->Args({32, 64})->Args({64, 64})->Unit(benchmark::kMicrosecond);

void BM_GatLayer(benchmark::State& state) {
  const auto graph = graph::build_graph();
  const auto h = ad::Var<float>::constant(noise({32, 12, 24}));
  const gat::GatWeights<float> layer{ad::Var<float>::constant(noise({24, 37}, 2)),
                                     ad::Var<float>::constant(noise({74}, 3))};
  for (auto _ : state) {
    auto y = gat::gat_forward(h, layer, graph.adjacency);
    benchmark::DoNotOptimize(y.value().data().data());
  }
}
BENCHMARK(BM_GatLayer)->Unit(benchmark::kMicrosecond);

void BM_Filtfilt(benchmark::State& state) {
  const auto design = dsp::design_cheby2_bandpass(256.0, 1.0, 16.0);
  const auto raw = noise({std::size_t(state.range(0)) * 256});
  const dsp::Signal x(raw.data().begin(), raw.data().end());
  for (auto _ : state) {
    auto y = dsp::filter_forward_backward(x, design);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Filtfilt)->Arg(60)->Arg(3600)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
