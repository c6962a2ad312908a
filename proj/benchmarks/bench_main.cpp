#include <benchmark/benchmark.h>

#include <vector>

#include "wproj/config.hpp"
#include "wproj/nn.hpp"
#include "wproj/projections.hpp"
#include "wproj/rng.hpp"
#include "wproj/trainer.hpp"

namespace {

using namespace wproj;

Tensor uniform(Tensor::Shape shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

Network conv_net(std::size_t channels) {
  const Tensor::Shape input{channels, 16, 16};
  const std::string c = std::to_string(channels);
  return make_network(input,
                      parse_layer_list("conv:3-3-" + c + "-" + c + ":s1:p1, bn, relu, flatten, fc:" +
                                           std::to_string(channels * 256) + "-10",
                                       input),
                      1);
}

void BM_ConvForward(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  const Network net = conv_net(channels);
  const WeightSet w = net.weights();
  const Tensor x = uniform({16, channels, 16, 16}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(forward(net, w, x, Mode::kTrain));
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_ConvForward)->Arg(8)->Arg(32);

void BM_ConvBackward(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  const Network net = conv_net(channels);
  const Tensor x = uniform({16, channels, 16, 16}, 2);
  const ForwardCache cache = forward(net, net.weights(), x, Mode::kTrain);
  const Tensor grad = uniform(cache.logits().shape(), 3);
  for (auto _ : state) benchmark::DoNotOptimize(backward(net, cache, grad));
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_ConvBackward)->Arg(8)->Arg(32);

void BM_Project(benchmark::State& state, const char* spec) {
  const Tensor w = uniform({static_cast<std::size_t>(state.range(0))}, 4);
  const ProjectionSpec ps = parse_projection(spec);
  Rng rng(5);
  for (auto _ : state) benchmark::DoNotOptimize(project(w, ps, rng));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK_CAPTURE(BM_Project, sign, "sign")->Arg(1 << 16);
BENCHMARK_CAPTURE(BM_Project, stoch, "stoch")->Arg(1 << 16);
BENCHMARK_CAPTURE(BM_Project, stochm3, "stochm3:gamma=0.5")->Arg(1 << 16);
BENCHMARK_CAPTURE(BM_Project, addnorm, "addnorm:sigma=0.3")->Arg(1 << 16);
BENCHMARK_CAPTURE(BM_Project, power, "power:beta=0.5")->Arg(1 << 16);

void BM_TrainStep(benchmark::State& state) {
  const ExperimentConfig cfg = preset_config("toy-tr-stochm-c");
  TrainState ts = init_train_state(make_network(cfg.input_shape, cfg.layer_specs(), 1), cfg.train);
  const Tensor x = uniform({50, 1, 8, 8}, 6);
  std::vector<int> labels(50);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 4);
  const Tensor t = one_vs_rest_targets(labels, 4);
  for (auto _ : state) benchmark::DoNotOptimize(train_step(ts, x, t, cfg.train));
  state.SetItemsProcessed(state.iterations() * 50);
}
BENCHMARK(BM_TrainStep);

}  // namespace

BENCHMARK_MAIN();
