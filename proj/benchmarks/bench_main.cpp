#include <benchmark/benchmark.h>

#include "cpcnn/graph.hpp"
#include "cpcnn/mask.hpp"
#include "cpcnn/model.hpp"
#include "cpcnn/ops.hpp"

using namespace cpcnn;

namespace {

void BM_GenerateCp(benchmark::State& state) {
  const CPGraphParams p{static_cast<int>(state.range(0)), static_cast<int>(state.range(0)) / 2, 0.9, 0.5, 0.1};
  std::uint64_t s = 0;
  for (auto _ : state) benchmark::DoNotOptimize(generate_cp_graph(p, Seed{s++}));
}
BENCHMARK(BM_GenerateCp)->Arg(16)->Arg(64);

Tensor<float> random_tensor(Shape shape, Rng& rng) {
  Tensor<float> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(rng.normal());
  return t;
}

// Arg 0: dense, 1: CP mask with n=16, n_c=8.
void BM_Conv3x3(benchmark::State& state) {
  Rng rng(Seed{1});
  const int C = 128;
  const auto x = random_tensor(Shape{32, C, 8, 8}, rng);
  const auto w = random_tensor(Shape{C, C, 3, 3}, rng);
  const auto mask =
      build_channel_mask(relational_bipartite(generate_cp_graph({16, 8, 0.9, 0.5, 0.1}, Seed{2})), C, C);
  const ChannelMask* m = state.range(0) ? &mask : nullptr;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d<float>(nullptr, x, w, Tensor<float>(), m, 1, 1));
}
BENCHMARK(BM_Conv3x3)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ForwardCifar(benchmark::State& state) {
  ModelConfig cfg;
  cfg.stem_width = 16;
  cfg.block_widths = {32, 64, 128, 256};
  Model m(cfg);
  Rng rng(Seed{3});
  const auto x = random_tensor(Shape{static_cast<int>(state.range(0)), 3, 32, 32}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(m.forward(nullptr, x, Mode::eval));
}
BENCHMARK(BM_ForwardCifar)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
