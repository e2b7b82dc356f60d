#include <benchmark/benchmark.h>

#include "iada/lp.hpp"
#include "iada/nn.hpp"
#include "iada/robust.hpp"
#include "iada/verifier.hpp"

using namespace iada;

namespace {

std::vector<Sample> random_batch(Rng& rng, std::size_t n, std::size_t dim, int classes) {
  std::vector<Sample> out(n);
  for (auto& s : out) {
    s.x.resize(dim);
    for (double& v : s.x) v = rng.uniform();
    s.y = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
  }
  return out;
}

// args: input dim, classes
void BM_Forward(benchmark::State& state) {
  Rng rng(1);
  const auto dim = static_cast<std::size_t>(state.range(0)), k = static_cast<std::size_t>(state.range(1));
  const std::vector<std::size_t> dims = {dim, 32, k};
  const ModelParams p = init_params(dims, rng);
  const auto x = random_batch(rng, 1, dim, static_cast<int>(k))[0].x;
  for (auto _ : state) benchmark::DoNotOptimize(forward(p, x));
}
BENCHMARK(BM_Forward)->Args({2, 2})->Args({60, 4})->Args({784, 10});

void BM_BackwardBatch64(benchmark::State& state) {
  Rng rng(2);
  const auto dim = static_cast<std::size_t>(state.range(0)), k = static_cast<std::size_t>(state.range(1));
  const std::vector<std::size_t> dims = {dim, 32, k};
  const ModelParams p = init_params(dims, rng);
  const auto batch = random_batch(rng, 64, dim, static_cast<int>(k));
  for (auto _ : state) benchmark::DoNotOptimize(backward(p, batch));
}
BENCHMARK(BM_BackwardBatch64)->Args({2, 2})->Args({784, 10});

void BM_RobustBackwardBatch64(benchmark::State& state) {
  Rng rng(3);
  const std::vector<std::size_t> dims = {784, 32, 10};
  const ModelParams p = init_params(dims, rng);
  const auto batch = random_batch(rng, 64, 784, 10);
  const InputBox box = InputBox::uniform(784, 0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(robust_backward(p, batch, 0.1, box));
}
BENCHMARK(BM_RobustBackwardBatch64);

// Random feasible LP: n variables in [0, 1], m <= rows with positive rhs.
void BM_SolveLp(benchmark::State& state) {
  Rng rng(4);
  const auto n = static_cast<std::size_t>(state.range(0));
  lp::LinearProgram prog;
  for (std::size_t j = 0; j < n; ++j) prog.add_variable(rng.uniform(-1.0, 1.0), 0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(n);
    for (double& a : row) a = rng.uniform(-1.0, 1.0);
    prog.add_row(row, lp::RowSense::kLessEqual, rng.uniform(0.1, 2.0));
  }
  for (auto _ : state) benchmark::DoNotOptimize(lp::solve_lp(prog));
}
BENCHMARK(BM_SolveLp)->Arg(20)->Arg(60)->Arg(150);

void BM_MinAdversary2D(benchmark::State& state) {
  Rng rng(5);
  const std::vector<std::size_t> dims = {2, static_cast<std::size_t>(state.range(0)), 2};
  const ModelParams p = init_params(dims, rng);
  const InputBox box = InputBox::uniform(2, 0.0, 1.0);
  const std::vector<double> x0 = {0.4, 0.6};
  const Sample root{x0, predict(p, x0)};
  for (auto _ : state) benchmark::DoNotOptimize(min_adversary(p, root, 0, 0.3, box));
}
BENCHMARK(BM_MinAdversary2D)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_IntervalBoundsMnist(benchmark::State& state) {
  Rng rng(6);
  const std::vector<std::size_t> dims = {784, 32, 10};
  const ModelParams p = init_params(dims, rng);
  const auto x = random_batch(rng, 1, 784, 10)[0].x;
  const InputBox box = InputBox::uniform(784, 0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(interval_bounds(p, x, 0.1, box));
}
BENCHMARK(BM_IntervalBoundsMnist);

}  // namespace
BENCHMARK_MAIN();
