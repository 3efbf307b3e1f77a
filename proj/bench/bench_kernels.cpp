#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "genie/engine/session.hpp"
#include "genie/model/genie_model.hpp"
#include "genie/nn/kernels.hpp"
#include "genie/nn/random.hpp"

using namespace genie;

namespace {

std::vector<float> random_matrix(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(nn::uniform(rng, -1, 1));
  return v;
}

// Args: M, N, K. Shapes are those of an LSTM layer: rows × 4H × input.
template <bool Parallel>
void BM_GemmNN(benchmark::State& state) {
  const auto M = static_cast<std::size_t>(state.range(0)), N = static_cast<std::size_t>(state.range(1)),
             K = static_cast<std::size_t>(state.range(2));
  const auto A = random_matrix(M * K, 1), B = random_matrix(K * N, 2);
  std::vector<float> C(M * N);
  for (auto _ : state) {
    if constexpr (Parallel)
      nn::kernels::gemm_nn<float>(M, N, K, A.data(), K, B.data(), N, C.data(), N, false);
    else
      nn::kernels::reference::gemm_nn<float>(M, N, K, A.data(), K, B.data(), N, C.data(), N, false);
    benchmark::DoNotOptimize(C.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * M * N * K));
  state.counters["threads"] = Parallel ? nn::kernels::max_threads() : 1;
}

template <bool Parallel>
void BM_GemmTN(benchmark::State& state) {
  const auto M = static_cast<std::size_t>(state.range(0)), N = static_cast<std::size_t>(state.range(1)),
             K = static_cast<std::size_t>(state.range(2));
  const auto A = random_matrix(K * M, 3), B = random_matrix(K * N, 4);
  std::vector<float> C(M * N);
  for (auto _ : state) {
    if constexpr (Parallel)
      nn::kernels::gemm_tn<float>(M, N, K, A.data(), M, B.data(), N, C.data(), N, false);
    else
      nn::kernels::reference::gemm_tn<float>(M, N, K, A.data(), M, B.data(), N, C.data(), N, false);
    benchmark::DoNotOptimize(C.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * M * N * K));
}

void gemm_shapes(benchmark::internal::Benchmark* b) {
  b->Args({32, 512, 128})->Args({32, 512, 217})->Args({2048, 512, 128})->Unit(benchmark::kMicrosecond);
}

BENCHMARK(BM_GemmNN<false>)->Name("gemm_nn/reference")->Apply(gemm_shapes);
BENCHMARK(BM_GemmNN<true>)->Name("gemm_nn/openmp")->Apply(gemm_shapes);
BENCHMARK(BM_GemmTN<false>)->Name("gemm_tn/reference")->Apply(gemm_shapes);
BENCHMARK(BM_GemmTN<true>)->Name("gemm_tn/openmp")->Apply(gemm_shapes);

// One optimizer-free training step (forward + backward) of the 2×128 IQAE.
void BM_TrainStep(benchmark::State& state) {
  const auto threads = static_cast<int>(state.range(0));
  nn::kernels::set_threads(threads);
  model::GenieModel<float> m{model::ModelConfig{}};
  std::mt19937_64 rng(1);
  m.init(rng);
  std::vector<data::TrainingExample> examples(8);
  for (auto& ex : examples)
    for (int t = 0; t < 64; ++t) {
      ex.keys.push_back(static_cast<int>(rng() % 88));
      ex.dt_buckets.push_back(t == 0 ? 31 : static_cast<int>(rng() % 32));
    }
  const auto batch = model::make_batch(std::span<const data::TrainingExample>(examples));
  for (auto _ : state) {
    nn::Graph<float> g;
    auto parts = m.loss(g, batch);
    g.backward(parts.total);
    benchmark::DoNotOptimize(parts.total_value);
  }
  nn::kernels::set_threads(nn::kernels::max_threads());
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

// press() on a 2×128 decoder: the real-time path.
void BM_Press(benchmark::State& state) {
  model::ModelConfig config;
  config.use_dt = state.range(0) != 0;
  model::GenieModel<float> m(config);
  std::mt19937_64 rng(2);
  m.init(rng);
  engine::DecoderSession s(std::make_shared<const engine::DecoderRuntime>(m), 0.25, 3);
  double t = 0;
  int b = 0;
  for (auto _ : state) {
    auto events = s.press(b, t);
    benchmark::DoNotOptimize(events.data());
    b = (b + 3) % 8;
    t += 0.1;
  }
}
BENCHMARK(BM_Press)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_Lookahead(benchmark::State& state) {
  model::GenieModel<float> m{model::ModelConfig{}};
  std::mt19937_64 rng(2);
  m.init(rng);
  engine::DecoderSession s(std::make_shared<const engine::DecoderRuntime>(m), 0.25, 3);
  s.press(0, 0);
  for (auto _ : state) benchmark::DoNotOptimize(s.lookahead());
}
BENCHMARK(BM_Lookahead)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
