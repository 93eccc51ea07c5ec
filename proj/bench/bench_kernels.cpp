// Serial reference kernels against the OpenMP ones at training-sized shapes.
// Thread count follows OMP_NUM_THREADS.
#include <benchmark/benchmark.h>

#include <vector>

#include "xld/kernels.hpp"
#include "xld/rng.hpp"

namespace k = xld::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  xld::Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

// Packed batch of 28 sentences of 30 tokens, as in a training step.
constexpr std::size_t kRows = 28 * 30;

template <bool kParallel>
void BM_GemmNN(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(kRows * n, 1), b = random_vec(n * 4 * n, 2);
  std::vector<float> c(kRows * 4 * n);
  for (auto _ : state) {
    if constexpr (kParallel) k::gemm_nn(kRows, 4 * n, n, a.data(), b.data(), c.data(), false);
    else k::serial::gemm_nn(kRows, 4 * n, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(2 * kRows * 4 * n * n));
}

template <bool kParallel>
void BM_GemmNT(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(kRows * 4 * n, 1), b = random_vec(n * 4 * n, 2);
  std::vector<float> c(kRows * n);
  for (auto _ : state) {
    if constexpr (kParallel) k::gemm_nt(kRows, n, 4 * n, a.data(), b.data(), c.data(), false);
    else k::serial::gemm_nt(kRows, n, 4 * n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(2 * kRows * 4 * n * n));
}

template <bool kParallel>
void BM_GemmTN(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(kRows * n, 1), b = random_vec(kRows * 4 * n, 2);
  std::vector<float> c(n * 4 * n);
  for (auto _ : state) {
    if constexpr (kParallel) k::gemm_tn(kRows, 4 * n, n, a.data(), b.data(), c.data(), false);
    else k::serial::gemm_tn(kRows, 4 * n, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(2 * kRows * 4 * n * n));
}

template <bool kParallel>
void BM_LayerNorm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_vec(kRows * n, 3);
  std::vector<float> gain(n, 1.0f), bias(n, 0.0f), xhat(kRows * n), inv(kRows), y(kRows * n);
  for (auto _ : state) {
    if constexpr (kParallel) {
      k::layer_norm_forward(kRows, n, x.data(), gain.data(), bias.data(), 1e-5f, xhat.data(), inv.data(), y.data());
    } else {
      k::serial::layer_norm_forward(kRows, n, x.data(), gain.data(), bias.data(), 1e-5f, xhat.data(), inv.data(),
                                    y.data());
    }
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool kParallel>
void BM_Attention(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const k::AttentionShape shape{kRows, n, n / 16};
  std::vector<k::Segment> segments;
  for (std::size_t s = 0; s < 28; ++s) segments.push_back({s * 30, 30});
  const auto q = random_vec(kRows * n, 4), kk = random_vec(kRows * n, 5), v = random_vec(kRows * n, 6);
  std::vector<float> probs(k::attention_probs_size(segments, shape.heads)), out(kRows * n);
  for (auto _ : state) {
    if constexpr (kParallel) {
      k::attention_forward(shape, segments, nullptr, q.data(), kk.data(), v.data(), probs.data(), out.data());
    } else {
      k::serial::attention_forward(shape, segments, nullptr, q.data(), kk.data(), v.data(), probs.data(),
                                   out.data());
    }
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_GemmNN<false>)->Name("gemm_nn/serial")->Arg(64)->Arg(128);
BENCHMARK(BM_GemmNN<true>)->Name("gemm_nn/parallel")->Arg(64)->Arg(128);
BENCHMARK(BM_GemmNT<false>)->Name("gemm_nt/serial")->Arg(64)->Arg(128);
BENCHMARK(BM_GemmNT<true>)->Name("gemm_nt/parallel")->Arg(64)->Arg(128);
BENCHMARK(BM_GemmTN<false>)->Name("gemm_tn/serial")->Arg(64)->Arg(128);
BENCHMARK(BM_GemmTN<true>)->Name("gemm_tn/parallel")->Arg(64)->Arg(128);
BENCHMARK(BM_LayerNorm<false>)->Name("layer_norm/serial")->Arg(128);
BENCHMARK(BM_LayerNorm<true>)->Name("layer_norm/parallel")->Arg(128);
BENCHMARK(BM_Attention<false>)->Name("attention/serial")->Arg(64)->Arg(128);
BENCHMARK(BM_Attention<true>)->Name("attention/parallel")->Arg(64)->Arg(128);

BENCHMARK_MAIN();
