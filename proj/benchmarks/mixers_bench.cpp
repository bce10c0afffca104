#include <benchmark/benchmark.h>

#include <random>

#include "lmwt/layers.hpp"
#include "lmwt/ops.hpp"
#include "lmwt/train.hpp"
#include "lmwt/wavelet.hpp"

namespace {

using namespace lmwt;

Tensor random_input(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = n(rng);
  return Tensor::from({rows, cols}, std::move(v));
}

void BM_HaarForward(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_input(t, 64, 1);
  const ScaleParams p = classical_scale_params(64);
  for (auto _ : state) benchmark::DoNotOptimize(learnable_haar_forward(x, p));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_HaarForward)->RangeMultiplier(2)->Range(256, 8192)->Complexity();

void BM_WaveletMixer(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  const WaveletMixerParams p = init_wavelet_mixer(64, 3, 0.01, rng);
  const Tensor x = random_input(t, 64, 3);
  for (auto _ : state) benchmark::DoNotOptimize(wavelet_mixer(x, p, t));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_WaveletMixer)->RangeMultiplier(2)->Range(256, 8192)->Complexity();

void BM_SelfAttention(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(4);
  const AttentionParams p = init_attention(64, 1, rng);
  const Tensor x = random_input(t, 64, 5);
  for (auto _ : state) benchmark::DoNotOptimize(self_attention(x, p, t));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SelfAttention)->RangeMultiplier(2)->Range(256, 2048)->Complexity()
    ->Unit(benchmark::kMillisecond);

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_input(n, n, 6), b = random_input(n, n, 7);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.counters["flops"] = benchmark::Counter(
      2.0 * static_cast<double>(n * n * n), benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256)->Arg(512);

void BM_TrainStep(benchmark::State& state) {
  ModelConfig mc;
  mc.mixer = state.range(0) == 0 ? MixerKind::kWavelet : MixerKind::kAttention;
  Model model(mc, 0);
  AdamOptimizer opt(model.parameters(), AdamConfig{});
  std::mt19937_64 data(1), drop(2);
  for (auto _ : state) {
    const Batch b = make_batch(mc.task, mc.vocab, mc.seq_len, 32, data);
    Tape tape;
    TapeScope scope(tape);
    LossResult r = forward_loss(model, b, 0.1, true, &drop);
    tape.backward(r.loss);
    opt.step();
    opt.zero_grad();
  }
  state.SetLabel(to_string(mc.mixer));
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
