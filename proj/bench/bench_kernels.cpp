// Serial reference vs OpenMP execution of the heavy kernels, at the shapes
// the Q-network actually runs (32 px frames, batch 32). The two paths share
// one per-row core, so this measures dispatch overhead and scaling, not
// algorithmic differences.
//
//   ./bench_kernels                        # all kernels, current thread count
//   OMP_NUM_THREADS=8 ./bench_kernels --benchmark_filter=gemm

#include <benchmark/benchmark.h>

#include <cstddef>
#include <vector>

#include "vnas/kernels.hpp"
#include "vnas/rng.hpp"

using namespace vnas;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

kern::Exec exec_of(const benchmark::State& state) {
  return state.range(0) ? kern::Exec::kParallel : kern::Exec::kSerial;
}

void set_exec_label(benchmark::State& state) {
  state.SetLabel(state.range(0) ? "parallel" : "serial");
}

// Batch-32 linear layer at head width: (32,288) . (32,288)^T.
void BM_gemm_nt(benchmark::State& state) {
  const std::size_t m = 32, n = 32, k = 288;
  const auto a = random_vec(m * k, 1);
  const auto b = random_vec(n * k, 2);
  std::vector<double> c(m * n);
  for (auto _ : state)
    kern::gemm_nt(a.data(), b.data(), c.data(), m, n, k, exec_of(state));
  benchmark::DoNotOptimize(c.data());
  set_exec_label(state);
}

// Conv as im2col GEMM: 32x32 stride-1 5x5x3 -> 32 channels, one image.
void BM_gemm_conv_shape(benchmark::State& state) {
  const std::size_t m = 32 * 32, n = 32, k = 75;
  const auto a = random_vec(m * k, 3);
  const auto b = random_vec(n * k, 4);
  std::vector<double> c(m * n);
  for (auto _ : state)
    kern::gemm_nt(a.data(), b.data(), c.data(), m, n, k, exec_of(state));
  benchmark::DoNotOptimize(c.data());
  set_exec_label(state);
}

// Weight-gradient accumulation shape: (75,1024)^T . (1024,32).
void BM_gemm_tn(benchmark::State& state) {
  const std::size_t m = 75, n = 32, k = 32 * 32;
  const auto a = random_vec(k * m, 5);
  const auto b = random_vec(k * n, 6);
  std::vector<double> c(m * n);
  for (auto _ : state)
    kern::gemm_tn(a.data(), b.data(), c.data(), m, n, k, exec_of(state));
  benchmark::DoNotOptimize(c.data());
  set_exec_label(state);
}

// Input-gradient shape: (1024,32) . (32,75).
void BM_gemm_nn(benchmark::State& state) {
  const std::size_t m = 32 * 32, n = 75, k = 32;
  const auto a = random_vec(m * k, 7);
  const auto b = random_vec(k * n, 8);
  std::vector<double> c(m * n);
  for (auto _ : state)
    kern::gemm_nn(a.data(), b.data(), c.data(), m, n, k, exec_of(state));
  benchmark::DoNotOptimize(c.data());
  set_exec_label(state);
}

// First-layer patch extraction on a 32x32x3 frame.
void BM_im2col(benchmark::State& state) {
  const kern::ConvGeom g = kern::conv_geom(32, 32, 3, 5, 1, 1);
  const auto img = random_vec(32 * 32 * 3, 9);
  std::vector<double> cols(static_cast<std::size_t>(g.out_h) * g.out_w *
                           g.ksize * g.ksize * g.in_c);
  for (auto _ : state)
    kern::im2col(img.data(), g, cols.data(), exec_of(state));
  benchmark::DoNotOptimize(cols.data());
  set_exec_label(state);
}

// Peer-attention channel mix at site scale: batch 32, 64 positions, 12->12.
void BM_pex_mix(benchmark::State& state) {
  const std::size_t n = 32, p = 64, ci = 12, co = 12;
  const auto x = random_vec(n * p * ci, 10);
  const auto f = random_vec(n * ci * co, 11);
  std::vector<double> y(n * p * co);
  for (auto _ : state)
    kern::pex_mix(x.data(), f.data(), y.data(), n, p, ci, co, exec_of(state));
  benchmark::DoNotOptimize(y.data());
  set_exec_label(state);
}

void BM_pex_mix_grad_f(benchmark::State& state) {
  const std::size_t n = 32, p = 64, ci = 12, co = 12;
  const auto x = random_vec(n * p * ci, 12);
  const auto dy = random_vec(n * p * co, 13);
  std::vector<double> df(n * ci * co);
  for (auto _ : state)
    kern::pex_mix_grad_f(x.data(), dy.data(), df.data(), n, p, ci, co,
                         exec_of(state));
  benchmark::DoNotOptimize(df.data());
  set_exec_label(state);
}

}  // namespace

BENCHMARK(BM_gemm_nt)->Arg(0)->Arg(1);
BENCHMARK(BM_gemm_conv_shape)->Arg(0)->Arg(1);
BENCHMARK(BM_gemm_tn)->Arg(0)->Arg(1);
BENCHMARK(BM_gemm_nn)->Arg(0)->Arg(1);
BENCHMARK(BM_im2col)->Arg(0)->Arg(1);
BENCHMARK(BM_pex_mix)->Arg(0)->Arg(1);
BENCHMARK(BM_pex_mix_grad_f)->Arg(0)->Arg(1);

BENCHMARK_MAIN();
