#pragma once

#include <cstddef>
#include <cstdint>

namespace vnas::kern {

// Execution policy for the heavy kernels. Both paths run the exact same
// per-row core routine, so results are bit-identical between Serial and
// Parallel at any thread count; Serial exists as the reference for tests and
// benchmarks.
enum class Exec { kSerial, kParallel };

void set_num_threads(int n);
int num_threads();

// C (M,N) = A (M,K) . B^T where B is stored row-major as (N,K).
// The workhorse: both operands are read contiguously.
void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t n, std::size_t k, Exec exec = Exec::kParallel);

// C (M,N) = A (M,K) . B (K,N).
void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t n, std::size_t k, Exec exec = Exec::kParallel);

// C (M,N) = A^T . B where A is (K,M) and B is (K,N).
void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t n, std::size_t k, Exec exec = Exec::kParallel);

// SAME-padded conv geometry (output spatial = ceil(in / stride), TF-style
// split of the total padding with the smaller half leading).
struct ConvGeom {
  int in_h, in_w, in_c;
  int ksize, stride, dilation;
  int out_h, out_w;
  int pad_top, pad_left;
};
ConvGeom conv_geom(int in_h, int in_w, int in_c, int ksize, int stride,
                   int dilation);

// im2col for one NHWC image: out is (out_h*out_w, ksize*ksize*in_c),
// zero-filled where the window hangs over the padding.
void im2col(const double* img, const ConvGeom& g, double* cols,
            Exec exec = Exec::kParallel);

// Scatter-add transpose of im2col: accumulates cols back into d_img
// (which must be zeroed by the caller). Serial by construction: the scatter
// has write collisions, and a fixed traversal order is what keeps gradients
// reproducible.
void col2im(const double* cols, const ConvGeom& g, double* d_img);

// Per-example channel mix (batched 1x1 conv with per-example filters):
//   y[n,p,co] = sum_ci x[n,p,ci] * f[n,ci,co]
// x: (N, P, Ci), f: (N, Ci, Co), y: (N, P, Co).
void pex_mix(const double* x, const double* f, double* y, std::size_t n,
             std::size_t p, std::size_t ci, std::size_t co,
             Exec exec = Exec::kParallel);
// dx[n,p,ci] = sum_co dy[n,p,co] * f[n,ci,co]
void pex_mix_grad_x(const double* dy, const double* f, double* dx,
                    std::size_t n, std::size_t p, std::size_t ci,
                    std::size_t co, Exec exec = Exec::kParallel);
// df[n,ci,co] = sum_p x[n,p,ci] * dy[n,p,co]
void pex_mix_grad_f(const double* x, const double* dy, double* df,
                    std::size_t n, std::size_t p, std::size_t ci,
                    std::size_t co, Exec exec = Exec::kParallel);

}  // namespace vnas::kern
