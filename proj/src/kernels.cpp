#include "vnas/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstring>

#include "vnas/common.hpp"

namespace vnas::kern {

void set_num_threads(int n) { omp_set_num_threads(std::max(1, n)); }

int num_threads() { return omp_get_max_threads(); }

// Dot product with eight independent accumulation chains folded in a fixed
// tree. The chain structure never depends on thread count or execution
// policy, only on n — that, plus routing serial and parallel paths through
// the same compiled per-row routines below, is what makes results
// bit-identical across OMP_NUM_THREADS.
static inline double dot(const double* a, const double* b, std::size_t n) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8)
    for (int l = 0; l < 8; ++l) acc[l] += a[j + l] * b[j + l];
  for (; j < n; ++j) acc[j & 7] += a[j] * b[j];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) +
         ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

[[gnu::noinline]] static void nt_row(const double* a, const double* b,
                                     double* c, std::size_t n, std::size_t k,
                                     std::size_t i) {
  const double* ai = a + i * k;
  double* ci = c + i * n;
  for (std::size_t j = 0; j < n; ++j) ci[j] = dot(ai, b + j * k, k);
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t n, std::size_t k, Exec exec) {
  if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i)
      nt_row(a, b, c, n, k, static_cast<std::size_t>(i));
  } else {
    for (std::size_t i = 0; i < m; ++i) nt_row(a, b, c, n, k, i);
  }
}

[[gnu::noinline]] static void nn_row(const double* a, const double* b,
                                     double* c, std::size_t n, std::size_t k,
                                     std::size_t i) {
  const double* ai = a + i * k;
  double* ci = c + i * n;
  for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double av = ai[kk];
    const double* bk = b + kk * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] += av * bk[j];
  }
}

void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t n, std::size_t k, Exec exec) {
  if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i)
      nn_row(a, b, c, n, k, static_cast<std::size_t>(i));
  } else {
    for (std::size_t i = 0; i < m; ++i) nn_row(a, b, c, n, k, i);
  }
}

[[gnu::noinline]] static void tn_row(const double* a, const double* b,
                                     double* c, std::size_t m, std::size_t n,
                                     std::size_t k, std::size_t i) {
  double* ci = c + i * n;
  for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double av = a[kk * m + i];
    const double* bk = b + kk * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] += av * bk[j];
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t n, std::size_t k, Exec exec) {
  if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i)
      tn_row(a, b, c, m, n, k, static_cast<std::size_t>(i));
  } else {
    for (std::size_t i = 0; i < m; ++i) tn_row(a, b, c, m, n, k, i);
  }
}

ConvGeom conv_geom(int in_h, int in_w, int in_c, int ksize, int stride,
                   int dilation) {
  VNAS_CHECK(ksize >= 1 && ksize % 2 == 1, ValueError,
             "kernel size must be odd and positive");
  VNAS_CHECK(stride >= 1, ValueError, "stride must be >= 1");
  VNAS_CHECK(dilation >= 1, ValueError, "dilation must be >= 1");
  VNAS_CHECK(in_h >= 1 && in_w >= 1 && in_c >= 1, ShapeError,
             "conv input dims must be positive");
  ConvGeom g;
  g.in_h = in_h;
  g.in_w = in_w;
  g.in_c = in_c;
  g.ksize = ksize;
  g.stride = stride;
  g.dilation = dilation;
  g.out_h = (in_h + stride - 1) / stride;
  g.out_w = (in_w + stride - 1) / stride;
  const int eff = (ksize - 1) * dilation + 1;
  const int pad_h = std::max((g.out_h - 1) * stride + eff - in_h, 0);
  const int pad_w = std::max((g.out_w - 1) * stride + eff - in_w, 0);
  g.pad_top = pad_h / 2;
  g.pad_left = pad_w / 2;
  return g;
}

[[gnu::noinline]] static void im2col_row(const double* img, const ConvGeom& g,
                                         double* cols, int p) {
  const int oy = p / g.out_w;
  const int ox = p % g.out_w;
  const std::size_t row_len =
      static_cast<std::size_t>(g.ksize) * g.ksize * g.in_c;
  double* r = cols + static_cast<std::size_t>(p) * row_len;
  for (int ky = 0; ky < g.ksize; ++ky) {
    const int iy = oy * g.stride - g.pad_top + ky * g.dilation;
    for (int kx = 0; kx < g.ksize; ++kx) {
      const int ix = ox * g.stride - g.pad_left + kx * g.dilation;
      if (iy >= 0 && iy < g.in_h && ix >= 0 && ix < g.in_w) {
        std::memcpy(r, img + (static_cast<std::size_t>(iy) * g.in_w + ix) *
                             g.in_c,
                    sizeof(double) * g.in_c);
      } else {
        std::memset(r, 0, sizeof(double) * g.in_c);
      }
      r += g.in_c;
    }
  }
}

void im2col(const double* img, const ConvGeom& g, double* cols, Exec exec) {
  const int np = g.out_h * g.out_w;
  if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(static)
    for (int p = 0; p < np; ++p) im2col_row(img, g, cols, p);
  } else {
    for (int p = 0; p < np; ++p) im2col_row(img, g, cols, p);
  }
}

void col2im(const double* cols, const ConvGeom& g, double* d_img) {
  const int np = g.out_h * g.out_w;
  const double* r = cols;
  for (int p = 0; p < np; ++p) {
    const int oy = p / g.out_w;
    const int ox = p % g.out_w;
    for (int ky = 0; ky < g.ksize; ++ky) {
      const int iy = oy * g.stride - g.pad_top + ky * g.dilation;
      for (int kx = 0; kx < g.ksize; ++kx) {
        const int ix = ox * g.stride - g.pad_left + kx * g.dilation;
        if (iy >= 0 && iy < g.in_h && ix >= 0 && ix < g.in_w) {
          double* d =
              d_img + (static_cast<std::size_t>(iy) * g.in_w + ix) * g.in_c;
          for (int c = 0; c < g.in_c; ++c) d[c] += r[c];
        }
        r += g.in_c;
      }
    }
  }
}

[[gnu::noinline]] static void pex_row(const double* x, const double* f,
                                      double* y, std::size_t p, std::size_t ci,
                                      std::size_t co, std::size_t np) {
  const std::size_t n = np / p;  // example index
  const std::size_t pp = np % p;
  const double* xr = x + (n * p + pp) * ci;
  const double* fn = f + n * ci * co;
  double* yr = y + (n * p + pp) * co;
  for (std::size_t j = 0; j < co; ++j) yr[j] = 0.0;
  for (std::size_t c = 0; c < ci; ++c) {
    const double xv = xr[c];
    const double* fc = fn + c * co;
    for (std::size_t j = 0; j < co; ++j) yr[j] += xv * fc[j];
  }
}

void pex_mix(const double* x, const double* f, double* y, std::size_t n,
             std::size_t p, std::size_t ci, std::size_t co, Exec exec) {
  const std::size_t rows = n * p;
  if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < static_cast<std::int64_t>(rows); ++r)
      pex_row(x, f, y, p, ci, co, static_cast<std::size_t>(r));
  } else {
    for (std::size_t r = 0; r < rows; ++r) pex_row(x, f, y, p, ci, co, r);
  }
}

[[gnu::noinline]] static void pex_gx_row(const double* dy, const double* f,
                                         double* dx, std::size_t p,
                                         std::size_t ci, std::size_t co,
                                         std::size_t np) {
  const std::size_t n = np / p;
  const std::size_t pp = np % p;
  const double* dyr = dy + (n * p + pp) * co;
  const double* fn = f + n * ci * co;
  double* dxr = dx + (n * p + pp) * ci;
  for (std::size_t c = 0; c < ci; ++c) dxr[c] = dot(dyr, fn + c * co, co);
}

void pex_mix_grad_x(const double* dy, const double* f, double* dx,
                    std::size_t n, std::size_t p, std::size_t ci,
                    std::size_t co, Exec exec) {
  const std::size_t rows = n * p;
  if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < static_cast<std::int64_t>(rows); ++r)
      pex_gx_row(dy, f, dx, p, ci, co, static_cast<std::size_t>(r));
  } else {
    for (std::size_t r = 0; r < rows; ++r) pex_gx_row(dy, f, dx, p, ci, co, r);
  }
}

[[gnu::noinline]] static void pex_gf_row(const double* x, const double* dy,
                                         double* df, std::size_t p,
                                         std::size_t ci, std::size_t co,
                                         std::size_t nc) {
  const std::size_t n = nc / ci;
  const std::size_t c = nc % ci;
  double* dfr = df + (n * ci + c) * co;
  for (std::size_t j = 0; j < co; ++j) dfr[j] = 0.0;
  const double* xn = x + n * p * ci;
  const double* dyn = dy + n * p * co;
  for (std::size_t pp = 0; pp < p; ++pp) {
    const double xv = xn[pp * ci + c];
    const double* dyr = dyn + pp * co;
    for (std::size_t j = 0; j < co; ++j) dfr[j] += xv * dyr[j];
  }
}

void pex_mix_grad_f(const double* x, const double* dy, double* df,
                    std::size_t n, std::size_t p, std::size_t ci,
                    std::size_t co, Exec exec) {
  const std::size_t rows = n * ci;
  if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < static_cast<std::int64_t>(rows); ++r)
      pex_gf_row(x, dy, df, p, ci, co, static_cast<std::size_t>(r));
  } else {
    for (std::size_t r = 0; r < rows; ++r) pex_gf_row(x, dy, df, p, ci, co, r);
  }
}

}  // namespace vnas::kern
