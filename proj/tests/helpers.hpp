#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "vnas/rng.hpp"
#include "vnas/tensor.hpp"

namespace testutil {

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

inline vnas::Tensor random_tensor(vnas::Shape shape, vnas::Rng& rng,
                                  double scale = 1.0,
                                  bool requires_grad = false) {
  auto t = vnas::Tensor::zeros(std::move(shape), requires_grad);
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t.data()[i] = rng.uniform(-scale, scale);
  return t;
}

// Central-difference derivative of f() w.r.t. one entry of t. f must
// recompute the full forward pass from current tensor contents.
inline double fd_entry(const std::function<double()>& f, vnas::Tensor& t,
                       std::int64_t idx, double eps = 1e-5) {
  double* p = t.data() + idx;
  const double orig = *p;
  *p = orig + eps;
  const double fp = f();
  *p = orig - eps;
  const double fm = f();
  *p = orig;
  return (fp - fm) / (2.0 * eps);
}

// Checks AD gradients of a scalar-valued graph against central differences
// for every entry of every listed tensor. Returns the max relative error.
inline double check_grads(const std::function<vnas::Tensor()>& make_loss,
                          std::vector<vnas::Tensor> tensors,
                          double eps = 1e-5) {
  for (auto& t : tensors) t.zero_grad();
  {
    vnas::TapeScope scope;
    auto loss = make_loss();
    scope.tape().backward(loss);
  }
  double worst = 0.0;
  auto eval = [&]() {
    vnas::NoGradScope ng;
    return make_loss().item();
  };
  for (auto& t : tensors) {
    for (std::int64_t i = 0; i < t.numel(); ++i) {
      const double num = fd_entry(eval, t, i, eps);
      const double ana = t.has_grad() ? t.grad()[i] : 0.0;
      worst = std::max(worst, rel_err(num, ana));
    }
  }
  return worst;
}

// Plain triple-loop reference GEMMs (independent of the kernel path).
inline void naive_gemm_nt(const double* a, const double* b, double* c,
                          std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += a[i * k + l] * b[j * k + l];
      c[i * n + j] = acc;
    }
}

inline void naive_gemm_nn(const double* a, const double* b, double* c,
                          std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += a[i * k + l] * b[l * n + j];
      c[i * n + j] = acc;
    }
}

inline void naive_gemm_tn(const double* a, const double* b, double* c,
                          std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += a[l * m + i] * b[l * n + j];
      c[i * n + j] = acc;
    }
}

// Direct (no im2col) SAME-padded NHWC convolution used as the conv oracle.
inline std::vector<double> naive_conv2d(const std::vector<double>& x,
                                        std::int64_t n, std::int64_t h,
                                        std::int64_t w, std::int64_t ci,
                                        const std::vector<double>& f,
                                        std::int64_t co, std::int64_t k,
                                        int stride, int dilation,
                                        const std::vector<double>& bias) {
  const std::int64_t oh = (h + stride - 1) / stride;
  const std::int64_t ow = (w + stride - 1) / stride;
  const std::int64_t eff = (k - 1) * dilation + 1;
  const std::int64_t pad_h =
      std::max<std::int64_t>((oh - 1) * stride + eff - h, 0);
  const std::int64_t pad_w =
      std::max<std::int64_t>((ow - 1) * stride + eff - w, 0);
  const std::int64_t pt = pad_h / 2, pl = pad_w / 2;
  std::vector<double> y(static_cast<std::size_t>(n * oh * ow * co), 0.0);
  for (std::int64_t e = 0; e < n; ++e)
    for (std::int64_t oy = 0; oy < oh; ++oy)
      for (std::int64_t ox = 0; ox < ow; ++ox)
        for (std::int64_t oc = 0; oc < co; ++oc) {
          double acc = bias.empty() ? 0.0 : bias[oc];
          for (std::int64_t ky = 0; ky < k; ++ky)
            for (std::int64_t kx = 0; kx < k; ++kx) {
              const std::int64_t iy = oy * stride - pt + ky * dilation;
              const std::int64_t ix = ox * stride - pl + kx * dilation;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              for (std::int64_t c = 0; c < ci; ++c)
                acc += x[((e * h + iy) * w + ix) * ci + c] *
                       f[((oc * k + ky) * k + kx) * ci + c];
            }
          y[((e * oh + oy) * ow + ox) * co + oc] = acc;
        }
  return y;
}

}  // namespace testutil
