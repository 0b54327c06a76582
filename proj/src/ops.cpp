#include "vnas/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "vnas/kernels.hpp"

namespace vnas::ops {

namespace {

// Records the backward closure when recording is on and any input needs a
// gradient. Also the debug finite check for every op output.
void finish(Tensor& out, std::initializer_list<Tensor> inputs,
            std::function<void()> fn, const char* opname) {
  debug_check_finite(out, opname);
  Tape* tape = Tape::active();
  if (tape == nullptr) return;
  for (const auto& t : inputs) {
    if (t.defined() && t.requires_grad()) {
      out.set_requires_grad(true);
      tape->record(out.impl(), std::move(fn));
      return;
    }
  }
}

// Broadcast bookkeeping: per output dim, the operand stride (0 where the
// operand dimension is 1 and stretched).
struct BinMap {
  bool same = false;
  Shape out;
  std::vector<std::int64_t> od;  // output dims
  std::vector<std::int64_t> sa, sb;
};

std::vector<std::int64_t> strides_for(const Shape& s) {
  std::vector<std::int64_t> st(s.size());
  std::int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<std::size_t>(i)] = acc;
    acc *= s[static_cast<std::size_t>(i)];
  }
  return st;
}

BinMap bin_map(const Shape& a, const Shape& b) {
  BinMap m;
  m.out = broadcast_shape(a, b);
  m.same = (a == b);
  if (m.same) return m;
  const int nd = static_cast<int>(m.out.size());
  m.od = m.out;
  m.sa.assign(static_cast<std::size_t>(nd), 0);
  m.sb.assign(static_cast<std::size_t>(nd), 0);
  const auto ast = strides_for(a);
  const auto bst = strides_for(b);
  const int na = static_cast<int>(a.size());
  const int nb = static_cast<int>(b.size());
  for (int d = 0; d < nd; ++d) {
    const int da = d - (nd - na);
    const int db = d - (nd - nb);
    if (da >= 0 && a[static_cast<std::size_t>(da)] != 1)
      m.sa[static_cast<std::size_t>(d)] = ast[static_cast<std::size_t>(da)];
    if (db >= 0 && b[static_cast<std::size_t>(db)] != 1)
      m.sb[static_cast<std::size_t>(d)] = bst[static_cast<std::size_t>(db)];
  }
  return m;
}

std::int64_t map_index(std::int64_t oi, const std::vector<std::int64_t>& od,
                       const std::vector<std::int64_t>& st) {
  std::int64_t rem = oi, idx = 0;
  for (int d = static_cast<int>(od.size()) - 1; d >= 0; --d) {
    const auto sz = od[static_cast<std::size_t>(d)];
    idx += (rem % sz) * st[static_cast<std::size_t>(d)];
    rem /= sz;
  }
  return idx;
}

enum class BinKind { kAdd, kSub, kMul };

Tensor binary(const Tensor& a, const Tensor& b, BinKind kind,
              const char* name) {
  VNAS_CHECK(a.defined() && b.defined(), ValueError,
             std::string(name) + ": undefined operand");
  BinMap m = bin_map(a.shape(), b.shape());
  Tensor out = Tensor::zeros(m.out);
  const double* av = a.data();
  const double* bv = b.data();
  double* ov = out.data();
  const std::int64_t n = out.numel();
  if (m.same) {
    switch (kind) {
      case BinKind::kAdd:
        for (std::int64_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i];
        break;
      case BinKind::kSub:
        for (std::int64_t i = 0; i < n; ++i) ov[i] = av[i] - bv[i];
        break;
      case BinKind::kMul:
        for (std::int64_t i = 0; i < n; ++i) ov[i] = av[i] * bv[i];
        break;
    }
  } else {
    for (std::int64_t i = 0; i < n; ++i) {
      const double x = av[map_index(i, m.od, m.sa)];
      const double y = bv[map_index(i, m.od, m.sb)];
      ov[i] = kind == BinKind::kAdd ? x + y
              : kind == BinKind::kSub ? x - y
                                      : x * y;
    }
  }
  auto ai = a.impl();
  auto bi = b.impl();
  auto oi = out.impl();
  finish(
      out, {a, b},
      [ai, bi, oi, m, kind, n]() {
        const double* g = oi->grad.data();
        double* ga = ai->requires_grad ? ai->ensure_grad() : nullptr;
        double* gb = bi->requires_grad ? bi->ensure_grad() : nullptr;
        if (m.same) {
          for (std::int64_t i = 0; i < n; ++i) {
            switch (kind) {
              case BinKind::kAdd:
                if (ga) ga[i] += g[i];
                if (gb) gb[i] += g[i];
                break;
              case BinKind::kSub:
                if (ga) ga[i] += g[i];
                if (gb) gb[i] -= g[i];
                break;
              case BinKind::kMul:
                if (ga) ga[i] += g[i] * bi->data[static_cast<std::size_t>(i)];
                if (gb) gb[i] += g[i] * ai->data[static_cast<std::size_t>(i)];
                break;
            }
          }
        } else {
          for (std::int64_t i = 0; i < n; ++i) {
            const auto ia = map_index(i, m.od, m.sa);
            const auto ib = map_index(i, m.od, m.sb);
            switch (kind) {
              case BinKind::kAdd:
                if (ga) ga[ia] += g[i];
                if (gb) gb[ib] += g[i];
                break;
              case BinKind::kSub:
                if (ga) ga[ia] += g[i];
                if (gb) gb[ib] -= g[i];
                break;
              case BinKind::kMul:
                if (ga)
                  ga[ia] += g[i] * bi->data[static_cast<std::size_t>(ib)];
                if (gb)
                  gb[ib] += g[i] * ai->data[static_cast<std::size_t>(ia)];
                break;
            }
          }
        }
      },
      name);
  return out;
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const int na = static_cast<int>(a.size());
  const int nb = static_cast<int>(b.size());
  const int nd = std::max(na, nb);
  Shape out(static_cast<std::size_t>(nd));
  for (int d = 0; d < nd; ++d) {
    const int da = d - (nd - na);
    const int db = d - (nd - nb);
    const std::int64_t va = da >= 0 ? a[static_cast<std::size_t>(da)] : 1;
    const std::int64_t vb = db >= 0 ? b[static_cast<std::size_t>(db)] : 1;
    VNAS_CHECK(va == vb || va == 1 || vb == 1, ShapeError,
               "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    out[static_cast<std::size_t>(d)] = std::max(va, vb);
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(a, b, BinKind::kAdd, "add");
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(a, b, BinKind::kSub, "sub");
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(a, b, BinKind::kMul, "mul");
}

Tensor relu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const double* xv = x.data();
  double* ov = out.data();
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  auto xi = x.impl();
  auto oi = out.impl();
  finish(
      out, {x},
      [xi, oi, n]() {
        double* gx = xi->ensure_grad();
        const double* g = oi->grad.data();
        for (std::int64_t i = 0; i < n; ++i)
          if (xi->data[static_cast<std::size_t>(i)] > 0.0) gx[i] += g[i];
      },
      "relu");
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const double* xv = x.data();
  double* ov = out.data();
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    const double v = xv[i];
    if (v >= 0.0) {
      ov[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      ov[i] = e / (1.0 + e);
    }
  }
  auto xi = x.impl();
  auto oi = out.impl();
  finish(
      out, {x},
      [xi, oi, n]() {
        double* gx = xi->ensure_grad();
        const double* g = oi->grad.data();
        const double* y = oi->data.data();
        for (std::int64_t i = 0; i < n; ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
      },
      "sigmoid");
  return out;
}

Tensor softmax_lastdim(const Tensor& x) {
  VNAS_CHECK(x.ndim() >= 1, ShapeError, "softmax needs rank >= 1");
  const std::int64_t k = x.dim(x.ndim() - 1);
  VNAS_CHECK(k >= 1, ShapeError, "softmax over empty axis");
  const std::int64_t rows = x.numel() / k;
  Tensor out = Tensor::zeros(x.shape());
  const double* xv = x.data();
  double* ov = out.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xr = xv + r * k;
    double* yr = ov + r * k;
    double mx = xr[0];
    for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, xr[j]);
    double s = 0.0;
    for (std::int64_t j = 0; j < k; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      s += yr[j];
    }
    const double inv = 1.0 / s;
    for (std::int64_t j = 0; j < k; ++j) yr[j] *= inv;
  }
  auto xi = x.impl();
  auto oi = out.impl();
  finish(
      out, {x},
      [xi, oi, rows, k]() {
        double* gx = xi->ensure_grad();
        const double* g = oi->grad.data();
        const double* y = oi->data.data();
        for (std::int64_t r = 0; r < rows; ++r) {
          const double* gr = g + r * k;
          const double* yr = y + r * k;
          double s = 0.0;
          for (std::int64_t j = 0; j < k; ++j) s += gr[j] * yr[j];
          double* gxr = gx + r * k;
          for (std::int64_t j = 0; j < k; ++j)
            gxr[j] += yr[j] * (gr[j] - s);
        }
      },
      "softmax");
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  VNAS_CHECK(x.ndim() == 2 && w.ndim() == 2, ShapeError,
             "linear expects 2-D x and w, got " + shape_str(x.shape()) +
                 " and " + shape_str(w.shape()));
  const std::int64_t bsz = x.dim(0), in = x.dim(1), outn = w.dim(0);
  VNAS_CHECK(w.dim(1) == in, ShapeError,
             "linear: w " + shape_str(w.shape()) + " does not match x " +
                 shape_str(x.shape()));
  if (b.defined())
    VNAS_CHECK(b.ndim() == 1 && b.dim(0) == outn, ShapeError,
               "linear: bias " + shape_str(b.shape()) + " vs out " +
                   std::to_string(outn));
  Tensor out = Tensor::zeros({bsz, outn});
  kern::gemm_nt(x.data(), w.data(), out.data(), static_cast<std::size_t>(bsz),
                static_cast<std::size_t>(outn), static_cast<std::size_t>(in));
  if (b.defined()) {
    double* ov = out.data();
    const double* bv = b.data();
    for (std::int64_t r = 0; r < bsz; ++r)
      for (std::int64_t j = 0; j < outn; ++j) ov[r * outn + j] += bv[j];
  }
  auto xi = x.impl();
  auto wi = w.impl();
  auto bi = b.defined() ? b.impl() : nullptr;
  auto oi = out.impl();
  finish(
      out, {x, w, b},
      [xi, wi, bi, oi, bsz, in, outn]() {
        const double* g = oi->grad.data();
        if (xi->requires_grad) {
          std::vector<double> tmp(static_cast<std::size_t>(bsz * in));
          kern::gemm_nn(g, wi->data.data(), tmp.data(),
                        static_cast<std::size_t>(bsz),
                        static_cast<std::size_t>(in),
                        static_cast<std::size_t>(outn));
          double* gx = xi->ensure_grad();
          for (std::size_t i = 0; i < tmp.size(); ++i) gx[i] += tmp[i];
        }
        if (wi->requires_grad) {
          std::vector<double> tmp(static_cast<std::size_t>(outn * in));
          kern::gemm_tn(g, xi->data.data(), tmp.data(),
                        static_cast<std::size_t>(outn),
                        static_cast<std::size_t>(in),
                        static_cast<std::size_t>(bsz));
          double* gw = wi->ensure_grad();
          for (std::size_t i = 0; i < tmp.size(); ++i) gw[i] += tmp[i];
        }
        if (bi && bi->requires_grad) {
          double* gb = bi->ensure_grad();
          for (std::int64_t r = 0; r < bsz; ++r)
            for (std::int64_t j = 0; j < outn; ++j) gb[j] += g[r * outn + j];
        }
      },
      "linear");
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int dilation) {
  VNAS_CHECK(x.ndim() == 4, ShapeError,
             "conv2d expects NHWC input, got " + shape_str(x.shape()));
  VNAS_CHECK(w.ndim() == 4, ShapeError,
             "conv2d expects (Co,k,k,Ci) filters, got " +
                 shape_str(w.shape()));
  const std::int64_t n = x.dim(0), h = x.dim(1), ww = x.dim(2), ci = x.dim(3);
  const std::int64_t co = w.dim(0), k = w.dim(1);
  VNAS_CHECK(w.dim(2) == k && w.dim(3) == ci, ShapeError,
             "conv2d: filters " + shape_str(w.shape()) +
                 " incompatible with input " + shape_str(x.shape()));
  const auto g = kern::conv_geom(static_cast<int>(h), static_cast<int>(ww),
                                 static_cast<int>(ci), static_cast<int>(k),
                                 stride, dilation);
  if (b.defined())
    VNAS_CHECK(b.ndim() == 1 && b.dim(0) == co, ShapeError,
               "conv2d: bias " + shape_str(b.shape()));
  const std::int64_t p = static_cast<std::int64_t>(g.out_h) * g.out_w;
  const std::int64_t kk = k * k * ci;
  auto cols = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(n * p * kk));
  for (std::int64_t e = 0; e < n; ++e)
    kern::im2col(x.data() + e * h * ww * ci, g, cols->data() + e * p * kk);
  Tensor out = Tensor::zeros({n, g.out_h, g.out_w, co});
  kern::gemm_nt(cols->data(), w.data(), out.data(),
                static_cast<std::size_t>(n * p), static_cast<std::size_t>(co),
                static_cast<std::size_t>(kk));
  if (b.defined()) {
    double* ov = out.data();
    const double* bv = b.data();
    for (std::int64_t r = 0; r < n * p; ++r)
      for (std::int64_t j = 0; j < co; ++j) ov[r * co + j] += bv[j];
  }
  auto xi = x.impl();
  auto wi = w.impl();
  auto bi = b.defined() ? b.impl() : nullptr;
  auto oi = out.impl();
  finish(
      out, {x, w, b},
      [xi, wi, bi, oi, cols, g, n, p, kk, co]() {
        const double* gy = oi->grad.data();
        if (xi->requires_grad) {
          std::vector<double> dcols(static_cast<std::size_t>(n * p * kk));
          kern::gemm_nn(gy, wi->data.data(), dcols.data(),
                        static_cast<std::size_t>(n * p),
                        static_cast<std::size_t>(kk),
                        static_cast<std::size_t>(co));
          double* gx = xi->ensure_grad();
          const std::int64_t img = static_cast<std::int64_t>(g.in_h) *
                                   g.in_w * g.in_c;
          for (std::int64_t e = 0; e < n; ++e)
            kern::col2im(dcols.data() + e * p * kk, g, gx + e * img);
        }
        if (wi->requires_grad) {
          std::vector<double> tmp(static_cast<std::size_t>(co * kk));
          kern::gemm_tn(gy, cols->data(), tmp.data(),
                        static_cast<std::size_t>(co),
                        static_cast<std::size_t>(kk),
                        static_cast<std::size_t>(n * p));
          double* gw = wi->ensure_grad();
          for (std::size_t i = 0; i < tmp.size(); ++i) gw[i] += tmp[i];
        }
        if (bi && bi->requires_grad) {
          double* gb = bi->ensure_grad();
          for (std::int64_t r = 0; r < n * p; ++r)
            for (std::int64_t j = 0; j < co; ++j) gb[j] += gy[r * co + j];
        }
      },
      "conv2d");
  return out;
}

Tensor gap(const Tensor& x) {
  VNAS_CHECK(x.ndim() == 4, ShapeError,
             "gap expects NHWC input, got " + shape_str(x.shape()));
  const std::int64_t n = x.dim(0), p = x.dim(1) * x.dim(2), c = x.dim(3);
  VNAS_CHECK(p > 0, ShapeError, "gap over empty spatial extent");
  Tensor out = Tensor::zeros({n, c});
  const double* xv = x.data();
  double* ov = out.data();
  const double inv = 1.0 / static_cast<double>(p);
  for (std::int64_t e = 0; e < n; ++e)
    for (std::int64_t j = 0; j < c; ++j) {
      double acc = 0.0;
      const double* base = xv + e * p * c + j;
      for (std::int64_t q = 0; q < p; ++q) acc += base[q * c];
      ov[e * c + j] = acc * inv;
    }
  auto xi = x.impl();
  auto oi = out.impl();
  finish(
      out, {x},
      [xi, oi, n, p, c, inv]() {
        double* gx = xi->ensure_grad();
        const double* g = oi->grad.data();
        for (std::int64_t e = 0; e < n; ++e)
          for (std::int64_t q = 0; q < p; ++q)
            for (std::int64_t j = 0; j < c; ++j)
              gx[e * p * c + q * c + j] += g[e * c + j] * inv;
      },
      "gap");
  return out;
}

Tensor concat_lastdim(const Tensor& a, const Tensor& b) {
  VNAS_CHECK(a.ndim() == b.ndim() && a.ndim() >= 1, ShapeError,
             "concat: rank mismatch " + shape_str(a.shape()) + " vs " +
                 shape_str(b.shape()));
  for (int d = 0; d + 1 < a.ndim(); ++d)
    VNAS_CHECK(a.dim(d) == b.dim(d), ShapeError,
               "concat: leading dims differ " + shape_str(a.shape()) +
                   " vs " + shape_str(b.shape()));
  const std::int64_t ca = a.dim(a.ndim() - 1), cb = b.dim(b.ndim() - 1);
  const std::int64_t rows = a.numel() / std::max<std::int64_t>(ca, 1);
  Shape os = a.shape();
  os.back() = ca + cb;
  Tensor out = Tensor::zeros(os);
  const double* av = a.data();
  const double* bv = b.data();
  double* ov = out.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    std::memcpy(ov + r * (ca + cb), av + r * ca, sizeof(double) * ca);
    std::memcpy(ov + r * (ca + cb) + ca, bv + r * cb, sizeof(double) * cb);
  }
  auto ai = a.impl();
  auto bi = b.impl();
  auto oi = out.impl();
  finish(
      out, {a, b},
      [ai, bi, oi, rows, ca, cb]() {
        const double* g = oi->grad.data();
        double* ga = ai->requires_grad ? ai->ensure_grad() : nullptr;
        double* gb = bi->requires_grad ? bi->ensure_grad() : nullptr;
        for (std::int64_t r = 0; r < rows; ++r) {
          if (ga)
            for (std::int64_t j = 0; j < ca; ++j)
              ga[r * ca + j] += g[r * (ca + cb) + j];
          if (gb)
            for (std::int64_t j = 0; j < cb; ++j)
              gb[r * cb + j] += g[r * (ca + cb) + ca + j];
        }
      },
      "concat");
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  VNAS_CHECK(shape_numel(shape) == x.numel(), ShapeError,
             "reshape " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                 " changes element count");
  Tensor out = Tensor::from_data(std::move(shape), std::vector<double>(
                                     x.data(), x.data() + x.numel()));
  auto xi = x.impl();
  auto oi = out.impl();
  const std::int64_t n = x.numel();
  finish(
      out, {x},
      [xi, oi, n]() {
        double* gx = xi->ensure_grad();
        const double* g = oi->grad.data();
        for (std::int64_t i = 0; i < n; ++i) gx[i] += g[i];
      },
      "reshape");
  return out;
}

Tensor broadcast_to(const Tensor& x, Shape shape) {
  BinMap m = bin_map(x.shape(), shape);
  VNAS_CHECK(m.out == shape, ShapeError,
             "broadcast_to: " + shape_str(x.shape()) + " does not expand to " +
                 shape_str(shape));
  Tensor out = Tensor::zeros(shape);
  const double* xv = x.data();
  double* ov = out.data();
  const std::int64_t n = out.numel();
  if (m.same) {
    std::memcpy(ov, xv, sizeof(double) * static_cast<std::size_t>(n));
  } else {
    for (std::int64_t i = 0; i < n; ++i) ov[i] = xv[map_index(i, m.od, m.sa)];
  }
  auto xi = x.impl();
  auto oi = out.impl();
  finish(
      out, {x},
      [xi, oi, m, n]() {
        double* gx = xi->ensure_grad();
        const double* g = oi->grad.data();
        if (m.same) {
          for (std::int64_t i = 0; i < n; ++i) gx[i] += g[i];
        } else {
          for (std::int64_t i = 0; i < n; ++i)
            gx[map_index(i, m.od, m.sa)] += g[i];
        }
      },
      "broadcast_to");
  return out;
}

Tensor select(const Tensor& x, std::int64_t idx) {
  VNAS_CHECK(x.ndim() == 1, ShapeError,
             "select expects a rank-1 tensor, got " + shape_str(x.shape()));
  VNAS_CHECK(idx >= 0 && idx < x.dim(0), ShapeError,
             "select index " + std::to_string(idx) + " out of range " +
                 shape_str(x.shape()));
  Tensor out = Tensor::scalar(x.data()[idx]);
  auto xi = x.impl();
  auto oi = out.impl();
  finish(
      out, {x},
      [xi, oi, idx]() { xi->ensure_grad()[idx] += oi->grad[0]; }, "select");
  return out;
}

Tensor channel_mix(const Tensor& x, const Tensor& f) {
  VNAS_CHECK(x.ndim() == 4, ShapeError,
             "channel_mix expects NHWC input, got " + shape_str(x.shape()));
  VNAS_CHECK(f.ndim() == 3, ShapeError,
             "channel_mix expects (N,Ci,Co) filters, got " +
                 shape_str(f.shape()));
  const std::int64_t n = x.dim(0), p = x.dim(1) * x.dim(2), ci = x.dim(3);
  VNAS_CHECK(f.dim(0) == n && f.dim(1) == ci, ShapeError,
             "channel_mix: filters " + shape_str(f.shape()) +
                 " incompatible with input " + shape_str(x.shape()));
  const std::int64_t co = f.dim(2);
  Tensor out = Tensor::zeros({n, x.dim(1), x.dim(2), co});
  kern::pex_mix(x.data(), f.data(), out.data(), static_cast<std::size_t>(n),
                static_cast<std::size_t>(p), static_cast<std::size_t>(ci),
                static_cast<std::size_t>(co));
  auto xi = x.impl();
  auto fi = f.impl();
  auto oi = out.impl();
  finish(
      out, {x, f},
      [xi, fi, oi, n, p, ci, co]() {
        const double* g = oi->grad.data();
        if (xi->requires_grad) {
          std::vector<double> tmp(static_cast<std::size_t>(n * p * ci));
          kern::pex_mix_grad_x(g, fi->data.data(), tmp.data(),
                               static_cast<std::size_t>(n),
                               static_cast<std::size_t>(p),
                               static_cast<std::size_t>(ci),
                               static_cast<std::size_t>(co));
          double* gx = xi->ensure_grad();
          for (std::size_t i = 0; i < tmp.size(); ++i) gx[i] += tmp[i];
        }
        if (fi->requires_grad) {
          std::vector<double> tmp(static_cast<std::size_t>(n * ci * co));
          kern::pex_mix_grad_f(xi->data.data(), g, tmp.data(),
                               static_cast<std::size_t>(n),
                               static_cast<std::size_t>(p),
                               static_cast<std::size_t>(ci),
                               static_cast<std::size_t>(co));
          double* gf = fi->ensure_grad();
          for (std::size_t i = 0; i < tmp.size(); ++i) gf[i] += tmp[i];
        }
      },
      "channel_mix");
  return out;
}

namespace {
Tensor reduce_all(const Tensor& x, bool mean, const char* name) {
  const std::int64_t n = x.numel();
  VNAS_CHECK(n > 0, ShapeError, std::string(name) + " of empty tensor");
  const double* xv = x.data();
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) acc += xv[i];
  const double scale = mean ? 1.0 / static_cast<double>(n) : 1.0;
  Tensor out = Tensor::scalar(acc * scale);
  auto xi = x.impl();
  auto oi = out.impl();
  finish(
      out, {x},
      [xi, oi, n, scale]() {
        double* gx = xi->ensure_grad();
        const double gv = oi->grad[0] * scale;
        for (std::int64_t i = 0; i < n; ++i) gx[i] += gv;
      },
      name);
  return out;
}
}  // namespace

Tensor mean_all(const Tensor& x) { return reduce_all(x, true, "mean_all"); }
Tensor sum_all(const Tensor& x) { return reduce_all(x, false, "sum_all"); }

}  // namespace vnas::ops
