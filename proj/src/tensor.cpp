#include "vnas/tensor.hpp"

#include <cmath>

namespace vnas {

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) {
    VNAS_CHECK(d >= 0, ShapeError, "negative dimension in " + shape_str(s));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

double* TensorImpl::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad.data();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  const auto n = shape_numel(shape);
  impl->shape = std::move(shape);
  impl->data.assign(static_cast<std::size_t>(n), 0.0);
  impl->requires_grad = requires_grad;
  return wrap(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (auto& v : t.impl()->data) v = value;
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  const auto n = shape_numel(shape);
  VNAS_CHECK(static_cast<std::size_t>(n) == data.size(), ShapeError,
             "from_data: " + std::to_string(data.size()) +
                 " values for shape " + shape_str(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return wrap(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::wrap(std::shared_ptr<TensorImpl> impl) {
  Tensor t;
  t.impl_ = std::move(impl);
  return t;
}

const Shape& Tensor::shape() const {
  VNAS_CHECK(impl_ != nullptr, ValueError, "undefined tensor");
  return impl_->shape;
}

int Tensor::ndim() const { return static_cast<int>(shape().size()); }

std::int64_t Tensor::dim(int i) const {
  const auto& s = shape();
  VNAS_CHECK(i >= 0 && i < static_cast<int>(s.size()), ShapeError,
             "dim index " + std::to_string(i) + " out of range for " +
                 shape_str(s));
  return s[static_cast<std::size_t>(i)];
}

std::int64_t Tensor::numel() const {
  VNAS_CHECK(impl_ != nullptr, ValueError, "undefined tensor");
  return static_cast<std::int64_t>(impl_->data.size());
}

double* Tensor::data() {
  VNAS_CHECK(impl_ != nullptr, ValueError, "undefined tensor");
  return impl_->data.data();
}

const double* Tensor::data() const {
  VNAS_CHECK(impl_ != nullptr, ValueError, "undefined tensor");
  return impl_->data.data();
}

double* Tensor::grad() {
  VNAS_CHECK(impl_ != nullptr, ValueError, "undefined tensor");
  return impl_->ensure_grad();
}

const double* Tensor::grad() const {
  VNAS_CHECK(impl_ != nullptr && !impl_->grad.empty(), ValueError,
             "tensor has no gradient");
  return impl_->grad.data();
}

bool Tensor::has_grad() const {
  return impl_ != nullptr && !impl_->grad.empty();
}

void Tensor::zero_grad() {
  if (impl_ && !impl_->grad.empty())
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

bool Tensor::requires_grad() const {
  return impl_ != nullptr && impl_->requires_grad;
}

Tensor& Tensor::set_requires_grad(bool v) {
  VNAS_CHECK(impl_ != nullptr, ValueError, "undefined tensor");
  impl_->requires_grad = v;
  return *this;
}

double Tensor::item() const {
  VNAS_CHECK(numel() == 1, ShapeError,
             "item() on non-scalar tensor " + shape_str(shape()));
  return data()[0];
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::shared_ptr<TensorImpl> out, std::function<void()> fn) {
  out->tape = this;
  nodes_.push_back(Node{std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  VNAS_CHECK(!used_, ValueError,
             "backward already run on this tape; reset() first");
  VNAS_CHECK(loss.defined(), ValueError, "backward on undefined tensor");
  VNAS_CHECK(loss.numel() == 1, ShapeError,
             "backward requires a scalar loss, got " +
                 shape_str(loss.shape()));
  VNAS_CHECK(loss.impl()->tape == this, ValueError,
             "loss is not recorded on this tape (detached or from another "
             "tape)");
  used_ = true;
  loss.impl()->ensure_grad()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->fn();
}

void Tape::reset() {
  nodes_.clear();
  used_ = false;
}

TapeScope::TapeScope() : prev_(g_active_tape) { g_active_tape = &tape_; }

TapeScope::~TapeScope() { g_active_tape = prev_; }

NoGradScope::NoGradScope() : prev_(g_active_tape) { g_active_tape = nullptr; }

NoGradScope::~NoGradScope() { g_active_tape = prev_; }

bool all_finite(const double* p, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i)
    if (!std::isfinite(p[i])) return false;
  return true;
}

void debug_check_finite([[maybe_unused]] const Tensor& t,
                        [[maybe_unused]] const char* op) {
#ifndef NDEBUG
  if (!all_finite(t.data(), t.numel()))
    throw ValueError(std::string("non-finite values produced by op '") + op +
                     "'");
#endif
}

}  // namespace vnas
