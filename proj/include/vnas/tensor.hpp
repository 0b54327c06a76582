#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vnas/common.hpp"

namespace vnas {

class Tape;

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated lazily, same size as data
  bool requires_grad = false;
  Tape* tape = nullptr;  // tape this value was recorded on, if any

  double* ensure_grad();  // allocate zeroed grad storage on first use
};

// Value-semantics handle onto shared storage. Copying a Tensor aliases the
// underlying buffer (like the usual array-framework behavior).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int ndim() const;
  std::int64_t dim(int i) const;
  std::int64_t numel() const;

  double* data();
  const double* data() const;
  // Grad storage (allocated on demand); empty pointer when never touched.
  double* grad();
  const double* grad() const;
  bool has_grad() const;
  void zero_grad();

  bool requires_grad() const;
  Tensor& set_requires_grad(bool v);

  double item() const;  // scalar tensors only

  std::shared_ptr<TensorImpl>& impl() { return impl_; }
  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

  static Tensor wrap(std::shared_ptr<TensorImpl> impl);

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Append-only gradient tape. Ops record a backward closure per produced
// value; closures run in strict reverse order, so every node only depends on
// nodes recorded before it.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Currently active tape for this thread (nullptr = recording disabled).
  static Tape* active();

  void record(std::shared_ptr<TensorImpl> out, std::function<void()> fn);

  // Runs reverse accumulation from a scalar loss recorded on this tape.
  // A second call without reset() is an error, as is a non-scalar loss or a
  // value that was never recorded here.
  void backward(const Tensor& loss);
  void reset();
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::function<void()> fn;
  };
  std::vector<Node> nodes_;
  bool used_ = false;

  friend class TapeScope;
};

// RAII activation of a fresh tape on the current thread.
class TapeScope {
 public:
  TapeScope();
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
  Tape& tape() { return tape_; }

 private:
  Tape tape_;
  Tape* prev_;
};

// RAII suppression of recording (for target nets, evaluation, CEM).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* prev_;
};

bool all_finite(const double* p, std::int64_t n);

// In debug builds every op asserts its output is finite; release builds skip
// the scan (the trainer still checks the loss every step).
void debug_check_finite(const Tensor& t, const char* op);

}  // namespace vnas
