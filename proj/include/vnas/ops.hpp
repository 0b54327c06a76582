#pragma once

#include "vnas/tensor.hpp"

namespace vnas::ops {

// Numpy-style right-aligned broadcast shape; throws ShapeError when the
// shapes are incompatible (dims must match or be 1).
Shape broadcast_shape(const Shape& a, const Shape& b);

// Elementwise with broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// Elementwise unary.
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Numerically stabilized softmax over the last axis (max subtraction).
Tensor softmax_lastdim(const Tensor& x);

// y = x . w^T (+ b). x: (B, In), w: (Out, In), b: (Out) or undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b = {});

// SAME-padded NHWC convolution. x: (N,H,W,Ci), w: (Co,k,k,Ci), b: (Co) or
// undefined. Output (N, ceil(H/s), ceil(W/s), Co).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int dilation = 1);

// Global average pool: (N,H,W,C) -> (N,C).
Tensor gap(const Tensor& x);

// Concatenate along the last axis; leading dims must match exactly.
Tensor concat_lastdim(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& x, Shape shape);
Tensor broadcast_to(const Tensor& x, Shape shape);

// Scalar view of one element of a rank-1 tensor (shape {1} result).
Tensor select(const Tensor& x, std::int64_t idx);

// Per-example channel mixing: x (N,H,W,Ci) with filters f (N,Ci,Co) ->
// (N,H,W,Co). The batched 1x1 convolution whose filters are themselves
// network outputs.
Tensor channel_mix(const Tensor& x, const Tensor& f);

Tensor mean_all(const Tensor& x);
Tensor sum_all(const Tensor& x);

}  // namespace vnas::ops
