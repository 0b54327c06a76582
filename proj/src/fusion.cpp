#include "vnas/fusion.hpp"

#include <cmath>

namespace vnas {

const char* merge_op_name(MergeOpKind k) {
  switch (k) {
    case MergeOpKind::kNoOp: return "noop";
    case MergeOpKind::kAdd: return "add";
    case MergeOpKind::kConcat: return "concat";
    case MergeOpKind::kHadamard: return "hadamard";
    case MergeOpKind::kActionConv: return "actionconv";
  }
  throw ValueError("unknown merge op kind " +
                   std::to_string(static_cast<int>(k)));
}

MergeOpKind merge_op_from_name(const std::string& name) {
  for (int i = 0; i < kNumMergeOps; ++i) {
    const auto k = static_cast<MergeOpKind>(i);
    if (name == merge_op_name(k)) return k;
  }
  throw NameError("unknown merge op '" + name + "'");
}

namespace {
Tensor trunc_normal(Shape shape, double stddev, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t.data()[i] = rng.truncated_normal(0.0, stddev, -2.0 * stddev,
                                       2.0 * stddev);
  return t;
}
}  // namespace

FusionSite make_fusion_site(int index, int height, int width, int channels,
                            int action_dim, Rng& rng) {
  VNAS_CHECK(height > 0 && width > 0 && channels > 0 && action_dim > 0,
             ShapeError, "fusion site dims must be positive");
  FusionSite s;
  s.index = index;
  s.height = height;
  s.width = width;
  s.channels = channels;
  s.action_dim = action_dim;
  const auto c = static_cast<std::int64_t>(channels);
  const auto a = static_cast<std::int64_t>(action_dim);
  const auto hw = static_cast<std::int64_t>(height) * width;
  const double sa = 1.0 / std::sqrt(static_cast<double>(action_dim));

  s.mix_logits = Tensor::zeros({kNumMergeOps}, true);

  s.expand_w = trunc_normal({c, a}, sa, rng);
  s.expand_b = Tensor::zeros({c}, true);

  // Multiplicative candidates start as near-identities: the spatial map and
  // the per-example channel mix are biased to 1 / I so they pass the signal
  // through instead of zeroing it at initialization.
  s.spatial_w = trunc_normal({hw, a}, 0.1 * sa, rng);
  s.spatial_b = Tensor::full({hw}, 1.0, true);

  s.fgen_w = trunc_normal({c * c, a}, 0.1 * sa, rng);
  s.fgen_b = Tensor::zeros({c * c}, true);
  for (std::int64_t i = 0; i < c; ++i) s.fgen_b.data()[i * c + i] = 1.0;

  s.cproj_w = trunc_normal({c, 1, 1, c + a},
                           0.5 / std::sqrt(static_cast<double>(c + a)), rng);
  for (std::int64_t i = 0; i < c; ++i)
    s.cproj_w.data()[i * (c + a) + i] += 1.0;
  s.cproj_b = Tensor::zeros({c}, true);
  return s;
}

FusionSite make_single_op_site(int index, int height, int width, int channels,
                               int action_dim, MergeOpKind op, Rng& rng) {
  FusionSite full = make_fusion_site(index, height, width, channels,
                                     action_dim, rng);
  FusionSite s;
  s.index = index;
  s.height = height;
  s.width = width;
  s.channels = channels;
  s.action_dim = action_dim;
  switch (op) {
    case MergeOpKind::kNoOp:
      break;
    case MergeOpKind::kAdd:
      s.expand_w = full.expand_w;
      s.expand_b = full.expand_b;
      break;
    case MergeOpKind::kConcat:
      s.cproj_w = full.cproj_w;
      s.cproj_b = full.cproj_b;
      break;
    case MergeOpKind::kHadamard:
      s.spatial_w = full.spatial_w;
      s.spatial_b = full.spatial_b;
      break;
    case MergeOpKind::kActionConv:
      s.fgen_w = full.fgen_w;
      s.fgen_b = full.fgen_b;
      break;
  }
  return s;
}

Tensor merge_apply(const FusionSite& s, MergeOpKind op, const Tensor& x,
                   const Tensor& action) {
  VNAS_CHECK(x.ndim() == 4 && x.dim(1) == s.height && x.dim(2) == s.width &&
                 x.dim(3) == s.channels,
             ShapeError,
             "merge input " + shape_str(x.shape()) + " does not match site " +
                 std::to_string(s.index));
  VNAS_CHECK(action.ndim() == 2 && action.dim(0) == x.dim(0) &&
                 action.dim(1) == s.action_dim,
             ShapeError,
             "action " + shape_str(action.shape()) + " does not match site " +
                 std::to_string(s.index));
  const std::int64_t n = x.dim(0);
  const std::int64_t c = s.channels;
  ++s.candidates_evaluated;
  switch (op) {
    case MergeOpKind::kNoOp:
      return x;
    case MergeOpKind::kAdd: {
      VNAS_CHECK(s.expand_w.defined(), ValueError,
                 "site has no parameters for op 'add'");
      auto t = ops::linear(action, s.expand_w, s.expand_b);  // (N,C)
      return ops::add(x, ops::reshape(t, {n, 1, 1, c}));
    }
    case MergeOpKind::kConcat: {
      VNAS_CHECK(s.cproj_w.defined(), ValueError,
                 "site has no parameters for op 'concat'");
      auto amap = ops::broadcast_to(
          ops::reshape(action, {n, 1, 1, s.action_dim}),
          {n, s.height, s.width, s.action_dim});
      auto cat = ops::concat_lastdim(x, amap);
      return ops::conv2d(cat, s.cproj_w, s.cproj_b, 1, 1);
    }
    case MergeOpKind::kHadamard: {
      VNAS_CHECK(s.spatial_w.defined(), ValueError,
                 "site has no parameters for op 'hadamard'");
      auto m = ops::linear(action, s.spatial_w, s.spatial_b);  // (N,HW)
      return ops::mul(x, ops::reshape(m, {n, s.height, s.width, 1}));
    }
    case MergeOpKind::kActionConv: {
      VNAS_CHECK(s.fgen_w.defined(), ValueError,
                 "site has no parameters for op 'actionconv'");
      auto f = ops::linear(action, s.fgen_w, s.fgen_b);  // (N,C*C)
      return ops::channel_mix(x, ops::reshape(f, {n, c, c}));
    }
  }
  throw ValueError("unknown merge op");
}

Tensor mix_weights(const FusionSite& s) {
  VNAS_CHECK(s.mix_logits.defined(), ValueError,
             "site " + std::to_string(s.index) + " has no mix logits");
  return ops::softmax_lastdim(s.mix_logits);
}

Tensor fuse(const FusionSite& s, const Tensor& x, const Tensor& action) {
  auto w = mix_weights(s);
  Tensor acc;
  for (int k = 0; k < kNumMergeOps; ++k) {
    auto term = ops::mul(merge_apply(s, static_cast<MergeOpKind>(k), x,
                                     action),
                         ops::select(w, k));
    acc = k == 0 ? term : ops::add(acc, term);
  }
  return acc;
}

MergeOpKind argmax_op(const FusionSite& s) {
  VNAS_CHECK(s.mix_logits.defined(), ValueError,
             "site " + std::to_string(s.index) + " has no mix logits");
  int best = 0;
  for (int k = 1; k < kNumMergeOps; ++k)
    if (s.mix_logits.data()[k] > s.mix_logits.data()[best]) best = k;
  return static_cast<MergeOpKind>(best);
}

double mix_entropy(const FusionSite& s) {
  const double* l = s.mix_logits.data();
  double mx = l[0];
  for (int k = 1; k < kNumMergeOps; ++k) mx = std::max(mx, l[k]);
  double z = 0.0;
  for (int k = 0; k < kNumMergeOps; ++k) z += std::exp(l[k] - mx);
  double h = 0.0;
  for (int k = 0; k < kNumMergeOps; ++k) {
    const double p = std::exp(l[k] - mx) / z;
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

long merge_op_flops(MergeOpKind op, int height, int width, int channels,
                    int action_dim) {
  const long hw = static_cast<long>(height) * width;
  const long c = channels;
  const long a = action_dim;
  switch (op) {
    case MergeOpKind::kNoOp:
      return 0;
    case MergeOpKind::kAdd:
      return 2 * a * c + c + hw * c;
    case MergeOpKind::kConcat:
      return hw * (2 * (c + a) * c + c);
    case MergeOpKind::kHadamard:
      return 2 * a * hw + hw + hw * c;
    case MergeOpKind::kActionConv:
      return 2 * a * c * c + c * c + 2 * hw * c * c;
  }
  throw ValueError("unknown merge op");
}

}  // namespace vnas
