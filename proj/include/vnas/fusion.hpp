#pragma once

#include <string>

#include "vnas/ops.hpp"
#include "vnas/rng.hpp"
#include "vnas/tensor.hpp"

namespace vnas {

// Candidate merge operations at a fusion site. The numbering is part of the
// serialization format; never reorder.
enum class MergeOpKind : int {
  kNoOp = 0,
  kAdd = 1,
  kConcat = 2,
  kHadamard = 3,
  kActionConv = 4,
};
inline constexpr int kNumMergeOps = 5;

const char* merge_op_name(MergeOpKind k);
MergeOpKind merge_op_from_name(const std::string& name);

// One action-merge site operating on a (N,H,W,C) feature map with an
// action vector (N,A). In search mode all five candidates are evaluated and
// blended under softmax(mix_logits); a hardened/pruned site evaluates
// exactly one candidate.
//
// Candidates (all initialized near identity so every branch is alive at the
// start of the search):
//   NoOp        x
//   Add         x + tile(W_e a + b_e)           per-channel shift
//   Concat      1x1conv([x ; tile(a)])          channels+action projection
//   Hadamard    x * tile_spatial(W_s a + b_s)   per-pixel scale
//   ActionConv  x mixed by per-example C x C filters W_f a + b_f
struct FusionSite {
  int index = 0;  // 1-based site number
  int height = 0, width = 0, channels = 0, action_dim = 0;
  Tensor mix_logits;              // (kNumMergeOps,)
  Tensor expand_w, expand_b;      // (C,A), (C)
  Tensor spatial_w, spatial_b;    // (H*W,A), (H*W)
  Tensor fgen_w, fgen_b;          // (C*C,A), (C*C)
  Tensor cproj_w, cproj_b;        // (C,1,1,C+A), (C)
  // Instrumentation: bumped once per candidate evaluation, so tests can
  // assert a hardened site does exactly one op's work.
  mutable long candidates_evaluated = 0;
};

// Fresh site with trainable parameters drawn from rng (logits start at zero,
// i.e. a uniform mixture).
FusionSite make_fusion_site(int index, int height, int width, int channels,
                            int action_dim, Rng& rng);

// A site carrying parameters for just one candidate (the others stay
// undefined); used by pruned/baseline networks.
FusionSite make_single_op_site(int index, int height, int width, int channels,
                               int action_dim, MergeOpKind op, Rng& rng);

// Evaluates one candidate. Requires that candidate's parameters to be
// defined on the site.
Tensor merge_apply(const FusionSite& site, MergeOpKind op, const Tensor& x,
                   const Tensor& action);

// softmax(mix_logits), recorded on the tape when active.
Tensor mix_weights(const FusionSite& site);

// Softmax-blended evaluation of all candidates (search mode).
Tensor fuse(const FusionSite& site, const Tensor& x, const Tensor& action);

// Argmax candidate; ties break toward the lowest op index.
MergeOpKind argmax_op(const FusionSite& site);

// Shannon entropy (nats) of softmax(mix_logits); metric only, no grad.
double mix_entropy(const FusionSite& site);

// FLOPs for one candidate evaluation at batch 1 (activation functions are
// not counted; see qnet.hpp for the full accounting convention).
long merge_op_flops(MergeOpKind op, int height, int width, int channels,
                    int action_dim);

}  // namespace vnas
