#pragma once

#include <string>
#include <vector>

#include "vnas/ops.hpp"
#include "vnas/rng.hpp"
#include "vnas/tensor.hpp"

namespace vnas {

// A peer that can feed a site's gate: an earlier representation, a dilated
// branch, or the action vector. `id` is the stable name used in
// serialization ("action", "x_1".."x_N", "dil_<rate>"); `dim` is the length
// of the peer's pooled summary.
struct PeerRef {
  std::string id;
  int dim = 0;
};

// Peer-attention gate for one site. Every peer contributes a projected
// summary W_v GAP(v) (bias-free, so a pruned edge contributes exactly zero),
// scaled by its sigmoid-constrained edge weight. The gate is a sigmoid over
// the weighted sum, applied per channel to the site output.
struct AttentionSite {
  int index = 0;
  int channels = 0;
  std::vector<PeerRef> peers;
  Tensor edge_logits;          // (num_peers,)
  std::vector<Tensor> proj_w;  // per peer: (C, peer_dim)
};

AttentionSite make_attention_site(int index, int channels,
                                  std::vector<PeerRef> peers, Rng& rng);

// Gate over all peers (search mode). `summaries[v]` is (N, peers[v].dim).
Tensor attend(const AttentionSite& site, const Tensor& x,
              const std::vector<Tensor>& summaries);

// Gate over a subset of peers (hardened/pruned mode). An empty subset means
// the gate stage is skipped entirely: the output IS x, with no sigma(0)
// constant leaking in.
Tensor attend_subset(const AttentionSite& site, const Tensor& x,
                     const std::vector<Tensor>& summaries,
                     const std::vector<int>& peer_indices);

// sigmoid(edge_logits), computed without recording.
std::vector<double> edge_weights(const AttentionSite& site);

// Indices of edges with weight strictly greater than 0.5.
std::vector<int> retained_peer_indices(const AttentionSite& site);

}  // namespace vnas
