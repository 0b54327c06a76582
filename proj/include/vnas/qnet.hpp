#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vnas/attention.hpp"
#include "vnas/fusion.hpp"
#include "vnas/tensor.hpp"

namespace vnas {

// Static architecture hyperparameters. conv_* arrays describe the
// num_sites+1 stem/tower convolutions; site i (1-based) sits after
// convolution i+1. The dilated branches read the first convolution's output.
struct NetworkConfig {
  int image_size = 32;
  int image_channels = 3;
  int action_dim = 9;
  int num_sites = 5;
  std::vector<int> conv_channels = {32, 8, 12, 12, 12, 12};
  std::vector<int> conv_ksize = {5, 3, 3, 3, 3, 3};
  std::vector<int> conv_stride = {1, 4, 2, 1, 1, 1};
  std::vector<int> dilated_rates = {2, 4};
  int dilated_channels = 2;
  int dilated_ksize = 3;
  int dilated_stride = 8;
  int head_hidden = 32;

  void validate() const;
  // Spatial size of the feature map entering site i (1-based).
  int site_spatial(int site_index) const;
  int site_channels(int site_index) const;
  int middle_site() const { return (num_sites + 1) / 2; }
};

// Peer list for a site, in the fixed serialization order: the action vector,
// every earlier (and the current) pre-merge representation, then each
// dilated branch by rate.
std::vector<PeerRef> peer_list_for_site(const NetworkConfig& cfg,
                                        int site_index);

// An edge kept after pruning: peer id plus its trained sigmoid weight.
struct RetainedEdge {
  std::string peer;
  double weight = 0.0;
};

// The searched architecture: one merge op per site plus the retained
// attention edges, together with the config that shaped the supernet and
// search metadata (seed, iteration count, final logits).
struct ArchitectureSpec {
  int version = 1;
  NetworkConfig config;
  std::vector<MergeOpKind> site_ops;
  std::vector<std::vector<RetainedEdge>> site_edges;
  std::uint64_t seed = 0;
  std::int64_t iterations = 0;
  std::vector<std::vector<double>> final_mix_logits;
  std::vector<std::vector<double>> final_edge_logits;

  void validate() const;
};

struct ConvLayer {
  Tensor w, b;
  int stride = 1, dilation = 1;
};

enum class NetMode { kSearch, kBaseline, kPruned };

// Action-independent prefix of a forward pass: everything up to the site-1
// input. Caching this lets CEM re-evaluate only the cheap action-dependent
// tail per candidate action.
struct TrunkOut {
  Tensor x;                      // (N, h1, w1, C1): site-1 input
  std::vector<Tensor> dil_gaps;  // per materialized dilated branch: (N, dc)
};

// Vision-action Q-network. One class covers the three structural modes:
//   Search   - full supernet: softmax-blended merges, all attention edges
//   Baseline - fixed Add merge at the middle site, no attention, no dilation
//   Pruned   - exactly one merge per site, only retained attention edges,
//              dilated branches materialized only when an edge uses them
// A search net can additionally run "hardened": argmax merge + >0.5 edges
// only, which must match the pruned network built from its extracted spec.
class QNetwork {
 public:
  static QNetwork make_search(const NetworkConfig& cfg, std::uint64_t seed);
  static QNetwork make_baseline(const NetworkConfig& cfg, std::uint64_t seed);
  // Pruned topology from `spec`, weights copied from `trained` (which must
  // be the search net the spec was extracted from).
  static QNetwork make_pruned(const ArchitectureSpec& spec,
                              const QNetwork& trained);
  // Pruned topology with freshly initialized weights.
  static QNetwork make_pruned_fresh(const ArchitectureSpec& spec,
                                    std::uint64_t seed);

  NetMode mode() const { return mode_; }
  const NetworkConfig& config() const { return cfg_; }

  // Full forward: images (N,S,S,C) + actions (N,A) -> Q (N,1).
  Tensor forward(const Tensor& images, const Tensor& actions) const;
  TrunkOut trunk(const Tensor& images) const;
  Tensor tail(const TrunkOut& t, const Tensor& actions) const;

  void set_hardened(bool on);
  bool hardened() const { return hardened_; }

  // Stable-order parameter traversal (checkpoint order).
  void for_each_param(
      const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each_param(
      const std::function<void(const std::string&, const Tensor&)>& fn) const;

  QNetwork clone() const;
  // Copies values for the exact same parameter name set; a mismatch is an
  // error (used for target-network refresh).
  void copy_params_from(const QNetwork& other);
  void zero_grads();

  // FLOPs for one (state, action) evaluation at batch 1, by the documented
  // convention: 2*K*Cout per conv/FC MAC column plus bias adds, merge and
  // gate arithmetic, pooled-summary reductions; activation functions are not
  // counted. `attention` is the slice spent on gate work (peer GAPs,
  // projections, edge weighting, gate application).
  struct Flops {
    long total = 0;
    long attention = 0;
  };
  Flops count_flops() const;

  // Search-net accessors used by the trainer and extraction.
  const std::vector<FusionSite>& sites() const { return sites_; }
  std::vector<FusionSite>& sites() { return sites_; }
  const std::vector<AttentionSite>& attention_sites() const { return attn_; }
  std::vector<AttentionSite>& attention_sites() { return attn_; }
  const std::vector<MergeOpKind>& site_ops() const { return site_ops_; }
  const std::vector<std::vector<int>>& active_edges() const {
    return active_edges_;
  }

 private:
  NetMode mode_ = NetMode::kSearch;
  NetworkConfig cfg_;
  std::vector<ConvLayer> convs_;
  std::vector<ConvLayer> dilated_;        // aligned with dilated_present_
  std::vector<bool> dilated_present_;     // per cfg.dilated_rates entry
  std::vector<FusionSite> sites_;
  std::vector<AttentionSite> attn_;       // empty in baseline mode
  std::vector<MergeOpKind> site_ops_;     // pruned/baseline chosen ops
  std::vector<std::vector<int>> active_edges_;  // pruned: retained indices
  Tensor head_fc1_w_, head_fc1_b_, head_fc2_w_, head_fc2_b_;
  bool hardened_ = false;

  QNetwork() = default;
};

// Argmax ops + strictly-retained edges + final logits from a search net.
// Calling this on a baseline/pruned network is an error.
ArchitectureSpec extract_architecture(const QNetwork& net, std::uint64_t seed,
                                      std::int64_t iterations);

}  // namespace vnas
