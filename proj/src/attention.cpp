#include "vnas/attention.hpp"

#include <cmath>

namespace vnas {

AttentionSite make_attention_site(int index, int channels,
                                  std::vector<PeerRef> peers, Rng& rng) {
  VNAS_CHECK(channels > 0, ShapeError, "attention site needs channels > 0");
  AttentionSite s;
  s.index = index;
  s.channels = channels;
  s.peers = std::move(peers);
  s.edge_logits =
      Tensor::zeros({static_cast<std::int64_t>(s.peers.size())}, true);
  s.proj_w.reserve(s.peers.size());
  for (const auto& p : s.peers) {
    VNAS_CHECK(p.dim > 0, ShapeError,
               "peer '" + p.id + "' has non-positive dim");
    const double stddev = 1.0 / std::sqrt(static_cast<double>(p.dim));
    Tensor w = Tensor::zeros({channels, p.dim}, true);
    for (std::int64_t i = 0; i < w.numel(); ++i)
      w.data()[i] = rng.truncated_normal(0.0, stddev, -2.0 * stddev,
                                         2.0 * stddev);
    s.proj_w.push_back(std::move(w));
  }
  return s;
}

Tensor attend_subset(const AttentionSite& s, const Tensor& x,
                     const std::vector<Tensor>& summaries,
                     const std::vector<int>& peer_indices) {
  VNAS_CHECK(x.ndim() == 4 && x.dim(3) == s.channels, ShapeError,
             "attention input " + shape_str(x.shape()) +
                 " does not match site " + std::to_string(s.index));
  VNAS_CHECK(summaries.size() == s.peers.size(), ShapeError,
             "site " + std::to_string(s.index) + " expects " +
                 std::to_string(s.peers.size()) + " peer summaries, got " +
                 std::to_string(summaries.size()));
  if (peer_indices.empty()) return x;
  const std::int64_t n = x.dim(0);
  auto w = ops::sigmoid(s.edge_logits);
  Tensor gate_in;
  for (std::size_t j = 0; j < peer_indices.size(); ++j) {
    const int v = peer_indices[j];
    VNAS_CHECK(v >= 0 && v < static_cast<int>(s.peers.size()), ShapeError,
               "peer index out of range at site " + std::to_string(s.index));
    const auto& sm = summaries[static_cast<std::size_t>(v)];
    VNAS_CHECK(sm.defined() && sm.ndim() == 2 && sm.dim(0) == n &&
                   sm.dim(1) == s.peers[static_cast<std::size_t>(v)].dim,
               ShapeError,
               "summary for peer '" +
                   s.peers[static_cast<std::size_t>(v)].id +
                   "' has wrong shape");
    auto proj = ops::linear(sm, s.proj_w[static_cast<std::size_t>(v)]);
    auto term = ops::mul(proj, ops::select(w, v));
    gate_in = j == 0 ? term : ops::add(gate_in, term);
  }
  auto gate = ops::sigmoid(gate_in);  // (N,C)
  return ops::mul(x, ops::reshape(gate, {n, 1, 1, s.channels}));
}

Tensor attend(const AttentionSite& s, const Tensor& x,
              const std::vector<Tensor>& summaries) {
  std::vector<int> all(s.peers.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return attend_subset(s, x, summaries, all);
}

std::vector<double> edge_weights(const AttentionSite& s) {
  std::vector<double> w(s.peers.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double v = s.edge_logits.data()[i];
    w[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                    : std::exp(v) / (1.0 + std::exp(v));
  }
  return w;
}

std::vector<int> retained_peer_indices(const AttentionSite& s) {
  std::vector<int> out;
  const auto w = edge_weights(s);
  for (std::size_t i = 0; i < w.size(); ++i)
    if (w[i] > 0.5) out.push_back(static_cast<int>(i));
  return out;
}

}  // namespace vnas
