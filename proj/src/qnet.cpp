#include "vnas/qnet.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "vnas/kernels.hpp"

namespace vnas {

void NetworkConfig::validate() const {
  VNAS_CHECK(num_sites >= 1, ConfigError, "num_fusion_sites must be >= 1");
  const auto nconv = static_cast<std::size_t>(num_sites) + 1;
  VNAS_CHECK(conv_channels.size() == nconv && conv_ksize.size() == nconv &&
                 conv_stride.size() == nconv,
             ConfigError,
             "conv_channels/ksize/stride must each have num_fusion_sites+1 "
             "entries");
  VNAS_CHECK(image_size >= 4 && image_channels >= 1, ConfigError,
             "image dims too small");
  VNAS_CHECK(action_dim >= 1, ConfigError, "action_dim must be positive");
  for (std::size_t i = 0; i < nconv; ++i) {
    VNAS_CHECK(conv_channels[i] >= 1, ConfigError, "conv channels positive");
    VNAS_CHECK(conv_ksize[i] >= 1 && conv_ksize[i] % 2 == 1, ConfigError,
               "conv kernel sizes must be odd");
    VNAS_CHECK(conv_stride[i] >= 1, ConfigError, "conv strides positive");
  }
  int prev = 1;
  for (int r : dilated_rates) {
    VNAS_CHECK(r >= 2, ConfigError, "dilation rates must be >= 2");
    VNAS_CHECK(r > prev, ConfigError, "dilation rates strictly increasing");
    prev = r;
  }
  VNAS_CHECK(dilated_channels >= 1, ConfigError, "dilated channels positive");
  VNAS_CHECK(dilated_ksize >= 1 && dilated_ksize % 2 == 1, ConfigError,
             "dilated kernel size must be odd");
  VNAS_CHECK(dilated_stride >= 1, ConfigError, "dilated stride positive");
  VNAS_CHECK(head_hidden >= 1, ConfigError, "head hidden width positive");
}

namespace {
int ceil_div(int a, int b) { return (a + b - 1) / b; }
}  // namespace

int NetworkConfig::site_spatial(int site_index) const {
  VNAS_CHECK(site_index >= 1 && site_index <= num_sites, ShapeError,
             "site index out of range");
  int s = image_size;
  for (int ci = 0; ci <= site_index; ++ci)
    s = ceil_div(s, conv_stride[static_cast<std::size_t>(ci)]);
  return s;
}

int NetworkConfig::site_channels(int site_index) const {
  VNAS_CHECK(site_index >= 1 && site_index <= num_sites, ShapeError,
             "site index out of range");
  return conv_channels[static_cast<std::size_t>(site_index)];
}

std::vector<PeerRef> peer_list_for_site(const NetworkConfig& cfg,
                                        int site_index) {
  std::vector<PeerRef> peers;
  peers.push_back({"action", cfg.action_dim});
  for (int j = 1; j <= site_index; ++j)
    peers.push_back({"x_" + std::to_string(j), cfg.site_channels(j)});
  for (int r : cfg.dilated_rates)
    peers.push_back({"dil_" + std::to_string(r), cfg.dilated_channels});
  return peers;
}

void ArchitectureSpec::validate() const {
  VNAS_CHECK(version == 1, ConfigError,
             "unsupported architecture spec version " +
                 std::to_string(version));
  config.validate();
  const auto ns = static_cast<std::size_t>(config.num_sites);
  VNAS_CHECK(site_ops.size() == ns, ConfigError,
             "spec needs one merge op per site");
  VNAS_CHECK(site_edges.size() == ns, ConfigError,
             "spec needs one edge list per site");
  VNAS_CHECK(final_mix_logits.size() == ns && final_edge_logits.size() == ns,
             ConfigError, "spec metadata logits must cover every site");
  for (std::size_t i = 0; i < ns; ++i) {
    const int k = static_cast<int>(site_ops[i]);
    VNAS_CHECK(k >= 0 && k < kNumMergeOps, ConfigError,
               "invalid merge op at site " + std::to_string(i + 1));
    const auto peers = peer_list_for_site(config, static_cast<int>(i) + 1);
    VNAS_CHECK(final_mix_logits[i].size() ==
                   static_cast<std::size_t>(kNumMergeOps),
               ConfigError, "mix logits must have one entry per candidate");
    VNAS_CHECK(final_edge_logits[i].size() == peers.size(), ConfigError,
               "edge logits must have one entry per peer");
    std::set<std::string> seen;
    for (const auto& e : site_edges[i]) {
      const bool known =
          std::any_of(peers.begin(), peers.end(),
                      [&](const PeerRef& p) { return p.id == e.peer; });
      VNAS_CHECK(known, ConfigError,
                 "unknown peer '" + e.peer + "' at site " +
                     std::to_string(i + 1));
      VNAS_CHECK(seen.insert(e.peer).second, ConfigError,
                 "duplicate edge '" + e.peer + "' at site " +
                     std::to_string(i + 1));
      VNAS_CHECK(e.weight > 0.0 && e.weight < 1.0, ConfigError,
                 "edge weight must lie in (0,1)");
    }
  }
}

namespace {

Tensor trunc_normal(Shape shape, double stddev, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t.data()[i] =
        rng.truncated_normal(0.0, stddev, -2.0 * stddev, 2.0 * stddev);
  return t;
}

ConvLayer make_conv(int in_c, int out_c, int k, int stride, int dilation,
                    Rng& rng) {
  ConvLayer l;
  const double stddev = 1.0 / std::sqrt(static_cast<double>(k) * k * in_c);
  l.w = trunc_normal({out_c, k, k, in_c}, stddev, rng);
  l.b = Tensor::zeros({out_c}, true);
  l.stride = stride;
  l.dilation = dilation;
  return l;
}

Tensor deep_copy(const Tensor& t) {
  return Tensor::from_data(
      t.shape(), std::vector<double>(t.data(), t.data() + t.numel()),
      t.requires_grad());
}

}  // namespace

QNetwork QNetwork::make_search(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  QNetwork net;
  net.mode_ = NetMode::kSearch;
  net.cfg_ = cfg;
  Rng rng(derive_seed(seed, Stream::kInit));

  int s = cfg.image_size;
  int c = cfg.image_channels;
  std::vector<int> sp;  // spatial after each conv
  for (int ci = 0; ci <= cfg.num_sites; ++ci) {
    const auto i = static_cast<std::size_t>(ci);
    net.convs_.push_back(make_conv(c, cfg.conv_channels[i], cfg.conv_ksize[i],
                                   cfg.conv_stride[i], 1, rng));
    s = ceil_div(s, cfg.conv_stride[i]);
    c = cfg.conv_channels[i];
    sp.push_back(s);
  }
  for (int r : cfg.dilated_rates) {
    net.dilated_.push_back(make_conv(cfg.conv_channels[0],
                                     cfg.dilated_channels, cfg.dilated_ksize,
                                     cfg.dilated_stride, r, rng));
    net.dilated_present_.push_back(true);
  }
  for (int i = 1; i <= cfg.num_sites; ++i)
    net.sites_.push_back(make_fusion_site(
        i, sp[static_cast<std::size_t>(i)], sp[static_cast<std::size_t>(i)],
        cfg.site_channels(i), cfg.action_dim, rng));
  for (int i = 1; i <= cfg.num_sites; ++i)
    net.attn_.push_back(make_attention_site(
        i, cfg.site_channels(i), peer_list_for_site(cfg, i), rng));
  const int last_c = cfg.conv_channels[static_cast<std::size_t>(cfg.num_sites)];
  net.head_fc1_w_ = trunc_normal({cfg.head_hidden, last_c},
                                 1.0 / std::sqrt(static_cast<double>(last_c)),
                                 rng);
  net.head_fc1_b_ = Tensor::zeros({cfg.head_hidden}, true);
  net.head_fc2_w_ = trunc_normal(
      {1, cfg.head_hidden},
      1.0 / std::sqrt(static_cast<double>(cfg.head_hidden)), rng);
  net.head_fc2_b_ = Tensor::zeros({1}, true);
  return net;
}

QNetwork QNetwork::make_baseline(const NetworkConfig& cfg,
                                 std::uint64_t seed) {
  cfg.validate();
  QNetwork net;
  net.mode_ = NetMode::kBaseline;
  net.cfg_ = cfg;
  Rng rng(derive_seed(seed, Stream::kInit));

  int s = cfg.image_size;
  int c = cfg.image_channels;
  std::vector<int> sp;
  for (int ci = 0; ci <= cfg.num_sites; ++ci) {
    const auto i = static_cast<std::size_t>(ci);
    net.convs_.push_back(make_conv(c, cfg.conv_channels[i], cfg.conv_ksize[i],
                                   cfg.conv_stride[i], 1, rng));
    s = ceil_div(s, cfg.conv_stride[i]);
    c = cfg.conv_channels[i];
    sp.push_back(s);
  }
  net.dilated_present_.assign(cfg.dilated_rates.size(), false);
  const int mid = cfg.middle_site();
  for (int i = 1; i <= cfg.num_sites; ++i) {
    const MergeOpKind op =
        (i == mid) ? MergeOpKind::kAdd : MergeOpKind::kNoOp;
    net.site_ops_.push_back(op);
    net.sites_.push_back(make_single_op_site(
        i, sp[static_cast<std::size_t>(i)], sp[static_cast<std::size_t>(i)],
        cfg.site_channels(i), cfg.action_dim, op, rng));
  }
  net.active_edges_.assign(static_cast<std::size_t>(cfg.num_sites), {});
  const int last_c = cfg.conv_channels[static_cast<std::size_t>(cfg.num_sites)];
  net.head_fc1_w_ = trunc_normal({cfg.head_hidden, last_c},
                                 1.0 / std::sqrt(static_cast<double>(last_c)),
                                 rng);
  net.head_fc1_b_ = Tensor::zeros({cfg.head_hidden}, true);
  net.head_fc2_w_ = trunc_normal(
      {1, cfg.head_hidden},
      1.0 / std::sqrt(static_cast<double>(cfg.head_hidden)), rng);
  net.head_fc2_b_ = Tensor::zeros({1}, true);
  return net;
}

// Builds the pruned topology with freshly drawn parameters; make_pruned
// overwrites them from the trained supernet afterwards.
QNetwork QNetwork::make_pruned_fresh(const ArchitectureSpec& spec,
                                     std::uint64_t seed) {
  spec.validate();
  const NetworkConfig& cfg = spec.config;
  QNetwork net;
  net.mode_ = NetMode::kPruned;
  net.cfg_ = cfg;
  Rng rng(derive_seed(seed, Stream::kInit));

  // which dilated branches does any retained edge reference?
  std::vector<bool> dil_used(cfg.dilated_rates.size(), false);
  for (const auto& edges : spec.site_edges)
    for (const auto& e : edges)
      for (std::size_t r = 0; r < cfg.dilated_rates.size(); ++r)
        if (e.peer == "dil_" + std::to_string(cfg.dilated_rates[r]))
          dil_used[r] = true;

  int s = cfg.image_size;
  int c = cfg.image_channels;
  std::vector<int> sp;
  for (int ci = 0; ci <= cfg.num_sites; ++ci) {
    const auto i = static_cast<std::size_t>(ci);
    net.convs_.push_back(make_conv(c, cfg.conv_channels[i], cfg.conv_ksize[i],
                                   cfg.conv_stride[i], 1, rng));
    s = ceil_div(s, cfg.conv_stride[i]);
    c = cfg.conv_channels[i];
    sp.push_back(s);
  }
  for (std::size_t r = 0; r < cfg.dilated_rates.size(); ++r) {
    net.dilated_present_.push_back(dil_used[r]);
    if (dil_used[r])
      net.dilated_.push_back(make_conv(cfg.conv_channels[0],
                                       cfg.dilated_channels,
                                       cfg.dilated_ksize, cfg.dilated_stride,
                                       cfg.dilated_rates[r], rng));
    else
      net.dilated_.push_back(ConvLayer{});
  }
  for (int i = 1; i <= cfg.num_sites; ++i) {
    net.site_ops_.push_back(spec.site_ops[static_cast<std::size_t>(i - 1)]);
    net.sites_.push_back(make_single_op_site(
        i, sp[static_cast<std::size_t>(i)], sp[static_cast<std::size_t>(i)],
        cfg.site_channels(i), cfg.action_dim,
        spec.site_ops[static_cast<std::size_t>(i - 1)], rng));
  }
  for (int i = 1; i <= cfg.num_sites; ++i) {
    const auto peers = peer_list_for_site(cfg, i);
    auto full = make_attention_site(i, cfg.site_channels(i), peers, rng);
    // seed the metadata logits so a fresh pruned net still carries the
    // searched edge weights until retrained
    for (std::size_t v = 0; v < peers.size(); ++v)
      full.edge_logits.data()[static_cast<std::int64_t>(v)] =
          spec.final_edge_logits[static_cast<std::size_t>(i - 1)][v];
    std::vector<int> active;
    for (const auto& e :
         spec.site_edges[static_cast<std::size_t>(i - 1)]) {
      for (std::size_t v = 0; v < peers.size(); ++v)
        if (peers[v].id == e.peer) active.push_back(static_cast<int>(v));
    }
    std::sort(active.begin(), active.end());
    // drop projections for pruned-away edges
    for (std::size_t v = 0; v < peers.size(); ++v)
      if (std::find(active.begin(), active.end(), static_cast<int>(v)) ==
          active.end())
        full.proj_w[v] = Tensor();
    net.attn_.push_back(std::move(full));
    net.active_edges_.push_back(std::move(active));
  }
  const int last_c = cfg.conv_channels[static_cast<std::size_t>(cfg.num_sites)];
  net.head_fc1_w_ = trunc_normal({cfg.head_hidden, last_c},
                                 1.0 / std::sqrt(static_cast<double>(last_c)),
                                 rng);
  net.head_fc1_b_ = Tensor::zeros({cfg.head_hidden}, true);
  net.head_fc2_w_ = trunc_normal(
      {1, cfg.head_hidden},
      1.0 / std::sqrt(static_cast<double>(cfg.head_hidden)), rng);
  net.head_fc2_b_ = Tensor::zeros({1}, true);
  return net;
}

QNetwork QNetwork::make_pruned(const ArchitectureSpec& spec,
                               const QNetwork& trained) {
  VNAS_CHECK(trained.mode() == NetMode::kSearch, ValueError,
             "pruned weights must come from a search network");
  QNetwork net = make_pruned_fresh(spec, /*seed=*/0);
  std::map<std::string, const Tensor*> src;
  trained.for_each_param(
      [&](const std::string& name, const Tensor& t) { src[name] = &t; });
  net.for_each_param([&](const std::string& name, Tensor& t) {
    auto it = src.find(name);
    VNAS_CHECK(it != src.end(), NameError,
               "trained network is missing parameter '" + name + "'");
    VNAS_CHECK(it->second->numel() == t.numel() &&
                   it->second->shape() == t.shape(),
               ShapeError, "parameter '" + name + "' shape mismatch");
    std::copy(it->second->data(), it->second->data() + t.numel(), t.data());
  });
  return net;
}

void QNetwork::set_hardened(bool on) {
  VNAS_CHECK(mode_ == NetMode::kSearch, ValueError,
             "only search networks can be hardened");
  hardened_ = on;
}

TrunkOut QNetwork::trunk(const Tensor& images) const {
  VNAS_CHECK(images.ndim() == 4 && images.dim(1) == cfg_.image_size &&
                 images.dim(2) == cfg_.image_size &&
                 images.dim(3) == cfg_.image_channels,
             ShapeError,
             "images " + shape_str(images.shape()) + " do not match config");
  TrunkOut out;
  Tensor x = ops::relu(ops::conv2d(images, convs_[0].w, convs_[0].b,
                                   convs_[0].stride, convs_[0].dilation));
  out.dil_gaps.resize(cfg_.dilated_rates.size());
  for (std::size_t r = 0; r < cfg_.dilated_rates.size(); ++r) {
    if (!dilated_present_.empty() && dilated_present_[r]) {
      auto d = ops::relu(ops::conv2d(x, dilated_[r].w, dilated_[r].b,
                                     dilated_[r].stride,
                                     dilated_[r].dilation));
      out.dil_gaps[r] = ops::gap(d);
    }
  }
  out.x = ops::relu(ops::conv2d(x, convs_[1].w, convs_[1].b, convs_[1].stride,
                                convs_[1].dilation));
  return out;
}

Tensor QNetwork::tail(const TrunkOut& t, const Tensor& actions) const {
  VNAS_CHECK(t.x.defined(), ValueError, "trunk output is undefined");
  VNAS_CHECK(actions.ndim() == 2 && actions.dim(0) == t.x.dim(0) &&
                 actions.dim(1) == cfg_.action_dim,
             ShapeError,
             "actions " + shape_str(actions.shape()) + " do not match trunk");
  const int ns = cfg_.num_sites;
  std::vector<Tensor> reps(static_cast<std::size_t>(ns));
  std::vector<Tensor> rep_gaps(static_cast<std::size_t>(ns));
  Tensor x = t.x;
  for (int i = 0; i < ns; ++i) {
    if (i > 0) {
      const auto& l = convs_[static_cast<std::size_t>(i + 1)];
      x = ops::relu(ops::conv2d(x, l.w, l.b, l.stride, l.dilation));
    }
    reps[static_cast<std::size_t>(i)] = x;
    const auto& site = sites_[static_cast<std::size_t>(i)];
    Tensor fused;
    if (mode_ == NetMode::kSearch && !hardened_) {
      fused = fuse(site, x, actions);
    } else {
      const MergeOpKind op = mode_ == NetMode::kSearch
                                 ? argmax_op(site)
                                 : site_ops_[static_cast<std::size_t>(i)];
      fused = merge_apply(site, op, x, actions);
    }
    if (!attn_.empty()) {
      const auto& as = attn_[static_cast<std::size_t>(i)];
      std::vector<int> active;
      if (mode_ == NetMode::kSearch && !hardened_) {
        active.resize(as.peers.size());
        for (std::size_t v = 0; v < active.size(); ++v)
          active[v] = static_cast<int>(v);
      } else if (mode_ == NetMode::kSearch) {
        active = retained_peer_indices(as);
      } else {
        active = active_edges_[static_cast<std::size_t>(i)];
      }
      if (!active.empty()) {
        std::vector<Tensor> sums(as.peers.size());
        for (int v : active) {
          const auto& peer = as.peers[static_cast<std::size_t>(v)];
          if (peer.id == "action") {
            sums[static_cast<std::size_t>(v)] = actions;
          } else if (peer.id.rfind("x_", 0) == 0) {
            const int j = std::stoi(peer.id.substr(2));
            VNAS_CHECK(j >= 1 && j <= i + 1, ValueError,
                       "peer '" + peer.id + "' not available at site " +
                           std::to_string(i + 1));
            auto& gp = rep_gaps[static_cast<std::size_t>(j - 1)];
            if (!gp.defined())
              gp = ops::gap(reps[static_cast<std::size_t>(j - 1)]);
            sums[static_cast<std::size_t>(v)] = gp;
          } else {
            bool found = false;
            for (std::size_t r = 0; r < cfg_.dilated_rates.size(); ++r) {
              if (peer.id ==
                  "dil_" + std::to_string(cfg_.dilated_rates[r])) {
                VNAS_CHECK(r < t.dil_gaps.size() && t.dil_gaps[r].defined(),
                           ValueError,
                           "dilated branch for peer '" + peer.id +
                               "' is not materialized");
                sums[static_cast<std::size_t>(v)] = t.dil_gaps[r];
                found = true;
                break;
              }
            }
            VNAS_CHECK(found, NameError, "unknown peer '" + peer.id + "'");
          }
        }
        fused = attend_subset(as, fused, sums, active);
      }
    }
    x = fused;
  }
  auto pooled = ops::gap(x);
  auto h = ops::relu(ops::linear(pooled, head_fc1_w_, head_fc1_b_));
  return ops::linear(h, head_fc2_w_, head_fc2_b_);
}

Tensor QNetwork::forward(const Tensor& images, const Tensor& actions) const {
  return tail(trunk(images), actions);
}

void QNetwork::for_each_param(
    const std::function<void(const std::string&, Tensor&)>& fn) {
  auto visit = [&](const std::string& name, Tensor& t) {
    if (t.defined()) fn(name, t);
  };
  for (std::size_t ci = 0; ci < convs_.size(); ++ci) {
    const std::string p = "conv." + std::to_string(ci + 1);
    visit(p + ".w", convs_[ci].w);
    visit(p + ".b", convs_[ci].b);
  }
  for (std::size_t r = 0; r < dilated_.size(); ++r) {
    const std::string p =
        "dil." + std::to_string(cfg_.dilated_rates[r]);
    visit(p + ".w", dilated_[r].w);
    visit(p + ".b", dilated_[r].b);
  }
  for (auto& s : sites_) {
    const std::string p = "site." + std::to_string(s.index);
    visit(p + ".mix_logits", s.mix_logits);
    visit(p + ".add.w", s.expand_w);
    visit(p + ".add.b", s.expand_b);
    visit(p + ".concat.w", s.cproj_w);
    visit(p + ".concat.b", s.cproj_b);
    visit(p + ".hadamard.w", s.spatial_w);
    visit(p + ".hadamard.b", s.spatial_b);
    visit(p + ".actionconv.w", s.fgen_w);
    visit(p + ".actionconv.b", s.fgen_b);
  }
  for (auto& a : attn_) {
    const std::string p = "attn." + std::to_string(a.index);
    visit(p + ".edge_logits", a.edge_logits);
    for (std::size_t v = 0; v < a.peers.size(); ++v)
      visit(p + ".proj." + a.peers[v].id + ".w", a.proj_w[v]);
  }
  visit("head.fc1.w", head_fc1_w_);
  visit("head.fc1.b", head_fc1_b_);
  visit("head.fc2.w", head_fc2_w_);
  visit("head.fc2.b", head_fc2_b_);
}

void QNetwork::for_each_param(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  const_cast<QNetwork*>(this)->for_each_param(
      [&](const std::string& name, Tensor& t) {
        fn(name, static_cast<const Tensor&>(t));
      });
}

QNetwork QNetwork::clone() const {
  QNetwork c = *this;  // shares tensor storage...
  c.for_each_param([](const std::string&, Tensor& t) {  // ...until here
    t = deep_copy(t);
  });
  return c;
}

void QNetwork::copy_params_from(const QNetwork& other) {
  std::map<std::string, const Tensor*> src;
  other.for_each_param(
      [&](const std::string& name, const Tensor& t) { src[name] = &t; });
  std::size_t matched = 0;
  for_each_param([&](const std::string& name, Tensor& t) {
    auto it = src.find(name);
    VNAS_CHECK(it != src.end(), NameError,
               "copy_params_from: missing parameter '" + name + "'");
    VNAS_CHECK(it->second->shape() == t.shape(), ShapeError,
               "copy_params_from: shape mismatch for '" + name + "'");
    std::copy(it->second->data(), it->second->data() + t.numel(), t.data());
    ++matched;
  });
  VNAS_CHECK(matched == src.size(), NameError,
             "copy_params_from: parameter sets differ (" +
                 std::to_string(matched) + " vs " +
                 std::to_string(src.size()) + ")");
}

void QNetwork::zero_grads() {
  for_each_param([](const std::string&, Tensor& t) { t.zero_grad(); });
}

QNetwork::Flops QNetwork::count_flops() const {
  Flops f;
  const int ns = cfg_.num_sites;
  // conv tower, tracking spatial sizes
  int s = cfg_.image_size;
  int c = cfg_.image_channels;
  std::vector<int> sp;
  for (int ci = 0; ci <= ns; ++ci) {
    const auto i = static_cast<std::size_t>(ci);
    const int so = ceil_div(s, cfg_.conv_stride[i]);
    const long k = cfg_.conv_ksize[i];
    const long co = cfg_.conv_channels[i];
    f.total += static_cast<long>(so) * so * (2L * k * k * c * co + co);
    s = so;
    c = cfg_.conv_channels[i];
    sp.push_back(so);
  }
  // dilated branches: the trunk runs conv and GAP for every materialized
  // branch, so both are charged per present branch (the GAP feeds gates and
  // lands in the attention slice)
  const int s1 = sp[0];
  const int sd = ceil_div(s1, cfg_.dilated_stride);
  for (std::size_t r = 0; r < cfg_.dilated_rates.size(); ++r) {
    const bool present = r < dilated_present_.size() && dilated_present_[r];
    if (!present) continue;
    const long k = cfg_.dilated_ksize;
    const long dc = cfg_.dilated_channels;
    f.total += static_cast<long>(sd) * sd *
               (2L * k * k * cfg_.conv_channels[0] * dc + dc);
    f.attention += static_cast<long>(sd) * sd * dc + dc;
  }
  // merge sites and attention
  const bool search_blend = mode_ == NetMode::kSearch && !hardened_;
  std::set<std::string> pooled_reps;  // reps whose GAP the gates consume
  for (int i = 1; i <= ns; ++i) {
    const int hw = sp[static_cast<std::size_t>(i)];
    const int sc = cfg_.site_channels(i);
    const long hwc = static_cast<long>(hw) * hw * sc;
    const auto& site = sites_[static_cast<std::size_t>(i - 1)];
    if (search_blend) {
      for (int k = 0; k < kNumMergeOps; ++k)
        f.total += merge_op_flops(static_cast<MergeOpKind>(k), hw, hw, sc,
                                  cfg_.action_dim);
      // softmax + per-candidate scaling + blend adds
      f.total += 3L * kNumMergeOps + kNumMergeOps * hwc +
                 (kNumMergeOps - 1) * hwc;
    } else {
      const MergeOpKind op = mode_ == NetMode::kSearch
                                 ? argmax_op(site)
                                 : site_ops_[static_cast<std::size_t>(i - 1)];
      f.total += merge_op_flops(op, hw, hw, sc, cfg_.action_dim);
    }
    if (attn_.empty()) continue;
    const auto& as = attn_[static_cast<std::size_t>(i - 1)];
    std::vector<int> active;
    if (search_blend) {
      active.resize(as.peers.size());
      for (std::size_t v = 0; v < active.size(); ++v)
        active[v] = static_cast<int>(v);
    } else if (mode_ == NetMode::kSearch) {
      active = retained_peer_indices(as);
    } else {
      active = active_edges_[static_cast<std::size_t>(i - 1)];
    }
    if (active.empty()) continue;
    long gate = 0;
    for (int v : active) {
      const auto& peer = as.peers[static_cast<std::size_t>(v)];
      gate += 2L * sc * peer.dim + 2L * sc;  // projection + weight + add
      if (peer.id.rfind("x_", 0) == 0) pooled_reps.insert(peer.id);
    }
    gate += sc;   // gate sigmoid
    gate += hwc;  // per-channel application
    f.attention += gate;
  }
  for (const auto& rep : pooled_reps) {
    const int j = std::stoi(rep.substr(2));
    const long hw = sp[static_cast<std::size_t>(j)];
    f.attention += hw * hw * cfg_.site_channels(j) + cfg_.site_channels(j);
  }
  f.total += f.attention;
  // head: GAP + two FCs
  const long lc = cfg_.conv_channels[static_cast<std::size_t>(ns)];
  const long lhw = static_cast<long>(sp[static_cast<std::size_t>(ns)]) *
                   sp[static_cast<std::size_t>(ns)];
  f.total += lhw * lc + lc;
  f.total += 2L * lc * cfg_.head_hidden + cfg_.head_hidden;
  f.total += 2L * cfg_.head_hidden + 1;
  return f;
}

ArchitectureSpec extract_architecture(const QNetwork& net, std::uint64_t seed,
                                      std::int64_t iterations) {
  VNAS_CHECK(net.mode() == NetMode::kSearch, ValueError,
             "architecture extraction requires a search network");
  ArchitectureSpec spec;
  spec.version = 1;
  spec.config = net.config();
  spec.seed = seed;
  spec.iterations = iterations;
  for (int i = 0; i < net.config().num_sites; ++i) {
    const auto& site = net.sites()[static_cast<std::size_t>(i)];
    spec.site_ops.push_back(argmax_op(site));
    spec.final_mix_logits.emplace_back(
        site.mix_logits.data(), site.mix_logits.data() + kNumMergeOps);
    const auto& as = net.attention_sites()[static_cast<std::size_t>(i)];
    spec.final_edge_logits.emplace_back(
        as.edge_logits.data(), as.edge_logits.data() + as.peers.size());
    const auto w = edge_weights(as);
    std::vector<RetainedEdge> edges;
    for (int v : retained_peer_indices(as))
      edges.push_back({as.peers[static_cast<std::size_t>(v)].id,
                       w[static_cast<std::size_t>(v)]});
    spec.site_edges.push_back(std::move(edges));
  }
  return spec;
}

}  // namespace vnas
