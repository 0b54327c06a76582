#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <map>
#include <set>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "vnas/qnet.hpp"

using namespace vnas;

namespace {

// Small tower used where the default one would be needlessly slow.
NetworkConfig tiny_config() {
  NetworkConfig cfg;
  cfg.image_size = 8;
  cfg.image_channels = 2;
  cfg.action_dim = 3;
  cfg.num_sites = 2;
  cfg.conv_channels = {4, 3, 3};
  cfg.conv_ksize = {3, 3, 3};
  cfg.conv_stride = {1, 2, 1};
  cfg.dilated_rates = {2};
  cfg.dilated_channels = 2;
  cfg.dilated_ksize = 3;
  cfg.dilated_stride = 4;
  cfg.head_hidden = 4;
  return cfg;
}

Tensor random_images(const NetworkConfig& cfg, int n, Rng& rng) {
  Tensor t = Tensor::zeros({n, cfg.image_size, cfg.image_size,
                            cfg.image_channels});
  for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform();
  return t;
}

Tensor random_actions(const NetworkConfig& cfg, int n, Rng& rng) {
  Tensor t = Tensor::zeros({n, cfg.action_dim});
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t.data()[i] = rng.uniform(-1.0, 1.0);
  return t;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::int64_t i = 0; i < a.numel(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

std::vector<std::string> param_names(const QNetwork& net) {
  std::vector<std::string> names;
  net.for_each_param([&](const std::string& n, const Tensor&) {
    names.push_back(n);
  });
  return names;
}

// Push the search net's architecture parameters away from their symmetric
// init so argmax/retention are nontrivial: site i prefers op (i mod 5) and
// keeps every other edge.
void shape_architecture(QNetwork& net) {
  auto& sites = net.sites();
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const int want = static_cast<int>((i + 1) % kNumMergeOps);
    for (int k = 0; k < kNumMergeOps; ++k)
      sites[i].mix_logits.data()[k] = (k == want) ? 1.5 : -0.5;
  }
  auto& attn = net.attention_sites();
  for (std::size_t i = 0; i < attn.size(); ++i) {
    for (std::int64_t v = 0; v < attn[i].edge_logits.numel(); ++v)
      attn[i].edge_logits.data()[v] =
          (v % 2 == static_cast<std::int64_t>(i % 2)) ? 0.8 : -0.9;
  }
}

}  // namespace

TEST_CASE("config geometry and validation") {
  NetworkConfig cfg;  // defaults
  cfg.validate();
  CHECK(cfg.site_spatial(1) == 8);
  CHECK(cfg.site_spatial(2) == 4);
  CHECK(cfg.site_spatial(5) == 4);
  CHECK(cfg.site_channels(1) == 8);
  CHECK(cfg.site_channels(5) == 12);
  CHECK(cfg.middle_site() == 3);

  NetworkConfig bad = cfg;
  bad.conv_channels.pop_back();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.conv_ksize[0] = 4;  // even kernel
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.dilated_rates = {4, 2};  // not increasing
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(cfg.site_spatial(0), ShapeError);
  CHECK_THROWS_AS(cfg.site_spatial(6), ShapeError);
}

TEST_CASE("peer lists follow the serialization order") {
  NetworkConfig cfg;  // defaults: A=9, dil rates {2,4}, dc=2
  auto p1 = peer_list_for_site(cfg, 1);
  REQUIRE(p1.size() == 4);
  CHECK(p1[0].id == "action");
  CHECK(p1[0].dim == 9);
  CHECK(p1[1].id == "x_1");
  CHECK(p1[1].dim == 8);
  CHECK(p1[2].id == "dil_2");
  CHECK(p1[3].id == "dil_4");
  CHECK(p1[3].dim == 2);

  auto p5 = peer_list_for_site(cfg, 5);
  REQUIRE(p5.size() == 8);
  CHECK(p5[5].id == "x_5");
  CHECK(p5[5].dim == 12);
  CHECK(p5[6].id == "dil_2");
}

TEST_CASE("baseline FLOPs match hand arithmetic for the default tower") {
  NetworkConfig cfg;
  auto net = QNetwork::make_baseline(cfg, 1);
  // [DERIVED] oracle: independent arithmetic, conv cost = HW(2k^2*Cin*Cout
  // + Cout), Add merge = 2AC + C + HWC, head = GAP + two FCs.
  const long conv1 = 32L * 32 * (2 * 5 * 5 * 3 * 32 + 32);
  const long conv2 = 8L * 8 * (2 * 3 * 3 * 32 * 8 + 8);
  const long conv3 = 4L * 4 * (2 * 3 * 3 * 8 * 12 + 12);
  const long conv456 = 3 * (4L * 4 * (2 * 3 * 3 * 12 * 12 + 12));
  const long merge = 2L * 9 * 12 + 12 + 4L * 4 * 12;  // Add at site 3
  const long head = (4L * 4 * 12 + 12) + (2L * 12 * 32 + 32) + (2L * 32 + 1);
  const long expect = conv1 + conv2 + conv3 + conv456 + merge + head;
  CHECK(expect == 4947968 + 295424 + 27840 + 124992 + 420 + 1069);

  const auto f = net.count_flops();
  CHECK(f.total == expect);
  CHECK(f.attention == 0);
  // the stem dominates: headroom for pruned-vs-baseline parity (< 2%)
  CHECK(static_cast<double>(conv1) / f.total > 0.9);
}

TEST_CASE("search FLOPs dominate any pruned/baseline variant") {
  NetworkConfig cfg;
  auto search = QNetwork::make_search(cfg, 3);
  shape_architecture(search);
  const auto fs = search.count_flops();
  const auto fb = QNetwork::make_baseline(cfg, 3).count_flops();
  CHECK(fs.total > fb.total);
  CHECK(fs.attention > 0);
  // attention slice of the search cost stays below one percent
  CHECK(static_cast<double>(fs.attention) / fs.total < 0.01);

  auto spec = extract_architecture(search, 3, 0);
  auto pruned = QNetwork::make_pruned(spec, search);
  const auto fp = pruned.count_flops();
  CHECK(fs.total >= fp.total);
  // a hardened supernet still carries every dilated branch in its trunk, so
  // it can only cost at least as much as the pruned rebuild
  search.set_hardened(true);
  const auto fh = search.count_flops();
  CHECK(fh.total >= fp.total);
  CHECK(fh.attention >= fp.attention);
  // pruned cost stays within 2% of the baseline cost
  const double rel = std::abs(static_cast<double>(fp.total - fb.total)) /
                     static_cast<double>(fb.total);
  CHECK(rel < 0.02);
}

TEST_CASE("worst-case pruned tower still within 2% of baseline") {
  // force the most expensive architecture everywhere: ActionConv at every
  // site and every edge retained
  NetworkConfig cfg;
  auto search = QNetwork::make_search(cfg, 11);
  for (auto& s : search.sites())
    for (int k = 0; k < kNumMergeOps; ++k)
      s.mix_logits.data()[k] =
          (k == static_cast<int>(MergeOpKind::kActionConv)) ? 2.0 : 0.0;
  for (auto& as : search.attention_sites())
    for (std::int64_t v = 0; v < as.edge_logits.numel(); ++v)
      as.edge_logits.data()[v] = 1.0;
  auto spec = extract_architecture(search, 11, 0);
  for (const auto& ops : spec.site_ops)
    CHECK(ops == MergeOpKind::kActionConv);
  auto pruned = QNetwork::make_pruned(spec, search);
  const auto fp = pruned.count_flops();
  const auto fb = QNetwork::make_baseline(cfg, 11).count_flops();
  const double rel = std::abs(static_cast<double>(fp.total - fb.total)) /
                     static_cast<double>(fb.total);
  CHECK(rel < 0.02);
  CHECK(static_cast<double>(fp.attention) / fb.total < 0.01);
  // with every branch and edge retained, the hardened supernet and the
  // pruned rebuild execute the same graph and cost the same
  search.set_hardened(true);
  const auto fh = search.count_flops();
  CHECK(fh.total == fp.total);
  CHECK(fh.attention == fp.attention);
}

TEST_CASE("parameter enumeration is stable, named, and mode-appropriate") {
  auto cfg = tiny_config();
  auto search = QNetwork::make_search(cfg, 5);
  auto names = param_names(search);
  // no duplicates
  CHECK(std::set<std::string>(names.begin(), names.end()).size() ==
        names.size());
  REQUIRE(!names.empty());
  CHECK(names.front() == "conv.1.w");
  CHECK(names.back() == "head.fc2.b");
  const std::set<std::string> nameset(names.begin(), names.end());
  CHECK(nameset.count("dil.2.w") == 1);
  CHECK(nameset.count("site.1.mix_logits") == 1);
  CHECK(nameset.count("site.2.actionconv.b") == 1);
  CHECK(nameset.count("attn.1.edge_logits") == 1);
  CHECK(nameset.count("attn.2.proj.x_2.w") == 1);
  CHECK(nameset.count("attn.1.proj.dil_2.w") == 1);

  auto baseline = QNetwork::make_baseline(cfg, 5);
  auto bnames = param_names(baseline);
  const std::set<std::string> bset(bnames.begin(), bnames.end());
  CHECK(bset.count("site.1.mix_logits") == 0);
  CHECK(bset.count("attn.1.edge_logits") == 0);
  CHECK(bset.count("dil.2.w") == 0);
  // middle site of 2 is site 1; it carries the Add parameters
  CHECK(cfg.middle_site() == 1);
  CHECK(bset.count("site.1.add.w") == 1);
  CHECK(bset.count("site.2.add.w") == 0);

  // enumeration is deterministic
  CHECK(param_names(search) == names);
}

TEST_CASE("initialization is seed-deterministic") {
  auto cfg = tiny_config();
  auto a = QNetwork::make_search(cfg, 9);
  auto b = QNetwork::make_search(cfg, 9);
  auto c = QNetwork::make_search(cfg, 10);
  std::map<std::string, const Tensor*> pa, pb, pc;
  a.for_each_param([&](const std::string& n, const Tensor& t) { pa[n] = &t; });
  b.for_each_param([&](const std::string& n, const Tensor& t) { pb[n] = &t; });
  c.for_each_param([&](const std::string& n, const Tensor& t) { pc[n] = &t; });
  REQUIRE(pa.size() == pb.size());
  bool all_equal = true, any_diff_seed = false;
  for (const auto& [n, t] : pa) {
    all_equal = all_equal && bitwise_equal(*t, *pb.at(n));
    if (!bitwise_equal(*t, *pc.at(n))) any_diff_seed = true;
  }
  CHECK(all_equal);
  CHECK(any_diff_seed);

  // conv draws come first in every mode, so the shared tower starts from
  // identical weights for a fair search-vs-baseline comparison
  auto bl = QNetwork::make_baseline(cfg, 9);
  const Tensor *sw = nullptr, *bw = nullptr;
  a.for_each_param([&](const std::string& n, const Tensor& t) {
    if (n == "conv.1.w") sw = &t;
  });
  bl.for_each_param([&](const std::string& n, const Tensor& t) {
    if (n == "conv.1.w") bw = &t;
  });
  REQUIRE(sw != nullptr);
  REQUIRE(bw != nullptr);
  CHECK(bitwise_equal(*sw, *bw));
}

TEST_CASE("forward shapes, trunk/tail split, and finite outputs") {
  auto cfg = tiny_config();
  Rng rng(123);
  auto net = QNetwork::make_search(cfg, 2);
  auto imgs = random_images(cfg, 3, rng);
  auto acts = random_actions(cfg, 3, rng);
  auto q = net.forward(imgs, acts);
  REQUIRE(q.shape() == Shape{3, 1});
  for (int i = 0; i < 3; ++i) CHECK(std::isfinite(q.data()[i]));

  // trunk+tail is literally the same computation
  auto t = net.trunk(imgs);
  CHECK(t.x.dim(1) == cfg.site_spatial(1));
  REQUIRE(t.dil_gaps.size() == 1);
  CHECK(t.dil_gaps[0].defined());
  auto q2 = net.tail(t, acts);
  CHECK(bitwise_equal(q, q2));

  // trunk caching: two different action batches against one trunk
  auto acts2 = random_actions(cfg, 3, rng);
  auto qa = net.tail(t, acts2);
  CHECK(!bitwise_equal(q, qa));

  CHECK_THROWS_AS(net.forward(acts, acts), ShapeError);
  auto bad_actions = Tensor::zeros({3, cfg.action_dim + 1});
  CHECK_THROWS_AS(net.forward(imgs, bad_actions), ShapeError);
}

TEST_CASE("Q depends on both the image and the action") {
  auto cfg = tiny_config();
  Rng rng(77);
  auto net = QNetwork::make_search(cfg, 4);
  auto imgs = random_images(cfg, 2, rng);
  auto acts = random_actions(cfg, 2, rng);
  imgs.set_requires_grad(true);
  acts.set_requires_grad(true);
  TapeScope scope;
  auto loss = ops::mean_all(net.forward(imgs, acts));
  scope.tape().backward(loss);
  double gi = 0.0, ga = 0.0;
  for (std::int64_t i = 0; i < imgs.numel(); ++i)
    gi = std::max(gi, std::abs(imgs.grad()[i]));
  for (std::int64_t i = 0; i < acts.numel(); ++i)
    ga = std::max(ga, std::abs(acts.grad()[i]));
  CHECK(gi > 1e-12);
  CHECK(ga > 1e-12);
}

TEST_CASE("hardened search equals the pruned network exactly") {
  auto cfg = tiny_config();
  auto search = QNetwork::make_search(cfg, 21);
  shape_architecture(search);
  auto spec = extract_architecture(search, 21, 1234);
  spec.validate();
  CHECK(spec.seed == 21);
  CHECK(spec.iterations == 1234);

  auto pruned = QNetwork::make_pruned(spec, search);
  search.set_hardened(true);
  Rng rng(55);
  for (int rep = 0; rep < 3; ++rep) {
    auto imgs = random_images(cfg, 4, rng);
    auto acts = random_actions(cfg, 4, rng);
    auto qh = search.forward(imgs, acts);
    auto qp = pruned.forward(imgs, acts);
    CHECK(bitwise_equal(qh, qp));
  }
  search.set_hardened(false);
  // the blended supernet does NOT match the pruned net
  auto imgs = random_images(cfg, 4, rng);
  auto acts = random_actions(cfg, 4, rng);
  CHECK(!bitwise_equal(search.forward(imgs, acts),
                       pruned.forward(imgs, acts)));
}

TEST_CASE("extraction spec round-trips through validate and rebuild") {
  auto cfg = tiny_config();
  auto search = QNetwork::make_search(cfg, 31);
  shape_architecture(search);
  auto spec = extract_architecture(search, 31, 10);
  REQUIRE(spec.site_ops.size() == 2);
  // shape_architecture points site i (0-based) at op (i+1) % 5
  CHECK(spec.site_ops[0] == MergeOpKind::kAdd);
  CHECK(spec.site_ops[1] == MergeOpKind::kConcat);
  for (const auto& edges : spec.site_edges)
    for (const auto& e : edges) CHECK(e.weight > 0.5);

  // tampering is caught
  auto broken = spec;
  broken.site_edges[0].push_back({"x_9", 0.9});
  CHECK_THROWS_AS(broken.validate(), ConfigError);
  broken = spec;
  broken.version = 2;
  CHECK_THROWS_AS(broken.validate(), ConfigError);
  broken = spec;
  if (!broken.site_edges[0].empty()) {
    broken.site_edges[0].push_back(broken.site_edges[0][0]);
    CHECK_THROWS_AS(broken.validate(), ConfigError);
  }

  CHECK_THROWS_AS(
      extract_architecture(QNetwork::make_baseline(cfg, 1), 1, 0),
      ValueError);
  CHECK_THROWS_AS(
      QNetwork::make_pruned(spec, QNetwork::make_baseline(cfg, 1)),
      ValueError);
}

TEST_CASE("dilated branches materialize only when an edge needs them") {
  auto cfg = tiny_config();
  auto search = QNetwork::make_search(cfg, 41);
  // drop every dilated edge, keep the action edge everywhere
  for (auto& as : search.attention_sites()) {
    for (std::size_t v = 0; v < as.peers.size(); ++v)
      as.edge_logits.data()[static_cast<std::int64_t>(v)] =
          (as.peers[v].id == "action") ? 1.0 : -1.0;
  }
  auto spec = extract_architecture(search, 41, 0);
  auto pruned = QNetwork::make_pruned(spec, search);
  auto pnames = param_names(pruned);
  const std::set<std::string> pset(pnames.begin(), pnames.end());
  CHECK(pset.count("dil.2.w") == 0);
  CHECK(pset.count("attn.1.proj.action.w") == 1);
  CHECK(pset.count("attn.1.proj.dil_2.w") == 0);

  Rng rng(1);
  auto t = pruned.trunk(random_images(cfg, 2, rng));
  REQUIRE(t.dil_gaps.size() == 1);
  CHECK(!t.dil_gaps[0].defined());  // skipped, not just ignored
  auto q = pruned.tail(t, random_actions(cfg, 2, rng));
  CHECK(q.shape() == Shape{2, 1});

  // now keep a dilated edge: branch comes back, and costs more
  auto search2 = QNetwork::make_search(cfg, 41);
  for (auto& as : search2.attention_sites())
    for (std::size_t v = 0; v < as.peers.size(); ++v)
      as.edge_logits.data()[static_cast<std::int64_t>(v)] =
          (as.peers[v].id == "dil_2") ? 1.0 : -1.0;
  auto spec2 = extract_architecture(search2, 41, 0);
  auto pruned2 = QNetwork::make_pruned(spec2, search2);
  auto p2names = param_names(pruned2);
  CHECK(std::set<std::string>(p2names.begin(), p2names.end())
            .count("dil.2.w") == 1);
  CHECK(pruned2.count_flops().total > 0);
}

TEST_CASE("an architecture with no retained edges skips gating entirely") {
  auto cfg = tiny_config();
  auto search = QNetwork::make_search(cfg, 51);
  for (auto& as : search.attention_sites())
    for (std::int64_t v = 0; v < as.edge_logits.numel(); ++v)
      as.edge_logits.data()[v] = -2.0;
  auto spec = extract_architecture(search, 51, 0);
  for (const auto& edges : spec.site_edges) CHECK(edges.empty());
  auto pruned = QNetwork::make_pruned(spec, search);
  CHECK(pruned.count_flops().attention == 0);
  Rng rng(2);
  auto q = pruned.forward(random_images(cfg, 2, rng),
                          random_actions(cfg, 2, rng));
  CHECK(q.shape() == Shape{2, 1});
  // hardened supernet agrees even in the edgeless case
  search.set_hardened(true);
  auto imgs = random_images(cfg, 2, rng);
  auto acts = random_actions(cfg, 2, rng);
  CHECK(bitwise_equal(search.forward(imgs, acts),
                      pruned.forward(imgs, acts)));
}

TEST_CASE("clone detaches storage; copy_params_from restores it") {
  auto cfg = tiny_config();
  auto net = QNetwork::make_search(cfg, 61);
  auto copy = net.clone();
  Rng rng(3);
  auto imgs = random_images(cfg, 2, rng);
  auto acts = random_actions(cfg, 2, rng);
  auto q0 = net.forward(imgs, acts);
  CHECK(bitwise_equal(q0, copy.forward(imgs, acts)));

  // perturb the original: the clone must not move
  net.for_each_param([](const std::string&, Tensor& t) {
    for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] += 0.25;
  });
  CHECK(!bitwise_equal(q0, net.forward(imgs, acts)));
  CHECK(bitwise_equal(q0, copy.forward(imgs, acts)));

  // target-style refresh
  copy.copy_params_from(net);
  CHECK(bitwise_equal(net.forward(imgs, acts), copy.forward(imgs, acts)));

  // mismatched parameter sets are rejected
  auto baseline = QNetwork::make_baseline(cfg, 61);
  CHECK_THROWS_AS(baseline.copy_params_from(net), Error);
}

TEST_CASE("fresh pruned networks keep the searched wiring, not the weights") {
  auto cfg = tiny_config();
  auto search = QNetwork::make_search(cfg, 71);
  shape_architecture(search);
  auto spec = extract_architecture(search, 71, 0);
  auto carried = QNetwork::make_pruned(spec, search);
  auto fresh = QNetwork::make_pruned_fresh(spec, 99);
  CHECK(param_names(carried) == param_names(fresh));
  Rng rng(4);
  auto imgs = random_images(cfg, 2, rng);
  auto acts = random_actions(cfg, 2, rng);
  CHECK(!bitwise_equal(carried.forward(imgs, acts),
                       fresh.forward(imgs, acts)));
  // same seed, same spec => same fresh init
  auto fresh2 = QNetwork::make_pruned_fresh(spec, 99);
  CHECK(bitwise_equal(fresh.forward(imgs, acts),
                      fresh2.forward(imgs, acts)));
}
