#include "vnas/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "vnas/common.hpp"
#include "vnas/ops.hpp"
#include "vnas/serialization.hpp"

namespace vnas {

SgdMomentum::SgdMomentum(double lr, double momentum, double l2)
    : lr_(lr), momentum_(momentum), l2_(l2) {}

void SgdMomentum::step(QNetwork& net) {
  net.for_each_param([&](const std::string& name, Tensor& t) {
    auto& v = velocity_[name];
    const std::int64_t n = t.numel();
    if (static_cast<std::int64_t>(v.size()) != n) v.assign(n, 0.0);
    double* w = t.data();
    const double* g = t.has_grad() ? t.grad() : nullptr;
    for (std::int64_t i = 0; i < n; ++i) {
      const double grad = (g ? g[i] : 0.0) + l2_ * w[i];
      v[static_cast<std::size_t>(i)] =
          momentum_ * v[static_cast<std::size_t>(i)] - lr_ * grad;
      w[i] += v[static_cast<std::size_t>(i)];
    }
    t.zero_grad();
  });
}

void TrainerConfig::validate() const {
  VNAS_CHECK(steps >= 1, ConfigError, "steps must be positive");
  VNAS_CHECK(batch_size >= 1, ConfigError, "batch size must be positive");
  VNAS_CHECK(std::isfinite(lr) && lr > 0.0, ConfigError,
             "learning rate must be positive");
  VNAS_CHECK(std::isfinite(momentum) && momentum >= 0.0 && momentum < 1.0,
             ConfigError, "momentum must be in [0, 1)");
  VNAS_CHECK(std::isfinite(l2) && l2 >= 0.0, ConfigError,
             "l2 coefficient must be non-negative");
  VNAS_CHECK(std::isfinite(gamma) && gamma >= 0.0 && gamma <= 1.0, ConfigError,
             "gamma must be in [0, 1]");
  VNAS_CHECK(target_refresh >= 1, ConfigError,
             "target refresh interval must be positive");
  VNAS_CHECK(eval_interval >= 0, ConfigError,
             "eval interval must be non-negative");
  VNAS_CHECK(eval_episodes >= 0, ConfigError,
             "eval episodes must be non-negative");
  VNAS_CHECK(checkpoint_interval >= 0, ConfigError,
             "checkpoint interval must be non-negative");
  cem.validate();
}

TargetCache::TargetCache(std::int64_t n)
    : stamp_(static_cast<std::size_t>(n), 0),
      value_(static_cast<std::size_t>(n), 0.0) {
  VNAS_CHECK(n >= 1, ValueError, "target cache needs a positive size");
}

void TargetCache::invalidate() { ++epoch_; }

bool TargetCache::has(std::int64_t i) const {
  VNAS_CHECK(i >= 0 && i < static_cast<std::int64_t>(stamp_.size()),
             ValueError, "target cache index out of range");
  return stamp_[static_cast<std::size_t>(i)] == epoch_;
}

double TargetCache::get(std::int64_t i) const {
  VNAS_CHECK(has(i), ValueError, "target cache miss");
  return value_[static_cast<std::size_t>(i)];
}

void TargetCache::put(std::int64_t i, double v) {
  VNAS_CHECK(i >= 0 && i < static_cast<std::int64_t>(stamp_.size()),
             ValueError, "target cache index out of range");
  stamp_[static_cast<std::size_t>(i)] = epoch_;
  value_[static_cast<std::size_t>(i)] = v;
}

BellmanBatch make_bellman_batch(const QNetwork& target_net,
                                const ReplayBuffer& data,
                                const std::vector<std::int64_t>& idx,
                                double gamma, const CemConfig& cem,
                                std::uint64_t seed, std::uint64_t epoch,
                                TargetCache* cache) {
  const auto& nc = target_net.config();
  const int S = nc.image_size;
  VNAS_CHECK(S == data.image_size() && nc.image_channels == 3, ShapeError,
             "network config does not match the dataset");
  VNAS_CHECK(nc.action_dim == kNetActionDim, ShapeError,
             "network action dim does not match the action encoding");
  VNAS_CHECK(!idx.empty(), ValueError, "empty batch");
  VNAS_CHECK(std::isfinite(gamma) && gamma >= 0.0 && gamma <= 1.0, ValueError,
             "gamma must be in [0, 1]");
  const std::int64_t b = static_cast<std::int64_t>(idx.size());
  const std::int64_t pix = static_cast<std::int64_t>(S) * S * 3;

  // values computed in this call (also the within-batch dedupe set)
  std::unordered_map<std::int64_t, double> fresh;
  std::vector<std::int64_t> need;
  for (const std::int64_t i : idx) {
    const Transition& t = data.at(i);
    if (t.done || fresh.count(i) || (cache && cache->has(i))) continue;
    fresh.emplace(i, 0.0);
    need.push_back(i);
  }

  if (!need.empty()) {
    NoGradScope ng;
    const std::int64_t u = static_cast<std::int64_t>(need.size());
    std::vector<double> imgs(static_cast<std::size_t>(u * pix));
    std::vector<const GraspState*> states(static_cast<std::size_t>(u));
    std::vector<Rng> rng_store;
    rng_store.reserve(static_cast<std::size_t>(u));
    std::vector<Rng*> rngs(static_cast<std::size_t>(u));
    for (std::int64_t j = 0; j < u; ++j) {
      const GraspState& sn = data.at(need[static_cast<std::size_t>(j)]).s_next;
      std::copy(sn.image.begin(), sn.image.end(),
                imgs.begin() + static_cast<std::size_t>(j * pix));
      states[static_cast<std::size_t>(j)] = &sn;
      // pure-function stream: one rng per (refresh period, transition)
      rng_store.emplace_back(derive_seed(
          seed, Stream::kCem,
          epoch * static_cast<std::uint64_t>(data.size() + 1) +
              static_cast<std::uint64_t>(need[static_cast<std::size_t>(j)])));
      rngs[static_cast<std::size_t>(j)] = &rng_store.back();
    }
    const TrunkOut trunk =
        target_net.trunk(Tensor::from_data({u, S, S, 3}, std::move(imgs)));
    const auto best = cem_maximize_batch(target_net, trunk, states, cem, rngs);

    std::vector<double> acts(static_cast<std::size_t>(u) * kNetActionDim);
    for (std::int64_t j = 0; j < u; ++j) {
      const auto in = net_action_input(best[static_cast<std::size_t>(j)],
                                       *states[static_cast<std::size_t>(j)]);
      std::copy(in.begin(), in.end(),
                acts.begin() + static_cast<std::size_t>(j) * kNetActionDim);
    }
    const Tensor qv = target_net.tail(
        trunk, Tensor::from_data({u, kNetActionDim}, std::move(acts)));
    for (std::int64_t j = 0; j < u; ++j) {
      const double v = qv.data()[j];
      VNAS_CHECK(std::isfinite(v), NumericError,
                 "non-finite target value from the frozen network");
      fresh[need[static_cast<std::size_t>(j)]] = v;
      if (cache) cache->put(need[static_cast<std::size_t>(j)], v);
    }
  }

  BellmanBatch out;
  std::vector<double> imgs(static_cast<std::size_t>(b * pix));
  std::vector<double> acts(static_cast<std::size_t>(b) * kNetActionDim);
  std::vector<double> ys(static_cast<std::size_t>(b));
  for (std::int64_t r = 0; r < b; ++r) {
    const Transition& t = data.at(idx[static_cast<std::size_t>(r)]);
    std::copy(t.s.image.begin(), t.s.image.end(),
              imgs.begin() + static_cast<std::size_t>(r * pix));
    const auto in = net_action_input(t.a, t.s);
    std::copy(in.begin(), in.end(),
              acts.begin() + static_cast<std::size_t>(r) * kNetActionDim);
    double maxq = 0.0;
    if (!t.done) {
      const auto it = fresh.find(idx[static_cast<std::size_t>(r)]);
      maxq = it != fresh.end() ? it->second
                               : cache->get(idx[static_cast<std::size_t>(r)]);
    }
    ys[static_cast<std::size_t>(r)] =
        bellman_target(t.r, gamma, t.done, maxq);
  }
  out.images = Tensor::from_data({b, S, S, 3}, std::move(imgs));
  out.actions = Tensor::from_data({b, kNetActionDim}, std::move(acts));
  out.targets = Tensor::from_data({b, 1}, std::move(ys));
  return out;
}

Tensor bellman_loss(const QNetwork& net, const BellmanBatch& batch) {
  const Tensor q = net.forward(batch.images, batch.actions);
  const Tensor d = ops::sub(q, batch.targets);
  return ops::mean_all(ops::mul(d, d));
}

namespace {

// Stabilized softmax of a logit vector (same max-subtraction scheme the
// fusion forward uses).
std::vector<double> softmax_of(const double* l, std::int64_t n) {
  double mx = l[0];
  for (std::int64_t i = 1; i < n; ++i) mx = std::max(mx, l[i]);
  std::vector<double> p(static_cast<std::size_t>(n));
  double sum = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    p[static_cast<std::size_t>(i)] = std::exp(l[i] - mx);
    sum += p[static_cast<std::size_t>(i)];
  }
  for (auto& v : p) v /= sum;
  return p;
}

}  // namespace

TrainResult train_q_network(QNetwork& net, const ReplayBuffer& data,
                            const TrainerConfig& cfg,
                            const EnvConfig& env_cfg, std::uint64_t seed,
                            const std::string& metrics_csv_path,
                            const std::string& checkpoint_prefix) {
  cfg.validate();
  const auto& nc = net.config();
  VNAS_CHECK(nc.image_size == data.image_size(), ShapeError,
             "network config does not match the dataset");
  if (cfg.eval_episodes > 0) {
    env_cfg.validate();
    VNAS_CHECK(env_cfg.image_size == nc.image_size, ShapeError,
               "environment config does not match the network");
  }

  TrainResult res;
  res.dataset_hash_before = data.hash();

  QNetwork target = net.clone();
  SgdMomentum opt(cfg.lr, cfg.momentum, cfg.l2);
  Rng sample_rng(derive_seed(seed, Stream::kSample));
  TargetCache cache(data.size());
  std::uint64_t epoch = 0;

  net.for_each_param(
      [](const std::string&, Tensor& t) { t.set_requires_grad(true); });

  std::ofstream csv;
  if (!metrics_csv_path.empty()) {
    csv.open(metrics_csv_path, std::ios::trunc);
    VNAS_CHECK(csv.good(), IoError,
               "cannot open metrics file: " + metrics_csv_path);
    csv << "step,loss,eval_success";
    for (int i = 1; i <= nc.num_sites; ++i) csv << ",entropy_site_" << i;
    csv << ",edges_retained\n";
  }

  const auto record_arch = [&]() {
    std::vector<double> ent;
    std::vector<int> amax;
    for (const FusionSite& s : net.sites()) {
      if (!s.mix_logits.defined()) continue;
      const auto p = softmax_of(s.mix_logits.data(), s.mix_logits.numel());
      double h = 0.0;
      for (const double v : p)
        if (v > 0.0) h -= v * std::log(v);
      ent.push_back(h);
      const double* l = s.mix_logits.data();
      amax.push_back(static_cast<int>(
          std::max_element(l, l + s.mix_logits.numel()) - l));
    }
    if (amax.empty())
      for (const MergeOpKind op : net.site_ops())
        amax.push_back(static_cast<int>(op));
    int edges = 0;
    for (const AttentionSite& a : net.attention_sites()) {
      if (!a.edge_logits.defined()) continue;
      const double* l = a.edge_logits.data();
      for (std::int64_t i = 0; i < a.edge_logits.numel(); ++i)
        if (l[i] > 0.0) ++edges;  // sigmoid(l) > 0.5 iff l > 0
    }
    res.site_entropy.push_back(std::move(ent));
    res.site_argmax.push_back(std::move(amax));
    res.edges_retained.push_back(edges);
  };

  const auto check_constraints = [&]() {
    for (const FusionSite& s : net.sites()) {
      if (!s.mix_logits.defined()) continue;
      const auto p = softmax_of(s.mix_logits.data(), s.mix_logits.numel());
      double tot = 0.0;
      for (const double v : p) tot += v;
      if (std::fabs(tot - 1.0) > 1e-12) {
        ++res.softmax_violations;
        log_warn("site " + std::to_string(s.index) +
                 " mix weights sum drifted: " + format_double(tot));
      }
    }
    for (const AttentionSite& a : net.attention_sites()) {
      if (!a.edge_logits.defined()) continue;
      const double* l = a.edge_logits.data();
      for (std::int64_t i = 0; i < a.edge_logits.numel(); ++i) {
        const double w = 1.0 / (1.0 + std::exp(-l[i]));
        if (!(w > 0.0 && w < 1.0)) {
          ++res.edge_violations;
          log_warn("site " + std::to_string(a.index) + " edge " +
                   std::to_string(i) +
                   " weight saturated: " + format_double(w));
        }
      }
    }
  };

  const auto run_eval = [&](std::int64_t step) {
    if (cfg.eval_episodes <= 0) return;
    const EvalResult e =
        evaluate_policy(net, env_cfg, cfg.eval_episodes, seed, cfg.cem);
    res.evals.push_back(EvalPoint{step, e.success_rate, e.ci_half_width});
    log_info("step " + std::to_string(step) +
             ": eval success " + format_double(e.success_rate) + " +- " +
             format_double(e.ci_half_width));
  };

  const auto write_row = [&](std::int64_t step, double loss) {
    if (!csv.is_open()) return;
    const double ev = res.evals.empty()
                          ? std::numeric_limits<double>::quiet_NaN()
                          : res.evals.back().success_rate;
    csv << step << ',' << format_double(loss) << ',' << format_double(ev);
    const auto& ent = res.site_entropy.back();
    for (int i = 0; i < nc.num_sites; ++i)
      csv << ','
          << format_double(i < static_cast<int>(ent.size()) ? ent[i] : 0.0);
    csv << ',' << res.edges_retained.back() << '\n';
    csv.flush();
    VNAS_CHECK(csv.good(), IoError,
               "metrics write failed: " + metrics_csv_path);
  };

  record_arch();
  check_constraints();
  run_eval(0);
  {
    // step-0 loss probe on a fixed batch (the leading transitions), so the
    // metrics stream starts with a loss measured before any update
    std::vector<std::int64_t> pidx;
    for (std::int64_t i = 0;
         i < std::min<std::int64_t>(cfg.batch_size, data.size()); ++i)
      pidx.push_back(i);
    const BellmanBatch pb = make_bellman_batch(target, data, pidx, cfg.gamma,
                                               cfg.cem, seed, epoch, &cache);
    NoGradScope ng;
    write_row(0, bellman_loss(net, pb).item());
  }

  for (std::int64_t k = 1; k <= cfg.steps; ++k) {
    const auto idx = data.sample_indices(sample_rng, cfg.batch_size);
    const BellmanBatch batch = make_bellman_batch(
        target, data, idx, cfg.gamma, cfg.cem, seed, epoch, &cache);
    double lval = 0.0;
    {
      TapeScope ts;
      const Tensor loss = bellman_loss(net, batch);
      lval = loss.item();
      if (!std::isfinite(lval)) {
        std::ostringstream oss;
        oss << "non-finite loss " << lval << " at step " << k << " (batch";
        for (const auto i : idx) oss << ' ' << i;
        oss << ")";
        log_error(oss.str());
        throw NumericError("training diverged: non-finite loss at step " +
                           std::to_string(k));
      }
      ts.tape().backward(loss);
    }
    opt.step(net);
    res.losses.push_back(lval);
    check_constraints();
    record_arch();
    if (k == cfg.steps ||
        (cfg.eval_interval > 0 && k % cfg.eval_interval == 0))
      run_eval(k);
    write_row(k, lval);
    if (!checkpoint_prefix.empty() && cfg.checkpoint_interval > 0 &&
        k % cfg.checkpoint_interval == 0 && k != cfg.steps)
      save_checkpoint(checkpoint_prefix + std::to_string(k) + ".bin", net);
    if (k % cfg.target_refresh == 0 && k != cfg.steps) {
      target.copy_params_from(net);
      cache.invalidate();
      ++epoch;
      log_debug("target network refreshed at step " + std::to_string(k));
    }
  }

  res.dataset_hash_after = data.hash();
  if (!res.evals.empty()) {
    res.final_success = res.evals.back().success_rate;
    res.final_ci = res.evals.back().ci_half_width;
  } else {
    res.final_success = -1.0;
  }
  return res;
}

}  // namespace vnas
