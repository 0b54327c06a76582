#include "vnas/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <unordered_set>

#include "vnas/common.hpp"
#include "vnas/ops.hpp"
#include "vnas/rng.hpp"
#include "vnas/trainer.hpp"

namespace vnas {

namespace {

constexpr double kEps = 1e-5;

double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1.0});
}

Tensor random_tensor(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t.data()[i] = rng.uniform(lo, hi);
  return t;
}

// Checks d(loss)/d(t) for the listed tensors against central differences.
// With `max_probes` < 0 every component is probed, otherwise that many
// rng-chosen distinct components per tensor.
GradCheckEntry check_tensors(const std::string& name,
                             const std::function<Tensor()>& loss_fn,
                             std::vector<Tensor> tensors, int max_probes,
                             Rng& rng) {
  for (auto& t : tensors) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    TapeScope scope;
    const Tensor loss = loss_fn();
    scope.tape().backward(loss);
  }
  const auto eval = [&]() {
    NoGradScope ng;
    return loss_fn().item();
  };

  GradCheckEntry entry;
  entry.name = name;
  for (auto& t : tensors) {
    std::vector<std::int64_t> comps;
    if (max_probes < 0 || t.numel() <= max_probes) {
      comps.resize(static_cast<std::size_t>(t.numel()));
      for (std::int64_t i = 0; i < t.numel(); ++i)
        comps[static_cast<std::size_t>(i)] = i;
    } else {
      std::unordered_set<std::int64_t> seen;
      while (static_cast<int>(comps.size()) < max_probes) {
        const auto i = static_cast<std::int64_t>(
            rng.uniform_int(static_cast<std::uint64_t>(t.numel())));
        if (seen.insert(i).second) comps.push_back(i);
      }
    }
    const double* g = t.has_grad() ? t.grad() : nullptr;
    for (const std::int64_t i : comps) {
      const double orig = t.data()[i];
      t.data()[i] = orig + kEps;
      const double lp = eval();
      t.data()[i] = orig - kEps;
      const double lm = eval();
      t.data()[i] = orig;
      const double fd = (lp - lm) / (2.0 * kEps);
      const double ana = g ? g[i] : 0.0;
      entry.max_rel_err = std::max(entry.max_rel_err, rel_err(fd, ana));
      ++entry.probes;
    }
  }
  return entry;
}

}  // namespace

void GradCheckReport::merge(const GradCheckReport& other) {
  entries.insert(entries.end(), other.entries.begin(), other.entries.end());
  max_rel_err = std::max(max_rel_err, other.max_rel_err);
}

GradCheckReport check_op_gradients(std::uint64_t seed) {
  Rng rng(derive_seed(seed, Stream::kInit));
  GradCheckReport report;
  const auto run = [&](const std::string& name,
                       const std::function<Tensor()>& loss_fn,
                       std::vector<Tensor> tensors) {
    report.entries.push_back(
        check_tensors(name, loss_fn, std::move(tensors), -1, rng));
    report.max_rel_err =
        std::max(report.max_rel_err, report.entries.back().max_rel_err);
  };

  {
    Tensor a = random_tensor({2, 3}, rng, -1, 1);
    Tensor b = random_tensor({2, 3}, rng, -1, 1);
    const Tensor probe = random_tensor({2, 3}, rng, -1, 1);
    run("add", [=] { return ops::sum_all(ops::mul(ops::add(a, b), probe)); },
        {a, b});
    run("sub", [=] { return ops::sum_all(ops::mul(ops::sub(a, b), probe)); },
        {a, b});
    run("mul", [=] { return ops::sum_all(ops::mul(ops::mul(a, b), probe)); },
        {a, b});
  }
  {
    // keep inputs away from the relu kink so the difference quotient is
    // two-sided-valid at every probe
    Tensor x = random_tensor({3, 4}, rng, 0.1, 1.0);
    for (std::int64_t i = 0; i < x.numel(); ++i)
      if (i % 2 == 0) x.data()[i] = -x.data()[i];
    const Tensor probe = random_tensor({3, 4}, rng, -1, 1);
    run("relu", [=] { return ops::sum_all(ops::mul(ops::relu(x), probe)); },
        {x});
  }
  {
    Tensor x = random_tensor({3, 4}, rng, -2, 2);
    const Tensor probe = random_tensor({3, 4}, rng, -1, 1);
    run("sigmoid",
        [=] { return ops::sum_all(ops::mul(ops::sigmoid(x), probe)); }, {x});
  }
  {
    Tensor x = random_tensor({2, 5}, rng, -2, 2);
    const Tensor probe = random_tensor({2, 5}, rng, -1, 1);
    run("softmax_lastdim",
        [=] {
          return ops::sum_all(ops::mul(ops::softmax_lastdim(x), probe));
        },
        {x});
  }
  {
    Tensor x = random_tensor({3, 4}, rng, -1, 1);
    Tensor w = random_tensor({2, 4}, rng, -1, 1);
    Tensor b = random_tensor({2}, rng, -1, 1);
    const Tensor probe = random_tensor({3, 2}, rng, -1, 1);
    run("linear",
        [=] { return ops::sum_all(ops::mul(ops::linear(x, w, b), probe)); },
        {x, w, b});
  }
  {
    Tensor x = random_tensor({2, 5, 5, 2}, rng, -1, 1);
    Tensor w = random_tensor({3, 3, 3, 2}, rng, -1, 1);
    Tensor b = random_tensor({3}, rng, -1, 1);
    const Tensor probe1 = random_tensor({2, 5, 5, 3}, rng, -1, 1);
    run("conv2d",
        [=] {
          return ops::sum_all(ops::mul(ops::conv2d(x, w, b, 1, 1), probe1));
        },
        {x, w, b});
    const Tensor probe2 = random_tensor({2, 3, 3, 3}, rng, -1, 1);
    run("conv2d_strided",
        [=] {
          return ops::sum_all(ops::mul(ops::conv2d(x, w, b, 2, 1), probe2));
        },
        {x, w, b});
    run("conv2d_dilated",
        [=] {
          return ops::sum_all(ops::mul(ops::conv2d(x, w, b, 1, 2), probe1));
        },
        {x, w, b});
  }
  {
    Tensor x = random_tensor({2, 4, 4, 3}, rng, -1, 1);
    const Tensor probe = random_tensor({2, 3}, rng, -1, 1);
    run("gap", [=] { return ops::sum_all(ops::mul(ops::gap(x), probe)); },
        {x});
  }
  {
    Tensor a = random_tensor({2, 3}, rng, -1, 1);
    Tensor b = random_tensor({2, 4}, rng, -1, 1);
    const Tensor probe = random_tensor({2, 7}, rng, -1, 1);
    run("concat_lastdim",
        [=] {
          return ops::sum_all(ops::mul(ops::concat_lastdim(a, b), probe));
        },
        {a, b});
  }
  {
    Tensor x = random_tensor({2, 6}, rng, -1, 1);
    const Tensor probe = random_tensor({3, 4}, rng, -1, 1);
    run("reshape",
        [=] {
          return ops::sum_all(ops::mul(ops::reshape(x, {3, 4}), probe));
        },
        {x});
  }
  {
    Tensor x = random_tensor({1, 1, 1, 3}, rng, -1, 1);
    const Tensor probe = random_tensor({2, 4, 4, 3}, rng, -1, 1);
    run("broadcast_to",
        [=] {
          return ops::sum_all(
              ops::mul(ops::broadcast_to(x, {2, 4, 4, 3}), probe));
        },
        {x});
  }
  {
    Tensor x = random_tensor({5}, rng, -1, 1);
    run("select", [=] { return ops::mul(ops::select(x, 1), ops::select(x, 3)); },
        {x});
  }
  {
    Tensor x = random_tensor({2, 3, 3, 2}, rng, -1, 1);
    Tensor f = random_tensor({2, 2, 4}, rng, -1, 1);
    const Tensor probe = random_tensor({2, 3, 3, 4}, rng, -1, 1);
    run("channel_mix",
        [=] {
          return ops::sum_all(ops::mul(ops::channel_mix(x, f), probe));
        },
        {x, f});
  }
  {
    Tensor x = random_tensor({3, 4}, rng, -1, 1);
    run("mean_all", [=] { return ops::mean_all(x); }, {x});
    run("sum_all", [=] { return ops::sum_all(x); }, {x});
  }
  return report;
}

GradCheckReport check_network_gradients(const NetworkConfig& cfg,
                                        std::uint64_t seed, int probes) {
  VNAS_CHECK(probes >= 1, ValueError, "need at least one probe per group");
  cfg.validate();
  Rng rng(derive_seed(seed, Stream::kInit, 1));
  QNetwork net = QNetwork::make_search(cfg, derive_seed(seed, Stream::kInit));

  // bright random frames keep every relu path live at init; targets are
  // arbitrary constants — the loss only has to be a differentiable scalar
  const std::int64_t b = 3;
  BellmanBatch batch;
  batch.images =
      random_tensor({b, cfg.image_size, cfg.image_size, cfg.image_channels},
                    rng, 0.0, 1.0);
  batch.actions = random_tensor({b, cfg.action_dim}, rng, -1.0, 1.0);
  batch.targets = random_tensor({b, 1}, rng, -1.0, 1.0);

  GradCheckReport report;
  const auto loss_fn = [&]() { return bellman_loss(net, batch); };
  net.for_each_param([&](const std::string& name, Tensor& t) {
    report.entries.push_back(check_tensors(name, loss_fn, {t}, probes, rng));
    report.max_rel_err =
        std::max(report.max_rel_err, report.entries.back().max_rel_err);
  });
  return report;
}

GradCheckReport run_gradient_checks(std::uint64_t seed) {
  GradCheckReport report = check_op_gradients(seed);
  report.merge(check_network_gradients(NetworkConfig{}, seed, 4));
  return report;
}

}  // namespace vnas
