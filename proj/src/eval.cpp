#include "vnas/eval.hpp"

#include <cmath>
#include <memory>
#include <vector>

#include "vnas/common.hpp"

namespace vnas {

namespace {

EvalResult finalize(int episodes, int successes, double return_sum) {
  EvalResult r;
  r.episodes = episodes;
  r.successes = successes;
  r.success_rate = static_cast<double>(successes) / episodes;
  const double p = r.success_rate;
  r.ci_half_width = 1.96 * std::sqrt(p * (1.0 - p) / episodes);
  r.mean_return = return_sum / episodes;
  return r;
}

}  // namespace

EvalResult evaluate_rollouts(const RolloutPolicy& policy,
                             const EnvConfig& env_cfg, int episodes,
                             std::uint64_t seed) {
  env_cfg.validate();
  VNAS_CHECK(episodes >= 1, ValueError, "episode count must be positive");
  VNAS_CHECK(policy != nullptr, ValueError, "null rollout policy");
  const std::uint64_t eval_seed = derive_seed(seed, Stream::kEval);

  std::vector<char> success(static_cast<std::size_t>(episodes), 0);
  std::vector<double> returns(static_cast<std::size_t>(episodes), 0.0);
#pragma omp parallel for schedule(dynamic)
  for (int ep = 0; ep < episodes; ++ep) {
    Rng env_rng(
        derive_seed(eval_seed, Stream::kEnv, static_cast<std::uint64_t>(ep)));
    Rng pol_rng(
        derive_seed(eval_seed, Stream::kCem, static_cast<std::uint64_t>(ep)));
    GraspEnv env(env_cfg, env_rng);
    double ret = 0.0;
    while (!env.done()) ret += env.step(policy(env, pol_rng)).reward;
    success[static_cast<std::size_t>(ep)] = env.succeeded() ? 1 : 0;
    returns[static_cast<std::size_t>(ep)] = ret;
  }

  int successes = 0;
  double return_sum = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    successes += success[static_cast<std::size_t>(ep)];
    return_sum += returns[static_cast<std::size_t>(ep)];
  }
  return finalize(episodes, successes, return_sum);
}

EvalResult evaluate_policy(const QNetwork& net, const EnvConfig& env_cfg,
                           int episodes, std::uint64_t seed,
                           const CemConfig& cem) {
  env_cfg.validate();
  cem.validate();
  VNAS_CHECK(episodes >= 1, ValueError, "episode count must be positive");
  const auto& nc = net.config();
  VNAS_CHECK(nc.image_size == env_cfg.image_size && nc.image_channels == 3,
             ShapeError, "network config does not match the environment");
  VNAS_CHECK(nc.action_dim == kNetActionDim, ShapeError,
             "network action dim does not match the action encoding");
  const std::uint64_t eval_seed = derive_seed(seed, Stream::kEval);
  NoGradScope ng;

  struct Episode {
    GraspEnv env;
    Rng cem_rng;
    double ret = 0.0;
  };
  std::vector<Episode> eps;
  eps.reserve(static_cast<std::size_t>(episodes));
  for (int ep = 0; ep < episodes; ++ep) {
    Rng env_rng(
        derive_seed(eval_seed, Stream::kEnv, static_cast<std::uint64_t>(ep)));
    eps.push_back(Episode{
        GraspEnv(env_cfg, env_rng),
        Rng(derive_seed(eval_seed, Stream::kCem,
                        static_cast<std::uint64_t>(ep))),
        0.0});
  }

  const std::int64_t pix =
      static_cast<std::int64_t>(nc.image_size) * nc.image_size * 3;
  std::vector<int> active;
  while (true) {
    active.clear();
    for (int ep = 0; ep < episodes; ++ep)
      if (!eps[static_cast<std::size_t>(ep)].env.done()) active.push_back(ep);
    if (active.empty()) break;

    const int n = static_cast<int>(active.size());
    std::vector<double> imgs(static_cast<std::size_t>(n) * pix);
    std::vector<const GraspState*> states(static_cast<std::size_t>(n));
    std::vector<Rng*> rngs(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      Episode& e = eps[static_cast<std::size_t>(active[i])];
      const GraspState& s = e.env.state();
      std::copy(s.image.begin(), s.image.end(),
                imgs.begin() + static_cast<std::size_t>(i) * pix);
      states[static_cast<std::size_t>(i)] = &s;
      rngs[static_cast<std::size_t>(i)] = &e.cem_rng;
    }
    const TrunkOut trunk = net.trunk(Tensor::from_data(
        {n, nc.image_size, nc.image_size, 3}, std::move(imgs)));
    const auto actions = cem_maximize_batch(net, trunk, states, cem, rngs);
    for (int i = 0; i < n; ++i) {
      Episode& e = eps[static_cast<std::size_t>(active[i])];
      e.ret += e.env.step(actions[static_cast<std::size_t>(i)]).reward;
    }
  }

  int successes = 0;
  double return_sum = 0.0;
  for (const Episode& e : eps) {
    successes += e.env.succeeded() ? 1 : 0;
    return_sum += e.ret;
  }
  return finalize(episodes, successes, return_sum);
}

}  // namespace vnas
