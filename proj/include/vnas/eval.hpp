#pragma once

#include <cstdint>
#include <functional>

#include "vnas/cem.hpp"
#include "vnas/env.hpp"
#include "vnas/qnet.hpp"
#include "vnas/rng.hpp"

namespace vnas {

struct EvalResult {
  int episodes = 0;
  int successes = 0;
  double success_rate = 0.0;
  double ci_half_width = 0.0;  // 95% binomial, normal approximation
  double mean_return = 0.0;    // undiscounted mean episode return
};

// A policy driven against a live environment. The env reference lets the
// scripted expert read its own kinematic state; learned policies should only
// touch env.state().
using RolloutPolicy = std::function<GraspAction(const GraspEnv&, Rng&)>;

// Rolls `episodes` fresh randomly-placed environments under `policy`.
// Episode k's environment and policy draws come from counter-derived streams
// of derive_seed(seed, kEval), so results are independent of execution order
// and thread count. Parallelizes over episodes.
EvalResult evaluate_rollouts(const RolloutPolicy& policy,
                             const EnvConfig& env_cfg, int episodes,
                             std::uint64_t seed);

// Greedy-CEM policy of a Q-network under the same seeding scheme. Episodes
// advance in lockstep so each round's CEM searches share one batched trunk
// pass; per-episode rng isolation keeps the outcome identical to rolling
// each episode alone.
EvalResult evaluate_policy(const QNetwork& net, const EnvConfig& env_cfg,
                           int episodes, std::uint64_t seed,
                           const CemConfig& cem);

}  // namespace vnas
