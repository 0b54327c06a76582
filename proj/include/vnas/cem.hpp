#pragma once

#include <cstdint>
#include <functional>

#include "vnas/env.hpp"
#include "vnas/qnet.hpp"
#include "vnas/rng.hpp"

namespace vnas {

// Cross-entropy action optimizer settings. The defaults are sized so the
// optimizer lands within 0.05 (sup norm) of the true argmax on smooth
// single-peak landscapes: smaller populations collapse the per-dimension
// variance before the elites localize the peak, and extra iterations do not
// recover from that. init_stddev spreads the first population wide enough to
// cover the [-1,1] translation box from the neutral mean.
struct CemConfig {
  int population = 128;
  int iterations = 4;
  double elite_fraction = 0.1;
  double init_stddev = 0.8;
  double var_reg = 1e-6;  // diagonal added after every refit

  void validate() const;
};

// Scores n candidate actions (row-major n x 7 flat records, already on the
// valid action manifold) into out[0..n).
using ActionScorer =
    std::function<void(const double* flat, int n, double* out)>;

// Iterative Gaussian fit over the flat action space: sample a population,
// project every sample onto the action manifold, score, refit mean/variance
// on the elite fraction, repeat; returns the final mean projected. Draw
// order (candidate-major, 7 normals each) is part of the determinism
// contract.
GraspAction cem_maximize(const ActionScorer& score, const CemConfig& cfg,
                         Rng& rng);

// Lockstep batch over independent searches: row u of `trunk` pairs with
// *states[u], and search u draws only from *rngs[u], so every result is
// bit-identical to running that search alone — batching is purely an
// optimization that fuses all tail evaluations of an iteration into one
// batched forward. Used to share one conv-tower pass across a training
// batch of Bellman targets or a round of evaluation episodes.
std::vector<GraspAction> cem_maximize_batch(
    const QNetwork& q, const TrunkOut& trunk,
    const std::vector<const GraspState*>& states, const CemConfig& cfg,
    const std::vector<Rng*>& rngs);

// Maximizes the action-dependent tail of `q` against row `row` of a cached
// trunk evaluation; `s` supplies the state scalars appended to each action.
GraspAction cem_maximize_tail(const QNetwork& q, const TrunkOut& trunk,
                              std::int64_t row, const GraspState& s,
                              const CemConfig& cfg, Rng& rng);

// Full single-state maximization: one trunk pass, then cem_maximize_tail.
GraspAction cem_maximize_q(const QNetwork& q, const GraspState& s,
                           const CemConfig& cfg, Rng& rng);

}  // namespace vnas
