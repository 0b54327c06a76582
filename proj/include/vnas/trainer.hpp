#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "vnas/cem.hpp"
#include "vnas/dataset.hpp"
#include "vnas/env.hpp"
#include "vnas/eval.hpp"
#include "vnas/qnet.hpp"
#include "vnas/tensor.hpp"

namespace vnas {

// The Bellman backup, shared by the training loop and the tabular
// fixed-point tests: y = r + gamma * (1 - done) * max_a' Q(s', a').
inline double bellman_target(double r, double gamma, bool done,
                             double max_next_q) {
  return done ? r : r + gamma * max_next_q;
}

// SGD with classical momentum and L2 weight decay folded into the gradient:
//   v <- momentum * v - lr * (g + l2 * w);  w <- w + v
// Applied uniformly to network weights and architecture logits (the "single
// loop" joint update). Velocity is keyed by parameter name, so the optimizer
// survives nets whose parameter sets differ as long as names are stable.
class SgdMomentum {
 public:
  SgdMomentum(double lr, double momentum, double l2);
  // One update from accumulated gradients, then clears them. Parameters
  // whose gradient was never touched this step still receive L2 decay.
  void step(QNetwork& net);

 private:
  double lr_, momentum_, l2_;
  std::unordered_map<std::string, std::vector<double>> velocity_;
};

struct TrainerConfig {
  std::int64_t steps = 20000;  // desk-scale training budget
  int batch_size = 32;
  double lr = 0.0044;
  double momentum = 0.958;
  double l2 = 9e-5;
  double gamma = 0.9;
  std::int64_t target_refresh = 200;  // steps between target-net copies
  std::int64_t eval_interval = 1000;  // 0 = only the initial/final eval
  int eval_episodes = 20;             // 0 disables evaluation entirely
  std::int64_t checkpoint_interval = 0;  // 0 = no periodic checkpoints
  CemConfig cem;                         // target maximization + greedy eval

  void validate() const;
};

// Memo of CEM-maximized next-state values for the current target network.
// Between refreshes the target net is frozen, so max_a' Q_target(s', a') is
// a pure function of the transition index — each one is computed at most
// once per refresh period.
class TargetCache {
 public:
  explicit TargetCache(std::int64_t n);
  void invalidate();  // call on every target-network refresh
  bool has(std::int64_t i) const;
  double get(std::int64_t i) const;
  void put(std::int64_t i, double v);

 private:
  std::vector<std::int64_t> stamp_;
  std::vector<double> value_;
  std::int64_t epoch_ = 1;
};

// A sampled batch with its constant Bellman targets. `targets` carries no
// gradient: the target network is frozen by construction.
struct BellmanBatch {
  Tensor images;   // (B, S, S, 3)
  Tensor actions;  // (B, kNetActionDim)
  Tensor targets;  // (B, 1)
};

// Assembles images/actions and computes y = r + gamma*(1-done)*Q_target(s',
// a*) with a* from per-transition-seeded CEM. The CEM stream for index i in
// refresh period `epoch` is derive_seed(seed, kCem, epoch*(N+1)+i), making
// every target a pure function of (transition, target net, epoch) — batch
// composition and sampling order cannot change it. `cache` (optional)
// memoizes values within the period.
BellmanBatch make_bellman_batch(const QNetwork& target_net,
                                const ReplayBuffer& data,
                                const std::vector<std::int64_t>& idx,
                                double gamma, const CemConfig& cem,
                                std::uint64_t seed, std::uint64_t epoch,
                                TargetCache* cache);

// Mean squared error between Q(s, a) and the fixed targets.
Tensor bellman_loss(const QNetwork& net, const BellmanBatch& batch);

struct EvalPoint {
  std::int64_t step = 0;
  double success_rate = 0.0;
  double ci_half_width = 0.0;
};

// Everything the acceptance gate needs to audit a run. Architecture metrics
// are indexed by update count k = 0..steps (entry 0 = initialization);
// losses[k-1] is the pre-update loss of step k.
struct TrainResult {
  std::vector<double> losses;
  std::vector<std::vector<double>> site_entropy;  // [k][site], empty: baseline
  std::vector<std::vector<int>> site_argmax;      // [k][site]
  std::vector<int> edges_retained;                // [k]
  std::vector<EvalPoint> evals;
  std::int64_t softmax_violations = 0;  // |sum(mix) - 1| > 1e-12 occurrences
  std::int64_t edge_violations = 0;     // edge weight outside (0, 1)
  std::uint64_t dataset_hash_before = 0;
  std::uint64_t dataset_hash_after = 0;
  double final_success = 0.0;  // last evaluation, -1 when eval is disabled
  double final_ci = 0.0;
};

// Offline Q-learning over a fixed buffer: sample batch, build targets from
// the frozen copy, one joint SGD-momentum step; refresh the copy every
// target_refresh steps. Streams metrics to `metrics_csv_path` per step
// (empty path = no file): step, loss, eval_success, entropy_site_*,
// edges_retained. With a non-empty `checkpoint_prefix` and a positive
// checkpoint_interval, writes "<prefix><step>.bin" snapshots mid-run.
// Throws NumericError on a non-finite loss.
TrainResult train_q_network(QNetwork& net, const ReplayBuffer& data,
                            const TrainerConfig& cfg,
                            const EnvConfig& env_cfg, std::uint64_t seed,
                            const std::string& metrics_csv_path,
                            const std::string& checkpoint_prefix = "");

}  // namespace vnas
