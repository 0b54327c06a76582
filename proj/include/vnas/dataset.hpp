#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vnas/env.hpp"
#include "vnas/rng.hpp"

namespace vnas {

// One offline experience tuple.
struct Transition {
  GraspState s;
  GraspAction a;
  double r = 0.0;
  GraspState s_next;
  bool done = false;
};

struct DatasetStats {
  std::int64_t episodes = 0;
  std::int64_t transitions = 0;
  double success_fraction = 0.0;  // fraction of episodes ending in success
  std::uint64_t seed = 0;
};

// Fixed offline experience set. Immutable after construction: training may
// only read and sample; the canonical hash is computed once and lets tests
// prove the buffer never changed.
class ReplayBuffer {
 public:
  ReplayBuffer(std::vector<Transition> transitions, DatasetStats stats,
               int image_size);

  std::int64_t size() const {
    return static_cast<std::int64_t>(transitions_.size());
  }
  const Transition& at(std::int64_t i) const;
  int image_size() const { return image_size_; }
  const DatasetStats& stats() const { return stats_; }

  // Uniform sampling with replacement; fully determined by the caller's rng.
  std::vector<std::int64_t> sample_indices(Rng& rng, int batch) const;

  // FNV-1a over the canonical byte stream of every transition in order.
  std::uint64_t hash() const { return hash_; }

 private:
  std::vector<Transition> transitions_;
  DatasetStats stats_;
  int image_size_ = 0;
  std::uint64_t hash_ = 0;
};

// Rolls out `n_episodes` independent episodes and collects every transition.
// The first round(expert_fraction * n) episodes follow the noisy scripted
// expert, the rest act uniformly at random. Episodes parallelize over
// threads; results are bit-identical for any thread count.
ReplayBuffer generate_dataset(const EnvConfig& env_cfg,
                              std::int64_t n_episodes, double expert_fraction,
                              double noise, std::uint64_t seed);

// Binary dataset file: magic "VNBF", version, image size, episode/transition
// counts, stats, then fixed-width fp64 records (state raster + scalars,
// action fields, reward, next-state raster + scalars, done flag).
void save_dataset(const std::string& path, const ReplayBuffer& buffer);
ReplayBuffer load_dataset(const std::string& path);

}  // namespace vnas
