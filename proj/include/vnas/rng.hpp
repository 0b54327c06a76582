#pragma once

#include <cstdint>
#include <string>

namespace vnas {

// Counter-based seed derivation: every subsystem gets its own stream derived
// from (master seed, stream tag), so adding an evaluation mid-run or
// reordering CEM calls can never shift the samples another subsystem sees.
std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                          std::uint64_t counter = 0);

// Stream tags. Fixed numbering is part of run reproducibility: renumbering
// changes every derived stream.
enum class Stream : std::uint64_t {
  kInit = 1,    // parameter initialization
  kEnv = 2,     // environment dynamics/noise during dataset generation
  kCem = 3,     // CEM sampling
  kSample = 4,  // minibatch index sampling
  kEval = 5,    // evaluation episode layouts
  kData = 6,    // dataset episode layouts / behavior-policy mixing
};

inline std::uint64_t derive_seed(std::uint64_t master, Stream s,
                                 std::uint64_t counter = 0) {
  return derive_seed(master, static_cast<std::uint64_t>(s), counter);
}

// Small deterministic generator (xoshiro256** core seeded via splitmix64).
// Hand-rolled distributions: std::normal_distribution is not guaranteed to
// produce identical streams across standard library versions, and run
// reproducibility is a contract here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n), n > 0.
  std::uint64_t uniform_int(std::uint64_t n);
  // Standard normal via Box-Muller (both values used, so sample count per
  // call is deterministic: one normal consumes one cached value or two
  // uniforms).
  double normal();
  double normal(double mean, double stddev);
  // Truncated standard normal on [lo, hi] by rejection; lo < hi required.
  double truncated_normal(double mean, double stddev, double lo, double hi);

 private:
  std::uint64_t s_[4];
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace vnas
