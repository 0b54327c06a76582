#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vnas/qnet.hpp"

namespace vnas {

struct GradCheckEntry {
  std::string name;          // op name or network parameter group
  double max_rel_err = 0.0;  // worst probed component
  std::int64_t probes = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;
  double tolerance = 1e-4;

  bool passed() const { return max_rel_err < tolerance; }
  void merge(const GradCheckReport& other);
};

// Central finite differences (fp64, eps 1e-5) against the tape's gradients,
// rel err = |fd - g| / max(|fd|, |g|, 1).
//
// Every differentiable op at small shapes, all components probed.
GradCheckReport check_op_gradients(std::uint64_t seed);

// Bellman-loss gradients of a full search supernet built from `cfg`,
// covering every parameter group — weights and architecture logits alike —
// with `probes` randomly chosen components per group.
GradCheckReport check_network_gradients(const NetworkConfig& cfg,
                                        std::uint64_t seed, int probes);

// The suite the CLI command and the acceptance gate share: all ops plus the
// default desk-scale search network.
GradCheckReport run_gradient_checks(std::uint64_t seed);

}  // namespace vnas
