#pragma once

#include <cstdint>
#include <string>

#include "vnas/env.hpp"
#include "vnas/qnet.hpp"
#include "vnas/trainer.hpp"

namespace vnas {

// Dataset generation knobs; the file format itself lives in dataset.*.
// Defaults are sized so a fresh dataset lands near 20K transitions of mixed
// expert/random experience.
struct DataGenConfig {
  std::int64_t episodes = 2000;
  double expert_fraction = 0.5;
  double noise = 0.5;  // expert action jitter

  void validate() const;
};

// The single serialized source of truth for a run: every subsystem's
// parameters plus the root seed (split per subsystem via counter-derived
// streams). On disk this is JSON, nested by subsystem, with defaults-overlay
// semantics: absent keys keep their defaults, unknown keys are errors, and
// a resolved copy is written next to every run's outputs.
struct RunConfig {
  int version = 1;
  std::uint64_t seed = 1;
  NetworkConfig network;
  EnvConfig env;
  DataGenConfig dataset;
  TrainerConfig trainer;  // trainer.cem is the "cem" section

  // Per-section validation plus the cross-subsystem agreements (frame size,
  // channel count, action encoding).
  void validate() const;
};

RunConfig run_config_from_json(const std::string& text);
// Deterministic emission: sorted keys, two-space indent, trailing newline —
// identical configs serialize to identical bytes.
std::string run_config_to_json(const RunConfig& cfg);

RunConfig load_run_config(const std::string& path);
void save_run_config(const std::string& path, const RunConfig& cfg);

}  // namespace vnas
