#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "vnas/common.hpp"
#include "vnas/rng.hpp"

namespace vnas {

// Flat action record: dx, dy, dz, rot_sin, rot_cos, open, close.
inline constexpr int kActionFlatDim = 7;
// What the Q-network consumes: the flat action plus the state scalars
// (gripper_state, height) appended.
inline constexpr int kNetActionDim = kActionFlatDim + 2;

// One gripper command. Translation is in step units (each component in
// [-1,1], scaled by EnvConfig::step_scale per step); rotation is the target
// pose on the unit circle; the gripper command is exactly one of open/close.
struct GraspAction {
  double dx = 0.0, dy = 0.0, dz = 0.0;
  double rot_sin = 0.0, rot_cos = 1.0;
  int gripper_command = 0;  // 0 = open, 1 = close

  std::array<double, kActionFlatDim> flat() const;
  // Strict decode: translation within bounds, rotation on the unit circle
  // within 1e-6, command exactly one-hot.
  static GraspAction from_flat(const std::array<double, kActionFlatDim>& a);
};

// Maps an arbitrary 7-vector onto the valid action manifold: translation
// clipped to [-1,1], rotation renormalized to the unit circle (a zero vector
// falls back to (0,1)), gripper command argmax-one-hot (ties open).
GraspAction project_action(const double* a);

// Uniform-random valid action (translation uniform, pose angle uniform,
// command a fair coin). Draw order is part of the determinism contract.
GraspAction random_grasp_action(Rng& rng);

// What the agent observes: a rendered top-down image plus two scalars.
struct GraspState {
  std::vector<double> image;  // size*size*3, row-major HWC, values in [0,1]
  int gripper_state = 0;      // 1 = closed
  double height = 0.0;        // gripper z in [0,1]
};

// The 9-vector the Q-network consumes for (s, a).
std::array<double, kNetActionDim> net_action_input(const GraspAction& a,
                                                   const GraspState& s);

struct EnvConfig {
  int image_size = 32;
  int num_objects = 2;
  int max_steps = 15;
  double step_scale = 0.25;    // world units per unit translation command
  double pick_radius = 0.13;   // close within this of an object to attach
  double attach_max_z = 0.45;  // gripper must be low to pick
  double lift_height = 0.55;   // held object above this = success
  double start_z = 0.3;
  double step_penalty = -0.01;
  double success_reward = 1.0;

  void validate() const;
};

struct StepResult {
  GraspState state;
  double reward = 0.0;
  bool done = false;
};

// Deterministic desk-top grasping kinematics with a software renderer.
//
// The renderer deliberately breaks translation invariance: R carries a
// horizontal and G a vertical brightness ramp, objects add to R, the open
// gripper cross adds to G, the closed cross to B, and a held object draws
// magenta at the gripper with cross brightness encoding height. After one
// relu conv + GAP those channels make absolute positions linearly
// decodable, which is what lets a conv tower learn this task at all.
class GraspEnv {
 public:
  // Draws object placement from rng; the gripper starts open at the center.
  GraspEnv(const EnvConfig& cfg, Rng& rng);

  const EnvConfig& config() const { return cfg_; }
  const GraspState& state() const { return state_; }
  bool done() const { return done_; }
  bool succeeded() const { return success_; }
  int steps_taken() const { return steps_; }
  bool holding() const { return holding_ >= 0; }

  // Kinematics: translate (clipped to the tray), set pose, then apply the
  // gripper command: close attaches the nearest object within pick_radius
  // when low enough, open releases. A held object above lift_height ends
  // the episode with the success reward; every step costs step_penalty.
  StepResult step(const GraspAction& action);

  // Scripted near-optimal policy: approach the nearest object, close, lift.
  // `noise` jitters translation and pose but never the command script.
  GraspAction expert_action(double noise, Rng& rng) const;

  // introspection for tests and renders
  const std::vector<std::array<double, 2>>& objects() const {
    return objects_;
  }
  std::array<double, 3> gripper() const { return {gx_, gy_, z_}; }

 private:
  void render();

  EnvConfig cfg_;
  std::vector<std::array<double, 2>> objects_;
  double gx_ = 0.5, gy_ = 0.5, z_ = 0.0, theta_ = 0.0;
  bool closed_ = false;
  int holding_ = -1;  // object index, -1 when empty
  int steps_ = 0;
  bool done_ = false;
  bool success_ = false;
  GraspState state_;
};

}  // namespace vnas
