#include "vnas/env.hpp"

#include <algorithm>
#include <cmath>

namespace vnas {

namespace {

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }
double clamp1(double v) { return std::min(1.0, std::max(-1.0, v)); }

// renderer geometry (world units; the tray is the unit square)
constexpr double kObjectRadius = 0.05;
constexpr double kCrossArm = 0.11;
constexpr double kCrossWidth = 0.03;
constexpr double kRampLo = 0.04;
constexpr double kRampHi = 0.22;
constexpr double kObjectIntensity = 0.7;

}  // namespace

std::array<double, kActionFlatDim> GraspAction::flat() const {
  return {dx,
          dy,
          dz,
          rot_sin,
          rot_cos,
          gripper_command == 0 ? 1.0 : 0.0,
          gripper_command == 1 ? 1.0 : 0.0};
}

GraspAction GraspAction::from_flat(
    const std::array<double, kActionFlatDim>& a) {
  for (int i = 0; i < 3; ++i)
    VNAS_CHECK(a[static_cast<std::size_t>(i)] >= -1.0 &&
                   a[static_cast<std::size_t>(i)] <= 1.0,
               ValueError, "translation component out of [-1,1]");
  const double norm = std::hypot(a[3], a[4]);
  VNAS_CHECK(std::abs(norm - 1.0) <= 1e-6, ValueError,
             "rotation not on the unit circle");
  const bool open_hot = a[5] == 1.0 && a[6] == 0.0;
  const bool close_hot = a[5] == 0.0 && a[6] == 1.0;
  VNAS_CHECK(open_hot || close_hot, ValueError,
             "gripper command not one-hot");
  GraspAction act;
  act.dx = a[0];
  act.dy = a[1];
  act.dz = a[2];
  act.rot_sin = a[3];
  act.rot_cos = a[4];
  act.gripper_command = close_hot ? 1 : 0;
  return act;
}

GraspAction project_action(const double* a) {
  GraspAction act;
  act.dx = clamp1(a[0]);
  act.dy = clamp1(a[1]);
  act.dz = clamp1(a[2]);
  const double norm = std::hypot(a[3], a[4]);
  if (norm < 1e-12 || !std::isfinite(norm)) {
    act.rot_sin = 0.0;
    act.rot_cos = 1.0;
  } else {
    act.rot_sin = a[3] / norm;
    act.rot_cos = a[4] / norm;
  }
  act.gripper_command = a[6] > a[5] ? 1 : 0;
  return act;
}

GraspAction random_grasp_action(Rng& rng) {
  GraspAction a;
  a.dx = rng.uniform(-1.0, 1.0);
  a.dy = rng.uniform(-1.0, 1.0);
  a.dz = rng.uniform(-1.0, 1.0);
  const double theta = rng.uniform(0.0, 2.0 * M_PI);
  a.rot_sin = std::sin(theta);
  a.rot_cos = std::cos(theta);
  a.gripper_command = rng.uniform() < 0.5 ? 0 : 1;
  return a;
}

std::array<double, kNetActionDim> net_action_input(const GraspAction& a,
                                                   const GraspState& s) {
  const auto f = a.flat();
  std::array<double, kNetActionDim> out{};
  std::copy(f.begin(), f.end(), out.begin());
  out[kActionFlatDim] = static_cast<double>(s.gripper_state);
  out[kActionFlatDim + 1] = s.height;
  return out;
}

void EnvConfig::validate() const {
  VNAS_CHECK(image_size >= 8, ConfigError, "image_size too small");
  VNAS_CHECK(num_objects >= 1, ConfigError, "need at least one object");
  VNAS_CHECK(max_steps >= 1, ConfigError, "max_steps must be positive");
  VNAS_CHECK(step_scale > 0.0, ConfigError, "step_scale must be positive");
  VNAS_CHECK(pick_radius > 0.0, ConfigError, "pick_radius must be positive");
  VNAS_CHECK(lift_height > attach_max_z, ConfigError,
             "lift_height must exceed attach_max_z");
  VNAS_CHECK(start_z >= 0.0 && start_z <= attach_max_z, ConfigError,
             "start_z must allow picking");
}

GraspEnv::GraspEnv(const EnvConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  gx_ = 0.5;
  gy_ = 0.5;
  z_ = cfg.start_z;
  theta_ = 0.0;
  // rejection-sample object placement: inside the tray margin, separated
  // from each other and from the gripper start so no pick is free
  constexpr double kMargin = 0.15;
  constexpr double kMinSeparation = 0.2;
  constexpr double kMinFromGripper = 0.18;
  for (int i = 0; i < cfg.num_objects; ++i) {
    for (int attempt = 0;; ++attempt) {
      const double ox = rng.uniform(kMargin, 1.0 - kMargin);
      const double oy = rng.uniform(kMargin, 1.0 - kMargin);
      bool ok = std::hypot(ox - gx_, oy - gy_) >= kMinFromGripper;
      for (const auto& o : objects_)
        ok = ok && std::hypot(ox - o[0], oy - o[1]) >= kMinSeparation;
      if (ok || attempt >= 200) {
        objects_.push_back({ox, oy});
        break;
      }
    }
  }
  render();
}

StepResult GraspEnv::step(const GraspAction& action) {
  VNAS_CHECK(!done_, ValueError, "step() on a finished episode");
  // clip invalid values onto the manifold rather than failing
  GraspAction a = action;
  if (a.dx < -1.0 || a.dx > 1.0 || a.dy < -1.0 || a.dy > 1.0 ||
      a.dz < -1.0 || a.dz > 1.0) {
    log_msg(LogLevel::kDebug, "env: clipping out-of-range translation");
    a.dx = clamp1(a.dx);
    a.dy = clamp1(a.dy);
    a.dz = clamp1(a.dz);
  }
  const double norm = std::hypot(a.rot_sin, a.rot_cos);
  if (!(std::abs(norm - 1.0) <= 1e-6)) {
    log_msg(LogLevel::kDebug, "env: renormalizing rotation");
    if (norm < 1e-12 || !std::isfinite(norm)) {
      a.rot_sin = 0.0;
      a.rot_cos = 1.0;
    } else {
      a.rot_sin /= norm;
      a.rot_cos /= norm;
    }
  }

  ++steps_;
  gx_ = clamp01(gx_ + cfg_.step_scale * a.dx);
  gy_ = clamp01(gy_ + cfg_.step_scale * a.dy);
  z_ = clamp01(z_ + cfg_.step_scale * a.dz);
  theta_ = std::atan2(a.rot_sin, a.rot_cos);
  if (holding_ >= 0) objects_[static_cast<std::size_t>(holding_)] = {gx_, gy_};

  if (a.gripper_command == 1) {
    closed_ = true;
    if (holding_ < 0 && z_ <= cfg_.attach_max_z) {
      int best = -1;
      double best_d = cfg_.pick_radius;
      for (std::size_t i = 0; i < objects_.size(); ++i) {
        const double d = std::hypot(objects_[i][0] - gx_,
                                    objects_[i][1] - gy_);
        if (d <= best_d) {
          best_d = d;
          best = static_cast<int>(i);
        }
      }
      if (best >= 0) {
        holding_ = best;
        objects_[static_cast<std::size_t>(best)] = {gx_, gy_};
      }
    }
  } else {
    closed_ = false;
    holding_ = -1;  // released in place
  }

  success_ = holding_ >= 0 && z_ >= cfg_.lift_height;
  done_ = success_ || steps_ >= cfg_.max_steps;
  const double reward =
      cfg_.step_penalty + (success_ ? cfg_.success_reward : 0.0);
  render();
  return {state_, reward, done_};
}

GraspAction GraspEnv::expert_action(double noise, Rng& rng) const {
  GraspAction a;
  if (holding_ >= 0) {
    a.dz = 1.0;
    a.gripper_command = 1;  // keep the object gripped while lifting
  } else {
    // nearest object
    double tx = objects_[0][0], ty = objects_[0][1], best = 1e9;
    for (const auto& o : objects_) {
      const double d = std::hypot(o[0] - gx_, o[1] - gy_);
      if (d < best) {
        best = d;
        tx = o[0];
        ty = o[1];
      }
    }
    if (best <= cfg_.pick_radius * 0.5 && z_ <= cfg_.attach_max_z) {
      a.gripper_command = 1;  // close on it
    } else {
      a.dx = clamp1((tx - gx_) / cfg_.step_scale);
      a.dy = clamp1((ty - gy_) / cfg_.step_scale);
      if (z_ > cfg_.attach_max_z)
        a.dz = clamp1((cfg_.start_z - z_) / cfg_.step_scale);
      a.gripper_command = 0;
    }
  }
  if (noise > 0.0) {
    a.dx = clamp1(a.dx + rng.uniform(-noise, noise));
    a.dy = clamp1(a.dy + rng.uniform(-noise, noise));
    a.dz = clamp1(a.dz + rng.uniform(-noise, noise));
    const double jitter = noise * rng.uniform(-M_PI, M_PI);
    a.rot_sin = std::sin(jitter);
    a.rot_cos = std::cos(jitter);
  }
  return a;
}

void GraspEnv::render() {
  const int s = cfg_.image_size;
  state_.image.assign(static_cast<std::size_t>(s) * s * 3, 0.0);
  state_.gripper_state = closed_ ? 1 : 0;
  state_.height = z_;
  // brightness encodes height; peak value stays below the clip point even
  // on the brightest ramp row (0.22 + 0.75 < 1)
  const double cross_gain = 0.25 + 0.5 * z_;
  const double ct = std::cos(theta_), st = std::sin(theta_);
  for (int iy = 0; iy < s; ++iy) {
    for (int ix = 0; ix < s; ++ix) {
      const double px = (ix + 0.5) / s;
      const double py = (iy + 0.5) / s;
      double r = kRampLo + (kRampHi - kRampLo) * px;
      double g = kRampLo + (kRampHi - kRampLo) * py;
      double b = kRampLo;
      // loose objects add to R
      for (std::size_t i = 0; i < objects_.size(); ++i) {
        if (static_cast<int>(i) == holding_) continue;
        const double d2 =
            (px - objects_[i][0]) * (px - objects_[i][0]) +
            (py - objects_[i][1]) * (py - objects_[i][1]);
        if (d2 <= kObjectRadius * kObjectRadius) r += kObjectIntensity;
      }
      // a held object rides at the gripper and draws magenta
      if (holding_ >= 0) {
        const double d2 =
            (px - gx_) * (px - gx_) + (py - gy_) * (py - gy_);
        if (d2 <= kObjectRadius * kObjectRadius) {
          r += kObjectIntensity;
          b += kObjectIntensity;
        }
      }
      // gripper cross, rotated by the pose angle
      const double rx = px - gx_, ry = py - gy_;
      const double u = ct * rx + st * ry;
      const double v = -st * rx + ct * ry;
      const bool in_cross =
          (std::abs(u) <= kCrossArm && std::abs(v) <= kCrossWidth) ||
          (std::abs(v) <= kCrossArm && std::abs(u) <= kCrossWidth);
      if (in_cross) {
        if (closed_)
          b += cross_gain;
        else
          g += cross_gain;
      }
      const auto base = (static_cast<std::size_t>(iy) * s + ix) * 3;
      state_.image[base + 0] = clamp01(r);
      state_.image[base + 1] = clamp01(g);
      state_.image[base + 2] = clamp01(b);
    }
  }
}

}  // namespace vnas
