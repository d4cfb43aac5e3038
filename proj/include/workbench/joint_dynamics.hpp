#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "workbench/error.hpp"

namespace workbench {

/// Per-joint drive gains and targets. Units follow the joint: rad / N*m for
/// rotary joints, m / N for prismatic ones.
struct DriveParams {
  double stiffness = 100.0;
  double damping = 20.0;
  double force_limit = 1000.0;  // may be +infinity
  double target_position = 0.0;
  double target_velocity = 0.0;
  double inertia = 1.0;

  bool operator==(const DriveParams&) const = default;
};

struct JointMotionState {
  double position = 0.0;
  double velocity = 0.0;

  bool operator==(const JointMotionState&) const = default;
};

inline void validate(const DriveParams& p) {
  if (!(p.stiffness >= 0.0) || !(p.damping >= 0.0) || !(p.force_limit >= 0.0) || !(p.inertia > 0.0) ||
      !std::isfinite(p.stiffness) || !std::isfinite(p.damping) || !std::isfinite(p.inertia))
    throw Error(ErrorCode::InvalidValue, "drive params need stiffness, damping, force_limit >= 0 and inertia > 0");
}

/// Force/torque the drive applies: spring toward the target position plus
/// damping toward the target velocity, saturated at +-force_limit.
inline double drive_effect(const DriveParams& p, const JointMotionState& s) {
  const double raw = p.stiffness * (p.target_position - s.position) + p.damping * (p.target_velocity - s.velocity);
  return std::clamp(raw, -p.force_limit, p.force_limit);
}

/// One semi-implicit Euler step.
inline JointMotionState step(const JointMotionState& s, const DriveParams& p, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidValue, "step dt must be positive");
  const double accel = drive_effect(p, s) / p.inertia;
  JointMotionState next;
  next.velocity = s.velocity + accel * dt;
  next.position = s.position + next.velocity * dt;
  if (!std::isfinite(next.position) || !std::isfinite(next.velocity))
    throw Error(ErrorCode::NonFiniteState, "joint state became non-finite");
  return next;
}

}  // namespace workbench
