#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "workbench/error.hpp"
#include "workbench/pose.hpp"
#include "workbench/trajectory.hpp"
#include "workbench/urdf.hpp"

namespace workbench {

using JointVector = Eigen::VectorXd;
using Jacobian = Eigen::Matrix<double, 6, Eigen::Dynamic>;

inline JointVector to_joint_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> to_std_vector(const JointVector& v) { return {v.data(), v.data() + v.size()}; }

namespace detail {

inline Pose joint_motion(JointKind kind, const Eigen::Vector3d& axis, double qi) {
  Pose motion;
  switch (kind) {
    case JointKind::Revolute:
    case JointKind::Continuous:
      motion.orientation = Eigen::Quaterniond(Eigen::AngleAxisd(qi, axis));
      break;
    case JointKind::Prismatic:
      motion.position = axis * qi;
      break;
    case JointKind::Fixed:
      break;
  }
  return motion;
}

inline void check_dof(const JointChain& chain, Eigen::Index size) {
  if (static_cast<std::size_t>(size) != chain.dof())
    throw Error(ErrorCode::DimensionMismatch, "joint vector has " + std::to_string(size) + " entries, chain has dof " +
                                                  std::to_string(chain.dof()));
}

}  // namespace detail

/// Parent-to-child transform of a single joint at position qi (ignored for fixed joints).
inline Pose joint_transform(const Joint& joint, double qi) {
  return joint.origin.pose() * detail::joint_motion(joint.kind, joint.axis, qi);
}

struct FkResult {
  Pose ee;
  std::vector<Pose> link_poses;  // matches JointChain::frame_links()
};

inline FkResult forward_kinematics(const JointChain& chain, const JointVector& q) {
  detail::check_dof(chain, q.size());
  FkResult out;
  Pose current;
  out.link_poses.reserve(chain.dof() + 2);
  out.link_poses.push_back(current);
  for (std::size_t i = 0; i < chain.dof(); ++i) {
    const ChainJoint& j = chain.joints[i];
    current = current * j.offset * detail::joint_motion(j.kind, j.axis, q[static_cast<Eigen::Index>(i)]);
    out.link_poses.push_back(current);
  }
  const bool trailing = chain.joints.empty() ? chain.base_link != chain.tip_link
                                             : chain.joints.back().child_link != chain.tip_link;
  current = current * chain.tip_offset;
  if (trailing) out.link_poses.push_back(current);
  out.ee = current;
  return out;
}

/// Geometric Jacobian in the chain base frame: rows 0-2 linear, rows 3-5 angular.
inline Jacobian jacobian(const JointChain& chain, const JointVector& q) {
  detail::check_dof(chain, q.size());
  const std::size_t n = chain.dof();
  std::vector<Pose> joint_frames(n);
  Pose current;
  for (std::size_t i = 0; i < n; ++i) {
    const ChainJoint& j = chain.joints[i];
    current = current * j.offset;
    joint_frames[i] = current;
    current = current * detail::joint_motion(j.kind, j.axis, q[static_cast<Eigen::Index>(i)]);
  }
  const Eigen::Vector3d ee = (current * chain.tip_offset).position;

  Jacobian jac(6, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d axis = joint_frames[i].orientation * chain.joints[i].axis;
    const auto col = static_cast<Eigen::Index>(i);
    if (chain.joints[i].kind == JointKind::Prismatic) {
      jac.block<3, 1>(0, col) = axis;
      jac.block<3, 1>(3, col).setZero();
    } else {
      jac.block<3, 1>(0, col) = axis.cross(ee - joint_frames[i].position);
      jac.block<3, 1>(3, col) = axis;
    }
  }
  return jac;
}

struct IkOptions {
  int max_iter = 200;
  double tol = 1e-4;
  double damping = 0.05;
  double orientation_weight = 0.5;
};

struct IkResult {
  JointVector q;
  double residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

/// Position error (m) plus weighted rotation angle (rad).
inline double pose_residual(const Pose& current, const Pose& target, double orientation_weight) {
  return (target.position - current.position).norm() +
         orientation_weight * rotation_angle_between(current.orientation, target.orientation);
}

inline JointVector clamp_to_limits(const JointChain& chain, JointVector q) {
  for (std::size_t i = 0; i < chain.dof(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    q[k] = chain.joints[i].clamp(q[k]);
  }
  return q;
}

/// Damped least squares from q0 with joint-limit clamping after every step.
/// A step that increases the residual is rejected and retried with ten times
/// the damping; accepted steps relax it back toward opts.damping.
/// A result with converged == false carries the best configuration seen.
inline IkResult solve_ik(const JointChain& chain, const Pose& target, const JointVector& q0,
                         const IkOptions& opts = {}) {
  detail::check_dof(chain, q0.size());
  const Eigen::Index n = q0.size();
  const double w = opts.orientation_weight;
  double lambda = opts.damping;

  IkResult best;
  best.q = clamp_to_limits(chain, q0);
  Pose ee = forward_kinematics(chain, best.q).ee;
  best.residual = pose_residual(ee, target, w);
  for (int iter = 0;; ++iter) {
    best.iterations = iter;
    if (best.residual <= opts.tol) {
      best.converged = true;
      return best;
    }
    if (iter >= opts.max_iter || n == 0) break;

    Eigen::Matrix<double, 6, 1> err;
    err.head<3>() = target.position - ee.position;
    err.tail<3>() = w * rotation_error(ee.orientation, target.orientation);
    Jacobian jac = jacobian(chain, best.q);
    jac.bottomRows<3>() *= w;
    const Eigen::Matrix<double, 6, 6> jjt =
        jac * jac.transpose() + lambda * lambda * Eigen::Matrix<double, 6, 6>::Identity();
    const JointVector dq = jac.transpose() * jjt.ldlt().solve(err);
    const JointVector q = clamp_to_limits(chain, best.q + dq);
    const Pose next = forward_kinematics(chain, q).ee;
    const double residual = pose_residual(next, target, w);
    if (residual < best.residual) {
      best.q = q;
      best.residual = residual;
      ee = next;
      lambda = std::max(opts.damping, lambda * 0.1);
    } else {
      lambda = std::min(lambda * 10.0, 1e6);
    }
  }
  return best;
}

/// Straight line in joint space, timed so the slowest joint moves at its velocity limit.
inline Trajectory interpolate_joint_path(const JointVector& q_from, const JointVector& q_to,
                                         const std::vector<double>& velocity_limits, double dt) {
  if (q_from.size() != q_to.size() || static_cast<std::size_t>(q_from.size()) != velocity_limits.size())
    throw Error(ErrorCode::DimensionMismatch, "interpolate_joint_path: vector lengths differ");
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidValue, "interpolate_joint_path: dt must be positive");

  double duration = 0.0;
  for (Eigen::Index j = 0; j < q_from.size(); ++j) {
    const double delta = std::abs(q_to[j] - q_from[j]);
    if (delta == 0.0) continue;
    const double vmax = velocity_limits[static_cast<std::size_t>(j)];
    if (!(vmax > 0.0))
      throw Error(ErrorCode::ZeroVelocityLimit, "joint " + std::to_string(j) + " must move but has no velocity limit");
    duration = std::max(duration, delta / vmax);
  }

  Trajectory traj;
  auto push = [&](double t, const JointVector& q) {
    TrajectorySample s;
    s.t = t;
    s.q = to_std_vector(q);
    traj.samples.push_back(std::move(s));
  };
  push(0.0, q_from);
  if (duration == 0.0) return traj;

  const auto steps = static_cast<std::size_t>(std::ceil(duration / dt - 1e-6));
  for (std::size_t k = 1; k < steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    push(t, q_from + (q_to - q_from) * (t / duration));
  }
  push(duration, q_to);
  return traj;
}

}  // namespace workbench
