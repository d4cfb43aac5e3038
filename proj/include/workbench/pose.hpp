#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace workbench {

/// Rigid transform: position in meters, orientation as a unit quaternion.
struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();

  static Pose identity() { return {}; }

  /// URDF convention: fixed-axis roll about x, then pitch about y, then yaw about z.
  static Pose from_xyz_rpy(const Eigen::Vector3d& xyz, const Eigen::Vector3d& rpy) {
    Pose p;
    p.position = xyz;
    p.orientation = Eigen::AngleAxisd(rpy.z(), Eigen::Vector3d::UnitZ()) *
                    Eigen::AngleAxisd(rpy.y(), Eigen::Vector3d::UnitY()) *
                    Eigen::AngleAxisd(rpy.x(), Eigen::Vector3d::UnitX());
    p.orientation.normalize();
    return p;
  }

  Eigen::Matrix3d rotation() const { return orientation.toRotationMatrix(); }

  Eigen::Vector3d rpy() const {
    const Eigen::Matrix3d r = rotation();
    const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
    if (std::abs(std::cos(pitch)) < 1e-12) {
      // gimbal lock: fold yaw into roll
      return {std::atan2(-r(1, 2), r(1, 1)), pitch, 0.0};
    }
    return {std::atan2(r(2, 1), r(2, 2)), pitch, std::atan2(r(1, 0), r(0, 0))};
  }

  Eigen::Vector3d transform_point(const Eigen::Vector3d& p) const {
    return orientation * p + position;
  }

  Pose inverse() const {
    Pose inv;
    inv.orientation = orientation.conjugate();
    inv.position = -(inv.orientation * position);
    return inv;
  }

  Pose operator*(const Pose& rhs) const {
    Pose out;
    out.position = orientation * rhs.position + position;
    out.orientation = (orientation * rhs.orientation).normalized();
    return out;
  }
};

/// Rotation angle (rad, in [0, pi]) of a.orientation^-1 * b.orientation.
inline double rotation_angle_between(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
  const Eigen::Quaterniond rel = a.conjugate() * b;
  return 2.0 * std::atan2(rel.vec().norm(), std::abs(rel.w()));
}

/// Rotation vector (axis * angle) taking `from` onto `to`, expressed in the world frame.
inline Eigen::Vector3d rotation_error(const Eigen::Quaterniond& from, const Eigen::Quaterniond& to) {
  Eigen::Quaterniond rel = to * from.conjugate();
  if (rel.w() < 0.0) rel.coeffs() *= -1.0;
  const double sin_half = rel.vec().norm();
  if (sin_half < 1e-15) return 2.0 * rel.vec();
  const double angle = 2.0 * std::atan2(sin_half, rel.w());
  return rel.vec() * (angle / sin_half);
}

}  // namespace workbench
