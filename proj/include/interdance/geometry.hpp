#pragma once

#include "interdance/common.hpp"

namespace interdance {

/// Rodrigues' formula. Small angles fall back to the second-order series.
inline Mat3 rotation_from_axis_angle(const Vec3& v) {
  const double theta2 = v.squaredNorm();
  Mat3 k;
  k << 0.0, -v.z(), v.y(),  //
      v.z(), 0.0, -v.x(),   //
      -v.y(), v.x(), 0.0;
  if (theta2 < 1e-16) {
    return Mat3::Identity() + k + 0.5 * k * k;
  }
  const double theta = std::sqrt(theta2);
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / theta2;
  return Mat3::Identity() + a * k + b * k * k;
}

inline Vec3 axis_angle_from_rotation(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.axis() * aa.angle();
}

/// Rotation angles of 2*pi and beyond are folded back below 2*pi.
inline Vec3 normalize_axis_angle(const Vec3& v) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double theta = v.norm();
  if (theta < two_pi) return v;
  return v * (std::fmod(theta, two_pi) / theta);
}

/// Rotation about +Y. Maps +Z to (sin a, 0, cos a).
inline Mat3 rotation_y(double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Mat3 r;
  r << c, 0.0, s,  //
      0.0, 1.0, 0.0,  //
      -s, 0.0, c;
  return r;
}

/// d/d(angle) of rotation_y.
inline Mat3 rotation_y_derivative(double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Mat3 r;
  r << -s, 0.0, c,  //
      0.0, 0.0, 0.0,  //
      -c, 0.0, -s;
  return r;
}

/// Heading of a rotated +Z axis projected onto the floor, wrapped to (-pi, pi].
inline double heading_yaw(const Mat3& rotation) {
  const Vec3 forward = rotation.col(2);
  return wrap_angle(std::atan2(forward.x(), forward.z()));
}

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  RigidTransform compose(const RigidTransform& child) const {
    return {rotation * child.rotation, rotation * child.translation + translation};
  }
};

/// Some unit vector orthogonal to `axis`; deterministic for a given axis.
inline Vec3 any_perpendicular(const Vec3& axis) {
  const Vec3 n = axis.normalized();
  const Vec3 helper = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return n.cross(helper).normalized();
}

}  // namespace interdance
