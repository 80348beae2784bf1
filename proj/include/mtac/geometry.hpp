#pragma once

#include <Eigen/Core>

#include <cmath>
#include <numbers>

namespace mtac {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

inline constexpr double kPi = std::numbers::pi;

// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

// Drone body frame used by observations and actions: +y forward (along yaw),
// +x to the right.
inline Vec2 forward_dir(double yaw) { return {std::cos(yaw), std::sin(yaw)}; }
inline Vec2 right_dir(double yaw) { return {std::sin(yaw), -std::cos(yaw)}; }

inline Vec2 world_to_body(const Vec2& v, double yaw) {
  return {v.dot(right_dir(yaw)), v.dot(forward_dir(yaw))};
}

inline Vec2 body_to_world(const Vec2& v, double yaw) {
  return v.x() * right_dir(yaw) + v.y() * forward_dir(yaw);
}

}  // namespace mtac
