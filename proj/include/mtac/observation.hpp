#pragma once

#include <mtac/geometry.hpp>

#include <Eigen/Core>

#include <span>

namespace mtac {

// Per-target policy input, kinematics expressed in the drone body frame
// (+y forward, +x right).
struct TargetObservation {
  Vec2 rel_position = Vec2::Zero();
  Vec2 rel_velocity = Vec2::Zero();
  double rel_facing = 0.0;  // facing direction angle in the body frame, from +x
  double belief_entropy = 1.0;
  double measurement_entropy = 1.0;
  double classified = 0.0;
};

// Viewpoint displacement: position delta in the body frame and yaw delta.
struct ViewpointAction {
  Vec2 delta_position = Vec2::Zero();
  double delta_yaw = 0.0;

  Eigen::Vector3d as_vector() const {
    return {delta_position.x(), delta_position.y(), delta_yaw};
  }
  static ViewpointAction from_vector(const Eigen::Vector3d& v) {
    return {Vec2(v.x(), v.y()), v.z()};
  }
};

// Per-axis limits on a viewpoint displacement over one high-level step.
struct ActionBounds {
  Eigen::Vector3d limits = Eigen::Vector3d(0.5, 0.5, deg2rad(15.0));

  ViewpointAction clamp(const ViewpointAction& a) const {
    const Eigen::Vector3d v = a.as_vector().cwiseMax(-limits).cwiseMin(limits);
    return ViewpointAction::from_vector(v);
  }
  bool contains(const ViewpointAction& a, double tol = 0.0) const {
    return ((a.as_vector().cwiseAbs() - limits).array() <= tol).all();
  }
};

// Number of features per target fed to the network.
inline constexpr int kObservationFeatures = 9;
inline constexpr double kPositionScale = 10.0;  // meters
inline constexpr double kVelocityScale = 1.5;   // m/s

// Row i holds the features of observation i:
// [x, y, vx, vy, cos facing, sin facing, H(belief), H(measurement), flag].
Eigen::MatrixXd encode_observations(std::span<const TargetObservation> obs);

}  // namespace mtac
