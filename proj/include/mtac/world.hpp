#pragma once

#include <mtac/geometry.hpp>

#include <random>
#include <span>
#include <vector>

namespace mtac {

struct WorldConfig {
  double arena_width = 50.0;
  double arena_height = 50.0;
  double tau_h = 0.25;  // high-level (viewpoint) step
  double tau_l = 0.05;  // low-level (control) step
  double target_radius = 0.6;
  double target_height = 1.8;
  double target_speed_mean = 1.0;  // per axis
  double target_speed_std = 0.25;
  double target_speed_cap = 1.5;  // per axis at sampling, norm under social forces
  double drone_v_max = 2.0;       // per axis
  double drone_yaw_rate_max = deg2rad(60.0);
  double drone_altitude = 2.0;
  bool unlock_z = false;

  // Throws std::invalid_argument on inconsistent values.
  void validate() const;
  int low_level_steps_per_high_level() const;
};

struct TargetState {
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  double facing = 0.0;  // direction of the class-bearing front face
  int class_id = 0;
  bool is_static = false;
};

struct DroneState {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
  Vec3 velocity = Vec3::Zero();
  double yaw_rate = 0.0;
};

struct SocialForcesConfig {
  double goal_attraction_gain = 1.0;
  double target_repulsion_strength = 2.0;
  double repulsion_range = 2.0;
  double wall_repulsion_strength = 2.0;
  double desired_speed = 1.0;
  double goal_resample_radius = 0.5;

  void validate(const WorldConfig& cfg) const;
};

// Box on the double-integrator inputs (linear accel per axis, yaw accel).
struct InputBox {
  Vec3 accel_max = Vec3::Constant(4.0);
  double yaw_accel_max = 4.0;

  bool contains(const Eigen::Vector4d& u) const;
};

// Constant-velocity targets with equal-mass elastic target-target contacts
// and specular wall rebounds. Static targets act as immovable obstacles.
std::vector<TargetState> step_targets_cv(std::span<const TargetState> targets,
                                         const WorldConfig& cfg, double dt);

// Acceleration on every target under the social-forces model (zero for
// static targets). Exposed separately so the force law can be inspected.
std::vector<Vec2> social_accelerations(std::span<const TargetState> targets,
                                       std::span<const Vec2> goals,
                                       const SocialForcesConfig& sf,
                                       const WorldConfig& cfg);

struct SocialStep {
  std::vector<TargetState> targets;
  std::vector<Vec2> goals;
};

// One social-forces step. `goals` holds one entry per target (ignored for
// static ones); goals reached within the resample radius are redrawn
// uniformly in the arena from `rng`.
SocialStep step_targets_social(std::span<const TargetState> targets,
                               std::span<const Vec2> goals,
                               const SocialForcesConfig& sf,
                               const WorldConfig& cfg, double dt,
                               std::mt19937_64& rng);

// First-order (velocity-commanded) drone used by the training transition.
DroneState step_drone_firstorder(const DroneState& d, const Vec3& v_cmd,
                                 double yaw_cmd, const WorldConfig& cfg,
                                 double dt);

// Double-integrator drone: velocity += u*dt (clamped), position += velocity*dt.
// Throws std::invalid_argument when u lies outside `box`.
DroneState drone_dynamics_f(const DroneState& x, const Eigen::Vector4d& u,
                            double dt, const WorldConfig& cfg,
                            const InputBox& box);

// Samples a per-axis speed around the configured mean, clipped at the cap.
Vec2 sample_target_velocity(const WorldConfig& cfg, std::mt19937_64& rng);

Vec2 sample_arena_point(const WorldConfig& cfg, double margin,
                        std::mt19937_64& rng);

}  // namespace mtac
