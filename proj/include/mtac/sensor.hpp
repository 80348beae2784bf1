#pragma once

#include <mtac/world.hpp>

#include <Eigen/Core>

#include <array>
#include <optional>
#include <span>
#include <vector>

namespace mtac {

// Forward-looking pinhole camera mounted at the drone yaw, pitched down by
// `pitch` radians.
struct CameraModel {
  double focal_px = 400.0;
  double image_width = 640.0;
  double image_height = 480.0;
  double pitch = 0.4;  // radians below the horizon

  void validate() const;
  double horizontal_fov() const;
  double vertical_fov() const;
};

// Synthetic classifier response to a projected front face.
struct ProbabilityLaw {
  double p_floor = 0.5;
  double p_ceil = 0.95;
  double area_gain = 0.45;      // beta
  double area_ref = 6000.0;     // px^2
  double skew_decay = 2.0;      // kappa
  double out_of_frame = 0.2;    // rho

  void validate() const;
};

struct TrapezoidProjection {
  std::array<Eigen::Vector2d, 4> corners{};  // pixels
  double area = 0.0;
  double skew = 1.0;
  bool fits_in_image = false;
};

struct ClassProbability {
  Eigen::VectorXd probs;

  static ClassProbability uniform(int num_classes);
  bool is_uniform(double tol = 0.0) const;
};

struct ImagePoint {
  Eigen::Vector2d pixel;
  double depth = 0.0;
};

// Projects a world point; nullopt when the point is at or behind the image
// plane.
std::optional<ImagePoint> project_point(const DroneState& drone, const CameraModel& cam,
                                        const Vec3& world_point);

bool inside_image(const Eigen::Vector2d& px, const CameraModel& cam);

// Line-of-sight test from the drone to the target center against every
// cylinder in `others` (the target itself must not be among them), plus the
// requirement that the target center lands inside the image.
bool is_visible(const DroneState& drone, const TargetState& target,
                std::span<const TargetState> others, const CameraModel& cam,
                const WorldConfig& cfg);

TrapezoidProjection project_front_face(const DroneState& drone, const TargetState& target,
                                       const CameraModel& cam, const WorldConfig& cfg);

// Probability of the true class before the floor-to-uniform rule.
double true_class_probability(const TrapezoidProjection& tp, const ProbabilityLaw& law);

ClassProbability observe_class(const TrapezoidProjection& tp, int true_class,
                               int num_classes, const ProbabilityLaw& law = {});

struct SensorReading {
  bool visible = false;
  TrapezoidProjection projection;  // meaningful only when visible
  double p_true = 0.0;             // before flooring; 0 when not visible
  ClassProbability probs;
};

std::vector<SensorReading> observe_all_detailed(const DroneState& drone,
                                                std::span<const TargetState> targets,
                                                const CameraModel& cam,
                                                const WorldConfig& cfg,
                                                const ProbabilityLaw& law,
                                                int num_classes);

std::vector<ClassProbability> observe_all(const DroneState& drone,
                                          std::span<const TargetState> targets,
                                          const CameraModel& cam, const WorldConfig& cfg,
                                          const ProbabilityLaw& law, int num_classes);

}  // namespace mtac
