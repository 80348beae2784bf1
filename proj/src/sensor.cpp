#include <mtac/sensor.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mtac {

namespace {

constexpr double kMinDepth = 1e-6;

struct CameraFrame {
  Vec3 origin;
  Vec3 forward;
  Vec3 right;
  Vec3 up;
};

CameraFrame camera_frame(const DroneState& drone, const CameraModel& cam) {
  const Vec2 f2 = forward_dir(drone.yaw);
  const Vec2 r2 = right_dir(drone.yaw);
  const double cp = std::cos(cam.pitch);
  const double sp = std::sin(cam.pitch);
  CameraFrame fr;
  fr.origin = drone.position;
  fr.forward = Vec3(cp * f2.x(), cp * f2.y(), -sp);
  fr.right = Vec3(r2.x(), r2.y(), 0.0);
  fr.up = Vec3(sp * f2.x(), sp * f2.y(), cp);
  return fr;
}

// True when the 3D segment from `from` to `to` passes through the cylinder
// standing at `center` with the given radius and height.
bool segment_hits_cylinder(const Vec3& from, const Vec3& to, const Vec2& center,
                           double radius, double height) {
  const Vec2 p0 = from.head<2>();
  const Vec2 dir = to.head<2>() - p0;
  const Vec2 rel = p0 - center;
  const double a = dir.squaredNorm();
  const double b = 2.0 * rel.dot(dir);
  const double c = rel.squaredNorm() - radius * radius;
  double t0 = 0.0;
  double t1 = 1.0;
  if (a < 1e-18) {
    if (c > 0.0) return false;
  } else {
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return false;
    const double sq = std::sqrt(disc);
    t0 = std::max(0.0, (-b - sq) / (2.0 * a));
    t1 = std::min(1.0, (-b + sq) / (2.0 * a));
    if (t0 > t1) return false;
  }
  // Height along the sight line is linear in t, so its minimum over the
  // chord is at one of the chord ends.
  const double z0 = from.z() + t0 * (to.z() - from.z());
  const double z1 = from.z() + t1 * (to.z() - from.z());
  return std::min(z0, z1) < height;
}

Vec3 target_center(const TargetState& t, const WorldConfig& cfg) {
  return {t.position.x(), t.position.y(), 0.5 * cfg.target_height};
}

bool is_visible_skipping(const DroneState& drone, std::span<const TargetState> targets,
                         std::size_t index, const CameraModel& cam,
                         const WorldConfig& cfg) {
  const TargetState& target = targets[index];
  if ((target.position - drone.position.head<2>()).norm() < 1e-9) return false;
  const Vec3 center = target_center(target, cfg);
  const auto img = project_point(drone, cam, center);
  if (!img || !inside_image(img->pixel, cam)) return false;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    if (j == index) continue;
    if (segment_hits_cylinder(drone.position, center, targets[j].position,
                              cfg.target_radius, cfg.target_height)) {
      return false;
    }
  }
  return true;
}

double shoelace(const std::array<Eigen::Vector2d, 4>& poly) {
  double s = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % poly.size()];
    s += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * std::abs(s);
}

}  // namespace

void CameraModel::validate() const {
  if (!(focal_px > 0.0) || !(image_width > 0.0) || !(image_height > 0.0)) {
    throw std::invalid_argument("camera: focal length and image size must be > 0");
  }
}

double CameraModel::horizontal_fov() const { return 2.0 * std::atan(0.5 * image_width / focal_px); }
double CameraModel::vertical_fov() const { return 2.0 * std::atan(0.5 * image_height / focal_px); }

void ProbabilityLaw::validate() const {
  if (!(p_floor >= 0.0 && p_floor <= p_ceil && p_ceil <= 1.0)) {
    throw std::invalid_argument("probability law: need 0 <= p_floor <= p_ceil <= 1");
  }
  if (!(area_gain >= 0.0 && area_ref > 0.0 && skew_decay >= 0.0 && out_of_frame >= 0.0 &&
        out_of_frame <= 1.0)) {
    throw std::invalid_argument("probability law: invalid gain, reference area or penalty");
  }
}

ClassProbability ClassProbability::uniform(int num_classes) {
  return {Eigen::VectorXd::Constant(num_classes, 1.0 / num_classes)};
}

bool ClassProbability::is_uniform(double tol) const {
  if (probs.size() == 0) return true;
  const double u = 1.0 / static_cast<double>(probs.size());
  return (probs.array() - u).abs().maxCoeff() <= tol;
}

std::optional<ImagePoint> project_point(const DroneState& drone, const CameraModel& cam,
                                        const Vec3& world_point) {
  const CameraFrame fr = camera_frame(drone, cam);
  const Vec3 rel = world_point - fr.origin;
  const double depth = rel.dot(fr.forward);
  if (depth <= kMinDepth) return std::nullopt;
  ImagePoint ip;
  ip.depth = depth;
  ip.pixel.x() = 0.5 * cam.image_width + cam.focal_px * rel.dot(fr.right) / depth;
  ip.pixel.y() = 0.5 * cam.image_height - cam.focal_px * rel.dot(fr.up) / depth;
  return ip;
}

bool inside_image(const Eigen::Vector2d& px, const CameraModel& cam) {
  return px.x() >= 0.0 && px.x() <= cam.image_width && px.y() >= 0.0 &&
         px.y() <= cam.image_height;
}

bool is_visible(const DroneState& drone, const TargetState& target,
                std::span<const TargetState> others, const CameraModel& cam,
                const WorldConfig& cfg) {
  std::vector<TargetState> all;
  all.reserve(others.size() + 1);
  all.push_back(target);
  all.insert(all.end(), others.begin(), others.end());
  return is_visible_skipping(drone, all, 0, cam, cfg);
}

TrapezoidProjection project_front_face(const DroneState& drone, const TargetState& target,
                                       const CameraModel& cam, const WorldConfig& cfg) {
  TrapezoidProjection tp;
  const double r = cfg.target_radius;
  const Vec2 to_drone = drone.position.head<2>() - target.position;
  const double dist = to_drone.norm();
  if (dist <= r) return tp;  // drone above the target: no side view

  const double view_dir = std::atan2(to_drone.y(), to_drone.x());
  const double theta = wrap_angle(view_dir - target.facing);
  const double cos_theta = std::cos(theta);
  tp.skew = 1.0 - std::max(0.0, cos_theta);
  if (cos_theta <= 0.0) return tp;  // front face turned away

  // Silhouette of the front half: the arc of the cylinder visible from the
  // drone intersected with the half facing `target.facing`.
  const double half_visible = std::acos(r / dist);
  const double lo = std::max(theta - half_visible, -0.5 * kPi);
  const double hi = std::min(theta + half_visible, 0.5 * kPi);
  const double edge_angles[2] = {target.facing + lo, target.facing + hi};

  const double heights[4][2] = {{0, 0.0}, {0, 1.0}, {1, 1.0}, {1, 0.0}};
  tp.fits_in_image = true;
  for (int k = 0; k < 4; ++k) {
    const double a = edge_angles[static_cast<int>(heights[k][0])];
    const Vec3 p(target.position.x() + r * std::cos(a), target.position.y() + r * std::sin(a),
                 heights[k][1] * cfg.target_height);
    const auto img = project_point(drone, cam, p);
    if (!img) {
      tp.fits_in_image = false;
      tp.area = 0.0;
      return tp;
    }
    tp.corners[k] = img->pixel;
    if (!inside_image(img->pixel, cam)) tp.fits_in_image = false;
  }
  tp.area = shoelace(tp.corners);
  return tp;
}

double true_class_probability(const TrapezoidProjection& tp, const ProbabilityLaw& law) {
  const double area_term = law.area_gain * std::min(tp.area / law.area_ref, 1.0);
  double p = std::clamp(law.p_floor + area_term, law.p_floor, law.p_ceil);
  p *= std::exp(-law.skew_decay * tp.skew);
  if (!tp.fits_in_image) p *= law.out_of_frame;
  return p;
}

ClassProbability observe_class(const TrapezoidProjection& tp, int true_class,
                               int num_classes, const ProbabilityLaw& law) {
  if (num_classes < 2) throw std::invalid_argument("observe_class: need at least two classes");
  if (true_class < 0 || true_class >= num_classes) {
    throw std::invalid_argument("observe_class: true class out of range");
  }
  const double p = true_class_probability(tp, law);
  if (p < 1.0 / num_classes) return ClassProbability::uniform(num_classes);
  ClassProbability out{Eigen::VectorXd::Constant(num_classes, (1.0 - p) / (num_classes - 1))};
  out.probs[true_class] = p;
  return out;
}

std::vector<SensorReading> observe_all_detailed(const DroneState& drone,
                                                std::span<const TargetState> targets,
                                                const CameraModel& cam,
                                                const WorldConfig& cfg,
                                                const ProbabilityLaw& law,
                                                int num_classes) {
  std::vector<SensorReading> out(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    SensorReading& r = out[i];
    r.visible = is_visible_skipping(drone, targets, i, cam, cfg);
    if (r.visible) {
      r.projection = project_front_face(drone, targets[i], cam, cfg);
      r.p_true = true_class_probability(r.projection, law);
      r.probs = observe_class(r.projection, targets[i].class_id, num_classes, law);
    } else {
      r.probs = ClassProbability::uniform(num_classes);
    }
  }
  return out;
}

std::vector<ClassProbability> observe_all(const DroneState& drone,
                                          std::span<const TargetState> targets,
                                          const CameraModel& cam, const WorldConfig& cfg,
                                          const ProbabilityLaw& law, int num_classes) {
  auto readings = observe_all_detailed(drone, targets, cam, cfg, law, num_classes);
  std::vector<ClassProbability> out;
  out.reserve(readings.size());
  for (auto& r : readings) out.push_back(std::move(r.probs));
  return out;
}

}  // namespace mtac
