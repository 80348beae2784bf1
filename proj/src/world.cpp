#include <mtac/world.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mtac {

namespace {

constexpr double kFacingSpeedEps = 1e-9;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

// Keeps the target center in [r, extent - r] by mirroring, then flips the
// normal velocity component so it points back inside.
void rebound_walls(TargetState& t, const WorldConfig& cfg) {
  const double r = cfg.target_radius;
  const double hi[2] = {cfg.arena_width - r, cfg.arena_height - r};
  for (int axis = 0; axis < 2; ++axis) {
    double& p = t.position[axis];
    double& v = t.velocity[axis];
    if (p < r) {
      p = 2.0 * r - p;
      v = std::abs(v);
    } else if (p > hi[axis]) {
      p = 2.0 * hi[axis] - p;
      v = -std::abs(v);
    }
    p = std::clamp(p, r, hi[axis]);
  }
}

void clamp_inside(TargetState& t, const WorldConfig& cfg) {
  const double r = cfg.target_radius;
  t.position.x() = std::clamp(t.position.x(), r, cfg.arena_width - r);
  t.position.y() = std::clamp(t.position.y(), r, cfg.arena_height - r);
}

// Pairwise contacts in index order. Positions are separated along the contact
// normal first, then equal-mass elastic exchange of the normal components.
void resolve_contacts(std::vector<TargetState>& ts, const WorldConfig& cfg) {
  const double contact = 2.0 * cfg.target_radius;
  const std::size_t n = ts.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      TargetState& a = ts[i];
      TargetState& b = ts[j];
      if (a.is_static && b.is_static) continue;
      Vec2 delta = b.position - a.position;
      const double d = delta.norm();
      if (d >= contact) continue;
      const Vec2 normal = d > 1e-12 ? Vec2(delta / d) : Vec2(1.0, 0.0);
      const double overlap = contact - d;
      if (a.is_static) {
        b.position += overlap * normal;
        const double vn = b.velocity.dot(normal);
        if (vn < 0.0) b.velocity -= 2.0 * vn * normal;
      } else if (b.is_static) {
        a.position -= overlap * normal;
        const double vn = a.velocity.dot(normal);
        if (vn > 0.0) a.velocity -= 2.0 * vn * normal;
      } else {
        a.position -= 0.5 * overlap * normal;
        b.position += 0.5 * overlap * normal;
        const double closing = (b.velocity - a.velocity).dot(normal);
        if (closing < 0.0) {
          a.velocity += closing * normal;
          b.velocity -= closing * normal;
        }
      }
      if (!a.is_static) clamp_inside(a, cfg);
      if (!b.is_static) clamp_inside(b, cfg);
    }
  }
}

void update_facing(TargetState& t) {
  if (t.is_static) return;
  if (t.velocity.norm() > kFacingSpeedEps) {
    t.facing = std::atan2(t.velocity.y(), t.velocity.x());
  }
}

}  // namespace

void WorldConfig::validate() const {
  require(tau_l > 0.0 && tau_h > tau_l, "world: need tau_h > tau_l > 0");
  const double ratio = tau_h / tau_l;
  require(std::abs(ratio - std::round(ratio)) < 1e-9,
          "world: tau_h must be an integer multiple of tau_l");
  require(arena_width > 0.0 && arena_height > 0.0, "world: arena extents must be > 0");
  require(target_radius > 0.0 && target_height > 0.0, "world: target extents must be > 0");
  require(arena_width > 2.0 * target_radius && arena_height > 2.0 * target_radius,
          "world: arena smaller than a target");
  require(target_speed_mean >= 0.0 && target_speed_std >= 0.0 && target_speed_cap > 0.0,
          "world: invalid target speed parameters");
  require(drone_v_max > 0.0 && drone_yaw_rate_max > 0.0, "world: drone limits must be > 0");
  require(drone_altitude > 0.0, "world: drone altitude must be > 0");
}

int WorldConfig::low_level_steps_per_high_level() const {
  return static_cast<int>(std::lround(tau_h / tau_l));
}

void SocialForcesConfig::validate(const WorldConfig& cfg) const {
  require(goal_attraction_gain >= 0.0 && target_repulsion_strength >= 0.0 &&
              wall_repulsion_strength >= 0.0,
          "social forces: strengths must be >= 0");
  require(repulsion_range > 0.0, "social forces: repulsion range must be > 0");
  require(desired_speed >= 0.0 && desired_speed <= cfg.target_speed_cap,
          "social forces: desired speed must lie in [0, speed cap]");
  require(goal_resample_radius >= 0.0, "social forces: resample radius must be >= 0");
}

bool InputBox::contains(const Eigen::Vector4d& u) const {
  for (int i = 0; i < 3; ++i) {
    if (!(std::abs(u[i]) <= accel_max[i])) return false;
  }
  return std::abs(u[3]) <= yaw_accel_max;
}

std::vector<TargetState> step_targets_cv(std::span<const TargetState> targets,
                                         const WorldConfig& cfg, double dt) {
  std::vector<TargetState> next(targets.begin(), targets.end());
  for (auto& t : next) {
    if (t.is_static) continue;
    t.position += t.velocity * dt;
    rebound_walls(t, cfg);
  }
  resolve_contacts(next, cfg);
  for (auto& t : next) update_facing(t);
  return next;
}

std::vector<Vec2> social_accelerations(std::span<const TargetState> targets,
                                       std::span<const Vec2> goals,
                                       const SocialForcesConfig& sf,
                                       const WorldConfig& cfg) {
  if (goals.size() != targets.size()) {
    throw std::invalid_argument("social forces: need one goal per target");
  }
  const double r = cfg.target_radius;
  const double range = sf.repulsion_range;
  std::vector<Vec2> acc(targets.size(), Vec2::Zero());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const TargetState& t = targets[i];
    if (t.is_static) continue;
    Vec2 a = Vec2::Zero();

    const Vec2 to_goal = goals[i] - t.position;
    const double dist_goal = to_goal.norm();
    const Vec2 desired = dist_goal > 1e-12 ? Vec2(sf.desired_speed * to_goal / dist_goal)
                                           : Vec2::Zero();
    a += sf.goal_attraction_gain * (desired - t.velocity);

    for (std::size_t j = 0; j < targets.size(); ++j) {
      if (j == i) continue;
      const Vec2 away = t.position - targets[j].position;
      const double d = away.norm();
      const double gap = d - 2.0 * r;
      if (gap >= range) continue;
      const Vec2 dir = d > 1e-12 ? Vec2(away / d) : Vec2(i < j ? -1.0 : 1.0, 0.0);
      a += sf.target_repulsion_strength * (1.0 - gap / range) * dir;
    }

    const double wall_gap[4] = {t.position.x() - r, cfg.arena_width - t.position.x() - r,
                                t.position.y() - r, cfg.arena_height - t.position.y() - r};
    const Vec2 inward[4] = {{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}};
    for (int w = 0; w < 4; ++w) {
      if (wall_gap[w] >= range) continue;
      a += sf.wall_repulsion_strength * (1.0 - wall_gap[w] / range) * inward[w];
    }
    acc[i] = a;
  }
  return acc;
}

SocialStep step_targets_social(std::span<const TargetState> targets,
                               std::span<const Vec2> goals,
                               const SocialForcesConfig& sf,
                               const WorldConfig& cfg, double dt,
                               std::mt19937_64& rng) {
  const auto acc = social_accelerations(targets, goals, sf, cfg);
  SocialStep out{{targets.begin(), targets.end()}, {goals.begin(), goals.end()}};
  for (std::size_t i = 0; i < out.targets.size(); ++i) {
    TargetState& t = out.targets[i];
    if (t.is_static) continue;
    t.velocity += acc[i] * dt;
    const double speed = t.velocity.norm();
    if (speed > cfg.target_speed_cap) t.velocity *= cfg.target_speed_cap / speed;
    t.position += t.velocity * dt;
    rebound_walls(t, cfg);
  }
  resolve_contacts(out.targets, cfg);
  for (std::size_t i = 0; i < out.targets.size(); ++i) {
    TargetState& t = out.targets[i];
    update_facing(t);
    if (t.is_static) continue;
    if ((out.goals[i] - t.position).norm() < sf.goal_resample_radius) {
      out.goals[i] = sample_arena_point(cfg, cfg.target_radius, rng);
    }
  }
  return out;
}

DroneState step_drone_firstorder(const DroneState& d, const Vec3& v_cmd,
                                 double yaw_cmd, const WorldConfig& cfg,
                                 double dt) {
  DroneState next = d;
  Vec3 v = v_cmd.cwiseMax(-cfg.drone_v_max).cwiseMin(cfg.drone_v_max);
  if (!cfg.unlock_z) v.z() = 0.0;
  const double w = std::clamp(yaw_cmd, -cfg.drone_yaw_rate_max, cfg.drone_yaw_rate_max);
  next.position += v * dt;
  next.position.x() = std::clamp(next.position.x(), 0.0, cfg.arena_width);
  next.position.y() = std::clamp(next.position.y(), 0.0, cfg.arena_height);
  next.position.z() = std::max(next.position.z(), 0.0);
  next.yaw = wrap_angle(d.yaw + w * dt);
  next.velocity = v;
  next.yaw_rate = w;
  return next;
}

DroneState drone_dynamics_f(const DroneState& x, const Eigen::Vector4d& u,
                            double dt, const WorldConfig& cfg,
                            const InputBox& box) {
  if (!box.contains(u)) {
    throw std::invalid_argument("drone_dynamics_f: input outside the admissible box");
  }
  DroneState next = x;
  next.velocity += u.head<3>() * dt;
  next.velocity = next.velocity.cwiseMax(-cfg.drone_v_max).cwiseMin(cfg.drone_v_max);
  if (!cfg.unlock_z) next.velocity.z() = 0.0;
  next.yaw_rate = std::clamp(x.yaw_rate + u[3] * dt, -cfg.drone_yaw_rate_max,
                             cfg.drone_yaw_rate_max);
  next.position += next.velocity * dt;
  next.yaw = wrap_angle(x.yaw + next.yaw_rate * dt);

  const double hi[2] = {cfg.arena_width, cfg.arena_height};
  for (int axis = 0; axis < 2; ++axis) {
    if (next.position[axis] < 0.0 || next.position[axis] > hi[axis]) {
      next.position[axis] = std::clamp(next.position[axis], 0.0, hi[axis]);
      next.velocity[axis] = 0.0;
    }
  }
  if (next.position.z() < 0.0) {
    next.position.z() = 0.0;
    next.velocity.z() = 0.0;
  }
  return next;
}

Vec2 sample_target_velocity(const WorldConfig& cfg, std::mt19937_64& rng) {
  std::normal_distribution<double> speed(cfg.target_speed_mean, cfg.target_speed_std);
  std::bernoulli_distribution sign(0.5);
  Vec2 v;
  for (int axis = 0; axis < 2; ++axis) {
    const double s = std::clamp(speed(rng), 0.0, cfg.target_speed_cap);
    v[axis] = sign(rng) ? s : -s;
  }
  return v;
}

Vec2 sample_arena_point(const WorldConfig& cfg, double margin, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ux(margin, cfg.arena_width - margin);
  std::uniform_real_distribution<double> uy(margin, cfg.arena_height - margin);
  const double x = ux(rng);
  const double y = uy(rng);
  return {x, y};
}

}  // namespace mtac
