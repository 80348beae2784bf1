#include <mtac/env.hpp>
#include <mtac/log.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mtac {

namespace {

constexpr double kPlacementGap = 0.05;

ClassProbability synthetic_measurement(int true_class, int num_classes, double p_true) {
  ClassProbability p{Eigen::VectorXd::Constant(num_classes, (1.0 - p_true) / (num_classes - 1))};
  p.probs[true_class] = p_true;
  return p;
}

}  // namespace

void EnvConfig::validate() const {
  world.validate();
  social.validate(world);
  camera.validate();
  law.validate();
  mpc.validate();
  const auto& ep = episode;
  if (!(ep.timeout > 0.0)) throw std::invalid_argument("episode: timeout must be > 0");
  const double steps = ep.timeout / world.tau_h;
  if (std::abs(steps - std::round(steps)) > 1e-9) {
    throw std::invalid_argument("episode: timeout must be a multiple of tau_h");
  }
  if (ep.num_targets.lo < 0 || ep.num_targets.hi < ep.num_targets.lo) {
    throw std::invalid_argument("episode: invalid target-count range");
  }
  if (!(ep.static_fraction.lo >= 0.0 && ep.static_fraction.hi <= 1.0 &&
        ep.static_fraction.lo <= ep.static_fraction.hi)) {
    throw std::invalid_argument("episode: static fraction range must lie in [0, 1]");
  }
  if (ep.num_classes < 2) throw std::invalid_argument("episode: need at least two classes");
  if (!(ep.b_max > 0.0 && ep.b_max <= 1.0)) throw std::invalid_argument("episode: b_max in (0, 1]");
  if (std::abs(mpc.dt - world.tau_l) > 1e-12) {
    throw std::invalid_argument("mpc: dt must equal the world's tau_l");
  }
  const RewardWeights& w = reward;
  if (w.entropy < 0 || w.classified < 0 || w.complete < 0 || w.time < 0 || w.action < 0) {
    throw std::invalid_argument("reward: weights must be >= 0");
  }
}

int EnvConfig::max_steps() const {
  return static_cast<int>(std::lround(episode.timeout / world.tau_h));
}

ActionBounds EnvConfig::action_bounds() const {
  const double dp = world.drone_v_max * world.tau_h;
  return {Eigen::Vector3d(dp, dp, world.drone_yaw_rate_max * world.tau_h)};
}

int EpisodeState::num_classified() const {
  return static_cast<int>(std::count_if(status.begin(), status.end(),
                                        [](const ClassificationStatus& s) { return s.classified; }));
}

bool EpisodeState::all_classified() const { return num_classified() == num_targets(); }

RewardTerms reward_terms(const EpisodeState& prev, const ViewpointAction& action,
                         const EpisodeState& next, const RewardWeights& w) {
  if (prev.beliefs.size() != next.beliefs.size()) {
    throw std::invalid_argument("reward: states refer to different target sets");
  }
  RewardTerms t;
  double dh = 0.0;
  for (std::size_t j = 0; j < prev.beliefs.size(); ++j) {
    dh += normalized_entropy(prev.beliefs[j].probs) - normalized_entropy(next.beliefs[j].probs);
  }
  t.entropy = w.entropy * dh;
  t.classified = w.classified * (next.num_classified() - prev.num_classified());
  t.complete = next.all_classified() ? w.complete : 0.0;
  t.time = w.time;
  t.action = w.action * (action.delta_position.norm() + std::abs(action.delta_yaw));
  return t;
}

double compute_reward(const EpisodeState& prev, const ViewpointAction& action,
                      const EpisodeState& next, const RewardWeights& w) {
  return reward_terms(prev, action, next, w).total();
}

std::vector<TargetObservation> build_observation(const EpisodeState& s) {
  std::vector<TargetObservation> obs(s.targets.size());
  const Vec2 drone_xy = s.drone.position.head<2>();
  const Vec2 drone_v = s.drone.velocity.head<2>();
  const double yaw = s.drone.yaw;
  for (std::size_t j = 0; j < s.targets.size(); ++j) {
    const TargetState& t = s.targets[j];
    TargetObservation& o = obs[j];
    o.rel_position = world_to_body(t.position - drone_xy, yaw);
    o.rel_velocity = world_to_body(t.velocity - drone_v, yaw);
    const Vec2 face = world_to_body(Vec2(std::cos(t.facing), std::sin(t.facing)), yaw);
    o.rel_facing = std::atan2(face.y(), face.x());
    o.belief_entropy = normalized_entropy(s.beliefs[j].probs);
    o.measurement_entropy = normalized_entropy(s.last_measurement[j].probs);
    o.classified = s.status[j].classified ? 1.0 : 0.0;
  }
  return obs;
}

EpisodeState reset_episode(const EnvConfig& cfg, std::mt19937_64& rng) {
  const EpisodeConfig& ep = cfg.episode;
  const WorldConfig& w = cfg.world;
  EpisodeState s;

  std::uniform_int_distribution<int> count(ep.num_targets.lo, ep.num_targets.hi);
  int m = count(rng);
  std::uniform_real_distribution<double> frac_dist(ep.static_fraction.lo, ep.static_fraction.hi);
  const double frac = ep.static_fraction.lo == ep.static_fraction.hi ? ep.static_fraction.lo
                                                                      : frac_dist(rng);

  const double min_sep = 2.0 * w.target_radius + kPlacementGap;
  for (int i = 0; i < m; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < ep.placement_retries && !placed; ++attempt) {
      const Vec2 p = sample_arena_point(w, w.target_radius, rng);
      const bool clear = std::all_of(s.targets.begin(), s.targets.end(), [&](const TargetState& o) {
        return (o.position - p).norm() >= min_sep;
      });
      if (clear) {
        TargetState t;
        t.position = p;
        s.targets.push_back(t);
        placed = true;
      }
    }
    if (!placed) {
      log::warn("reset: could not place target " + std::to_string(i) + ", using " +
                std::to_string(s.targets.size()) + " targets");
      break;
    }
  }
  m = static_cast<int>(s.targets.size());

  // Static subset: partial Fisher-Yates over target indices.
  const int n_static = static_cast<int>(std::lround(frac * m));
  std::vector<int> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < n_static; ++i) {
    std::uniform_int_distribution<int> pick(i, m - 1);
    std::swap(idx[i], idx[pick(rng)]);
    s.targets[idx[i]].is_static = true;
  }

  std::uniform_int_distribution<int> cls(0, ep.num_classes - 1);
  std::uniform_real_distribution<double> angle(-kPi, kPi);
  std::uniform_int_distribution<int> n_init(0, std::max(0, ep.init_measurements_max));
  std::uniform_real_distribution<double> p_init(ep.init_p_true.lo, ep.init_p_true.hi);
  for (auto& t : s.targets) {
    t.class_id = cls(rng);
    if (t.is_static) {
      t.velocity = Vec2::Zero();
      t.facing = wrap_angle(angle(rng));
    } else {
      t.velocity = sample_target_velocity(w, rng);
      t.facing = std::atan2(t.velocity.y(), t.velocity.x());
    }
    Belief b = Belief::uniform(ep.num_classes);
    const int k = n_init(rng);
    for (int i = 0; i < k; ++i) {
      b = conflate(b, synthetic_measurement(t.class_id, ep.num_classes, p_init(rng)));
    }
    s.beliefs.push_back(b);
    s.status.push_back(update_status(b, ClassificationStatus{false, ep.b_max}));
    s.goals.push_back(sample_arena_point(w, w.target_radius, rng));
  }

  std::uniform_real_distribution<double> dx(0.0, w.arena_width);
  std::uniform_real_distribution<double> dy(0.0, w.arena_height);
  const double x = dx(rng);
  const double y = dy(rng);
  s.drone.position = Vec3(x, y, w.drone_altitude);
  s.drone.yaw = wrap_angle(angle(rng));

  s.last_measurement.assign(m, ClassProbability::uniform(ep.num_classes));
  s.visible.assign(m, false);
  s.misclassified.assign(m, false);
  s.step = 0;
  return s;
}

CurriculumSchedule CurriculumSchedule::with_budget(double total_steps) {
  CurriculumSchedule s;
  s.total_steps = total_steps;
  s.phase_boundary = 0.75 * total_steps;
  return s;
}

EpisodeConfig curriculum_phase(const CurriculumSchedule& schedule, const EpisodeConfig& base,
                               double global_step) {
  EpisodeConfig ep = base;
  ep.num_targets = global_step < schedule.phase_boundary ? schedule.phase1 : schedule.phase2;
  return ep;
}

Environment::Environment(EnvConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.episode.rng_seed) {
  cfg_.validate();
  if (cfg_.use_mpc) controller_.emplace(cfg_.mpc);
}

const std::vector<TargetObservation>& Environment::reset(std::uint64_t seed) {
  rng_.seed(seed);
  return reset(rng_);
}

const std::vector<TargetObservation>& Environment::reset(std::mt19937_64& rng) {
  state_ = reset_episode(cfg_, rng);
  if (&rng != &rng_) rng_.seed(rng());
  if (controller_) controller_->reset();
  done_ = false;
  obs_ = build_observation(state_);
  return obs_;
}

void Environment::advance_targets(double dt) {
  if (cfg_.episode.dynamics == Dynamics::kConstantVelocity) {
    state_.targets = step_targets_cv(state_.targets, cfg_.world, dt);
  } else {
    auto next = step_targets_social(state_.targets, state_.goals, cfg_.social, cfg_.world, dt, rng_);
    state_.targets = std::move(next.targets);
    state_.goals = std::move(next.goals);
  }
}

void Environment::measure(StepInfo& info) {
  const int c = cfg_.episode.num_classes;
  auto readings = observe_all_detailed(state_.drone, state_.targets, cfg_.camera, cfg_.world,
                                       cfg_.law, c);
  for (std::size_t j = 0; j < readings.size(); ++j) {
    auto& r = readings[j];
    state_.visible[j] = r.visible;
    if (r.visible) {
      ++info.visible_count;
      if (!state_.status[j].classified) ++info.visible_unclassified;
    }
    state_.beliefs[j] = conflate(state_.beliefs[j], r.probs);
    state_.last_measurement[j] = std::move(r.probs);
    const bool was = state_.status[j].classified;
    state_.status[j] = update_status(state_.beliefs[j], state_.status[j]);
    if (!was && state_.status[j].classified) {
      ++info.newly_classified;
      if (state_.beliefs[j].argmax() != state_.targets[j].class_id) {
        state_.misclassified[j] = true;
      }
    }
  }
  ++info.measurements;
}

StepResult Environment::step(const ViewpointAction& action) {
  if (done_) throw std::logic_error("Environment::step called on a finished episode");
  const EpisodeState prev = state_;
  const ActionBounds bounds = cfg_.action_bounds();
  const ViewpointAction a = bounds.clamp(action);
  const WorldConfig& w = cfg_.world;
  const int substeps = w.low_level_steps_per_high_level();
  StepResult res;

  Vec2 goal_xy = state_.drone.position.head<2>() +
                 body_to_world(a.delta_position, state_.drone.yaw);
  goal_xy.x() = std::clamp(goal_xy.x(), 0.0, w.arena_width);
  goal_xy.y() = std::clamp(goal_xy.y(), 0.0, w.arena_height);
  const double goal_yaw = wrap_angle(state_.drone.yaw + a.delta_yaw);

  if (!controller_) {
    const Vec2 moved = goal_xy - state_.drone.position.head<2>();
    state_.drone.velocity = Vec3(moved.x() / w.tau_h, moved.y() / w.tau_h, 0.0);
    state_.drone.yaw_rate = a.delta_yaw / w.tau_h;
    state_.drone.position.head<2>() = goal_xy;
    state_.drone.yaw = goal_yaw;
    for (int k = 0; k < substeps; ++k) advance_targets(w.tau_l);
  } else {
    const ViewpointTarget vt{Vec3(goal_xy.x(), goal_xy.y(), w.drone_altitude), goal_yaw};
    for (int k = 0; k < substeps; ++k) {
      const Eigen::Vector4d u = controller_->track(state_.drone, vt);
      state_.drone = drone_dynamics_f(state_.drone, u, w.tau_l, w, cfg_.mpc.box);
      advance_targets(w.tau_l);
    }
    res.info.tracking_error = (state_.drone.position.head<2>() - goal_xy).norm();
    res.info.yaw_tracking_error = std::abs(wrap_angle(state_.drone.yaw - goal_yaw));
  }

  measure(res.info);
  ++state_.step;

  res.reward = compute_reward(prev, a, state_, cfg_.reward);
  res.info.num_classified = state_.num_classified();
  res.info.misclassified = static_cast<int>(
      std::count(state_.misclassified.begin(), state_.misclassified.end(), true));
  const bool complete = state_.all_classified();
  res.info.timeout = !complete && state_.step >= cfg_.max_steps();
  res.done = complete || res.info.timeout;
  done_ = res.done;
  obs_ = build_observation(state_);
  res.observations = obs_;
  return res;
}

}  // namespace mtac
