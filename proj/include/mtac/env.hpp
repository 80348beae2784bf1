#pragma once

#include <mtac/belief.hpp>
#include <mtac/mpc.hpp>
#include <mtac/observation.hpp>
#include <mtac/sensor.hpp>
#include <mtac/world.hpp>

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace mtac {

enum class Dynamics { kConstantVelocity, kSocialForces };

struct IntRange {
  int lo = 1;
  int hi = 1;
  bool operator==(const IntRange&) const = default;
};

struct RealRange {
  double lo = 0.0;
  double hi = 0.0;
};

struct RewardWeights {
  double entropy = 1.0;     // w_H
  double classified = 5.0;  // w_l
  double complete = 100.0;  // w_J
  double time = 0.3;        // w_t
  double action = 0.01;     // w_a
};

struct EpisodeConfig {
  double timeout = 100.0;  // seconds
  double b_max = 0.95;
  IntRange num_targets{1, 12};
  RealRange static_fraction{0.0, 0.0};
  Dynamics dynamics = Dynamics::kConstantVelocity;
  std::uint64_t rng_seed = 0;
  int num_classes = 2;
  // Reset-time belief randomization: 0..max synthetic measurements with the
  // true class probability drawn from [lo, hi].
  int init_measurements_max = 2;
  RealRange init_p_true{0.5, 0.8};
  int placement_retries = 200;
};

struct EnvConfig {
  WorldConfig world;
  SocialForcesConfig social;
  CameraModel camera;
  ProbabilityLaw law;
  EpisodeConfig episode;
  RewardWeights reward;
  MPCConfig mpc;
  // Test-mode transition: track the viewpoint with MPC at tau_l instead of
  // teleporting the drone.
  bool use_mpc = false;

  void validate() const;
  int max_steps() const;
  ActionBounds action_bounds() const;
};

struct EpisodeState {
  std::vector<TargetState> targets;
  std::vector<Vec2> goals;  // social-forces goals, one per target
  DroneState drone;
  std::vector<Belief> beliefs;
  std::vector<ClassificationStatus> status;
  std::vector<ClassProbability> last_measurement;
  std::vector<bool> visible;
  std::vector<bool> misclassified;
  int step = 0;

  int num_targets() const { return static_cast<int>(targets.size()); }
  int num_classified() const;
  bool all_classified() const;
};

struct StepInfo {
  int newly_classified = 0;
  int num_classified = 0;
  int visible_count = 0;
  int visible_unclassified = 0;  // counted before this step's status update
  int misclassified = 0;
  int measurements = 0;          // measurement rounds taken in this step
  double tracking_error = 0.0;   // position error to the viewpoint (MPC mode)
  double yaw_tracking_error = 0.0;
  bool timeout = false;
};

struct StepResult {
  std::vector<TargetObservation> observations;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

struct RewardTerms {
  double entropy = 0.0;
  double classified = 0.0;
  double complete = 0.0;
  double time = 0.0;
  double action = 0.0;
  double total() const { return entropy + classified + complete - time - action; }
};

RewardTerms reward_terms(const EpisodeState& prev, const ViewpointAction& action,
                         const EpisodeState& next, const RewardWeights& w);
double compute_reward(const EpisodeState& prev, const ViewpointAction& action,
                      const EpisodeState& next, const RewardWeights& w);

std::vector<TargetObservation> build_observation(const EpisodeState& state);

// Samples a fresh episode; deterministic given the generator state.
EpisodeState reset_episode(const EnvConfig& cfg, std::mt19937_64& rng);

// Two-phase target-count curriculum.
struct CurriculumSchedule {
  double total_steps = 4e5;
  double phase_boundary = 3e5;
  IntRange phase1{1, 12};
  IntRange phase2{1, 6};

  static CurriculumSchedule with_budget(double total_steps);
};

EpisodeConfig curriculum_phase(const CurriculumSchedule& schedule, const EpisodeConfig& base,
                               double global_step);

// Multi-target active classification environment.
class Environment {
 public:
  explicit Environment(EnvConfig cfg);

  const std::vector<TargetObservation>& reset(std::uint64_t seed);
  // Resets using (and advancing) an external generator.
  const std::vector<TargetObservation>& reset(std::mt19937_64& rng);
  StepResult step(const ViewpointAction& action);

  const EpisodeState& state() const { return state_; }
  EpisodeState& mutable_state() { return state_; }
  const EnvConfig& config() const { return cfg_; }
  void set_episode_config(const EpisodeConfig& ep) { cfg_.episode = ep; }
  const std::vector<TargetObservation>& observations() const { return obs_; }
  bool done() const { return done_; }

 private:
  void advance_targets(double dt);
  void measure(StepInfo& info);

  EnvConfig cfg_;
  EpisodeState state_;
  std::vector<TargetObservation> obs_;
  std::mt19937_64 rng_;
  std::optional<MpcController> controller_;
  bool done_ = false;
};

}  // namespace mtac
