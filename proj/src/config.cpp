#include <mtac/config.hpp>

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mtac {

namespace {

using nlohmann::json;

// Reads known keys out of one JSON object and complains about the rest.
class Section {
 public:
  Section(const json& root, const std::string& name) : name_(name) {
    if (root.contains(name)) {
      node_ = &root.at(name);
      if (!node_->is_object()) throw std::runtime_error("config: '" + name + "' must be an object");
    }
  }

  template <typename T>
  Section& get(const char* key, T& out) {
    seen_.insert(key);
    if (node_ && node_->contains(key)) {
      try {
        out = node_->at(key).get<T>();
      } catch (const json::exception& e) {
        throw std::runtime_error("config: bad value for " + name_ + "." + key + ": " + e.what());
      }
    }
    return *this;
  }

  Section& get_range(const char* key, IntRange& out) {
    std::vector<int> v{out.lo, out.hi};
    get(key, v);
    if (v.size() != 2) throw std::runtime_error("config: " + name_ + "." + key + " must be [lo, hi]");
    out = {v[0], v[1]};
    return *this;
  }

  Section& get_range(const char* key, RealRange& out) {
    std::vector<double> v{out.lo, out.hi};
    get(key, v);
    if (v.size() != 2) throw std::runtime_error("config: " + name_ + "." + key + " must be [lo, hi]");
    out = {v[0], v[1]};
    return *this;
  }

  const json* node() const { return node_; }

  void finish() const {
    if (!node_) return;
    for (const auto& [k, _] : node_->items()) {
      if (!seen_.count(k)) throw std::runtime_error("config: unknown key " + name_ + "." + k);
    }
  }

 private:
  std::string name_;
  const json* node_ = nullptr;
  std::set<std::string> seen_;
};

}  // namespace

Dynamics parse_dynamics(std::string_view name) {
  if (name == "cv") return Dynamics::kConstantVelocity;
  if (name == "social") return Dynamics::kSocialForces;
  throw std::runtime_error("unknown dynamics '" + std::string(name) + "' (expected cv or social)");
}

std::string_view dynamics_name(Dynamics d) {
  return d == Dynamics::kConstantVelocity ? "cv" : "social";
}

ExperimentConfig parse_config(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("config: invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw std::runtime_error("config: top level must be an object");

  static const std::set<std::string> kSections = {"world",  "social", "camera",     "sensor",
                                                  "episode", "reward", "mpc",       "policy",
                                                  "ppo",     "curriculum", "training"};
  for (const auto& [k, _] : root.items()) {
    if (!kSections.count(k)) throw std::runtime_error("config: unknown section '" + k + "'");
  }

  ExperimentConfig cfg;
  EnvConfig& e = cfg.env;

  Section world(root, "world");
  double yaw_rate_deg = rad2deg(e.world.drone_yaw_rate_max);
  world.get("arena_width", e.world.arena_width)
      .get("arena_height", e.world.arena_height)
      .get("tau_h", e.world.tau_h)
      .get("tau_l", e.world.tau_l)
      .get("target_radius", e.world.target_radius)
      .get("target_height", e.world.target_height)
      .get("target_speed_mean", e.world.target_speed_mean)
      .get("target_speed_std", e.world.target_speed_std)
      .get("target_speed_cap", e.world.target_speed_cap)
      .get("drone_v_max", e.world.drone_v_max)
      .get("drone_yaw_rate_max_deg", yaw_rate_deg)
      .get("drone_altitude", e.world.drone_altitude)
      .get("unlock_z", e.world.unlock_z)
      .finish();
  e.world.drone_yaw_rate_max = deg2rad(yaw_rate_deg);
  e.mpc.dt = e.world.tau_l;

  Section(root, "social")
      .get("goal_attraction_gain", e.social.goal_attraction_gain)
      .get("target_repulsion_strength", e.social.target_repulsion_strength)
      .get("repulsion_range", e.social.repulsion_range)
      .get("wall_repulsion_strength", e.social.wall_repulsion_strength)
      .get("desired_speed", e.social.desired_speed)
      .get("goal_resample_radius", e.social.goal_resample_radius)
      .finish();

  Section(root, "camera")
      .get("focal_px", e.camera.focal_px)
      .get("image_width", e.camera.image_width)
      .get("image_height", e.camera.image_height)
      .get("pitch", e.camera.pitch)
      .finish();

  Section(root, "sensor")
      .get("p_floor", e.law.p_floor)
      .get("p_ceil", e.law.p_ceil)
      .get("area_gain", e.law.area_gain)
      .get("area_ref", e.law.area_ref)
      .get("skew_decay", e.law.skew_decay)
      .get("out_of_frame", e.law.out_of_frame)
      .finish();

  Section episode(root, "episode");
  std::string dyn(dynamics_name(e.episode.dynamics));
  episode.get("timeout", e.episode.timeout)
      .get("b_max", e.episode.b_max)
      .get_range("num_targets", e.episode.num_targets)
      .get_range("static_fraction", e.episode.static_fraction)
      .get("dynamics", dyn)
      .get("num_classes", e.episode.num_classes)
      .get("init_measurements_max", e.episode.init_measurements_max)
      .get_range("init_p_true", e.episode.init_p_true)
      .get("placement_retries", e.episode.placement_retries)
      .get("use_mpc", e.use_mpc)
      .finish();
  e.episode.dynamics = parse_dynamics(dyn);

  Section(root, "reward")
      .get("w_entropy", e.reward.entropy)
      .get("w_classified", e.reward.classified)
      .get("w_complete", e.reward.complete)
      .get("w_time", e.reward.time)
      .get("w_action", e.reward.action)
      .finish();

  Section mpc(root, "mpc");
  double ax = e.mpc.box.accel_max.x();
  mpc.get("horizon", e.mpc.horizon)
      .get("w_u", e.mpc.w_u)
      .get("w_g", e.mpc.w_g)
      .get("accel_max", ax)
      .get("yaw_accel_max", e.mpc.box.yaw_accel_max)
      .get("iterations", e.mpc.iterations)
      .get("step_size", e.mpc.step_size)
      .get("tolerance", e.mpc.tolerance)
      .finish();
  e.mpc.box.accel_max = Vec3::Constant(ax);
  e.mpc.plan_z = e.world.unlock_z;

  Section policy(root, "policy");
  std::string pooling = cfg.policy.pooling == Pooling::kMean ? "mean" : "attention";
  policy.get("d_h", cfg.policy.d_h)
      .get("d_enc", cfg.policy.d_enc)
      .get("heads", cfg.policy.heads)
      .get("pooling", pooling)
      .finish();
  if (pooling == "attention") {
    cfg.policy.pooling = Pooling::kAttention;
  } else if (pooling == "mean") {
    cfg.policy.pooling = Pooling::kMean;
  } else {
    throw std::runtime_error("config: policy.pooling must be 'attention' or 'mean'");
  }

  Section(root, "ppo")
      .get("gae_lambda", cfg.ppo.gae_lambda)
      .get("gamma", cfg.ppo.gamma)
      .get("steps_per_update", cfg.ppo.steps_per_update)
      .get("epochs_per_update", cfg.ppo.epochs_per_update)
      .get("minibatch_size", cfg.ppo.minibatch_size)
      .get("clip_param", cfg.ppo.clip_param)
      .get("kl_target", cfg.ppo.kl_target)
      .get("learning_rate", cfg.ppo.learning_rate)
      .get("kl_coeff_init", cfg.ppo.kl_coeff_init)
      .get("value_loss_coeff", cfg.ppo.value_loss_coeff)
      .get("entropy_coeff", cfg.ppo.entropy_coeff)
      .get("grad_clip", cfg.ppo.grad_clip)
      .get("reward_scale", cfg.ppo.reward_scale)
      .get("vf_clip", cfg.ppo.vf_clip)
      .finish();

  Section training(root, "training");
  training.get("budget", cfg.budget)
      .get("workers", cfg.workers)
      .get("seed", cfg.seed)
      .get("seeds", cfg.training_seeds)
      .get("eval_episodes", cfg.eval_episodes)
      .finish();

  cfg.curriculum = CurriculumSchedule::with_budget(cfg.budget);
  Section(root, "curriculum")
      .get("phase_boundary", cfg.curriculum.phase_boundary)
      .get_range("phase1", cfg.curriculum.phase1)
      .get_range("phase2", cfg.curriculum.phase2)
      .finish();

  if (cfg.training_seeds < 1) throw std::runtime_error("config: training.seeds must be >= 1");
  e.validate();
  cfg.ppo.validate();
  cfg.policy.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const ExperimentConfig& cfg) {
  const EnvConfig& e = cfg.env;
  json j;
  j["world"] = {{"arena_width", e.world.arena_width},
                {"arena_height", e.world.arena_height},
                {"tau_h", e.world.tau_h},
                {"tau_l", e.world.tau_l},
                {"target_radius", e.world.target_radius},
                {"target_height", e.world.target_height},
                {"target_speed_mean", e.world.target_speed_mean},
                {"target_speed_std", e.world.target_speed_std},
                {"target_speed_cap", e.world.target_speed_cap},
                {"drone_v_max", e.world.drone_v_max},
                {"drone_yaw_rate_max_deg", rad2deg(e.world.drone_yaw_rate_max)},
                {"drone_altitude", e.world.drone_altitude},
                {"unlock_z", e.world.unlock_z}};
  j["social"] = {{"goal_attraction_gain", e.social.goal_attraction_gain},
                 {"target_repulsion_strength", e.social.target_repulsion_strength},
                 {"repulsion_range", e.social.repulsion_range},
                 {"wall_repulsion_strength", e.social.wall_repulsion_strength},
                 {"desired_speed", e.social.desired_speed},
                 {"goal_resample_radius", e.social.goal_resample_radius}};
  j["camera"] = {{"focal_px", e.camera.focal_px},
                 {"image_width", e.camera.image_width},
                 {"image_height", e.camera.image_height},
                 {"pitch", e.camera.pitch}};
  j["sensor"] = {{"p_floor", e.law.p_floor},         {"p_ceil", e.law.p_ceil},
                 {"area_gain", e.law.area_gain},     {"area_ref", e.law.area_ref},
                 {"skew_decay", e.law.skew_decay},   {"out_of_frame", e.law.out_of_frame}};
  j["episode"] = {{"timeout", e.episode.timeout},
                  {"b_max", e.episode.b_max},
                  {"num_targets", {e.episode.num_targets.lo, e.episode.num_targets.hi}},
                  {"static_fraction", {e.episode.static_fraction.lo, e.episode.static_fraction.hi}},
                  {"dynamics", std::string(dynamics_name(e.episode.dynamics))},
                  {"num_classes", e.episode.num_classes},
                  {"init_measurements_max", e.episode.init_measurements_max},
                  {"init_p_true", {e.episode.init_p_true.lo, e.episode.init_p_true.hi}},
                  {"placement_retries", e.episode.placement_retries},
                  {"use_mpc", e.use_mpc}};
  j["reward"] = {{"w_entropy", e.reward.entropy},       {"w_classified", e.reward.classified},
                 {"w_complete", e.reward.complete},     {"w_time", e.reward.time},
                 {"w_action", e.reward.action}};
  j["mpc"] = {{"horizon", e.mpc.horizon},
              {"w_u", e.mpc.w_u},
              {"w_g", e.mpc.w_g},
              {"accel_max", e.mpc.box.accel_max.x()},
              {"yaw_accel_max", e.mpc.box.yaw_accel_max},
              {"iterations", e.mpc.iterations},
              {"step_size", e.mpc.step_size},
              {"tolerance", e.mpc.tolerance}};
  j["policy"] = {{"d_h", cfg.policy.d_h},
                 {"d_enc", cfg.policy.d_enc},
                 {"heads", cfg.policy.heads},
                 {"pooling", cfg.policy.pooling == Pooling::kMean ? "mean" : "attention"}};
  j["ppo"] = {{"gae_lambda", cfg.ppo.gae_lambda},
              {"gamma", cfg.ppo.gamma},
              {"steps_per_update", cfg.ppo.steps_per_update},
              {"epochs_per_update", cfg.ppo.epochs_per_update},
              {"minibatch_size", cfg.ppo.minibatch_size},
              {"clip_param", cfg.ppo.clip_param},
              {"kl_target", cfg.ppo.kl_target},
              {"learning_rate", cfg.ppo.learning_rate},
              {"kl_coeff_init", cfg.ppo.kl_coeff_init},
              {"value_loss_coeff", cfg.ppo.value_loss_coeff},
              {"entropy_coeff", cfg.ppo.entropy_coeff},
              {"grad_clip", cfg.ppo.grad_clip},
              {"reward_scale", cfg.ppo.reward_scale},
              {"vf_clip", cfg.ppo.vf_clip}};
  j["curriculum"] = {{"phase_boundary", cfg.curriculum.phase_boundary},
                     {"phase1", {cfg.curriculum.phase1.lo, cfg.curriculum.phase1.hi}},
                     {"phase2", {cfg.curriculum.phase2.lo, cfg.curriculum.phase2.hi}}};
  j["training"] = {{"budget", cfg.budget},
                   {"workers", cfg.workers},
                   {"seed", cfg.seed},
                   {"seeds", cfg.training_seeds},
                   {"eval_episodes", cfg.eval_episodes}};
  return j.dump(2);
}

}  // namespace mtac
