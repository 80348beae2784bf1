#include <mtac/baselines.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mtac {

int SequentialPlan::update(const EpisodeState& state) {
  const int m = state.num_targets();
  if (focus_ >= 0 && focus_ < m && !state.status[focus_].classified) return focus_;
  focus_ = -1;
  double best = std::numeric_limits<double>::infinity();
  const Vec2 drone = state.drone.position.head<2>();
  for (int j = 0; j < m; ++j) {
    if (state.status[j].classified) continue;
    const double d = (state.targets[j].position - drone).norm();
    if (d < best) {
      best = d;
      focus_ = j;
    }
  }
  return focus_;
}

ViewpointAction handcrafted_action(const EpisodeState& state, SequentialPlan& plan,
                                   const ActionBounds& bounds, double standoff, double lead) {
  const int focus = plan.update(state);
  if (focus < 0) return {};
  const TargetState& t = state.targets[focus];
  const Vec2 front(std::cos(t.facing), std::sin(t.facing));
  const Vec2 desired = t.position + lead * t.velocity + standoff * front;
  const double desired_yaw = wrap_angle(t.facing + kPi);
  ViewpointAction a;
  a.delta_position = world_to_body(desired - state.drone.position.head<2>(), state.drone.yaw);
  a.delta_yaw = wrap_angle(desired_yaw - state.drone.yaw);
  return bounds.clamp(a);
}

PolicyOutput deepsets_forward(const Eigen::MatrixXd& features, const PolicyParams& params) {
  if (params.dims().pooling != Pooling::kMean) {
    throw std::invalid_argument("deepsets_forward: parameters use attention pooling");
  }
  return policy_forward(features, params);
}

void copy_shared_trunk(const PolicyParams& from, PolicyParams& to) {
  const PolicyDims& a = from.dims();
  const PolicyDims& b = to.dims();
  if (a.d_in != b.d_in || a.d_h != b.d_h || a.d_enc != b.d_enc || a.heads != b.heads) {
    throw std::invalid_argument("copy_shared_trunk: trunk dimensions differ");
  }
  const ParamLayout& L = from.layout();
  const std::size_t trunk = L.sab_o.back().offset + L.sab_o.back().size();
  std::copy_n(from.data().begin(), trunk, to.data().begin());
}

LearnedPolicy::LearnedPolicy(std::string name, PolicyParams params)
    : name_(std::move(name)), params_(std::move(params)) {}

namespace {

constexpr std::uint64_t kActionSalt = 0x9e3779b97f4a7c15ull;

ViewpointAction pick(const PolicyOutput& out, const ActionBounds& bounds, ActionMode mode,
                     std::mt19937_64& rng) {
  if (mode == ActionMode::kSample) return sample_action(out, bounds, rng).action;
  return deterministic_action(out, bounds);
}

}  // namespace

void LearnedPolicy::reset(std::uint64_t episode_seed) { rng_.seed(episode_seed ^ kActionSalt); }

ViewpointAction LearnedPolicy::act(const Environment& env) {
  if (env.observations().empty()) return {};
  const PolicyOutput out = policy_forward(encode_observations(env.observations()), params_);
  return pick(out, env.config().action_bounds(), mode_, rng_);
}

ViewpointAction HandcraftedPolicy::act(const Environment& env) {
  return handcrafted_action(env.state(), plan_, env.config().action_bounds(), standoff_,
                            env.config().world.tau_h);
}

SingleTargetPolicy::SingleTargetPolicy(PolicyParams params) : params_(std::move(params)) {}

void SingleTargetPolicy::reset(std::uint64_t episode_seed) {
  plan_.reset();
  rng_.seed(episode_seed ^ kActionSalt);
}

ViewpointAction SingleTargetPolicy::act(const Environment& env) {
  const int focus = plan_.update(env.state());
  if (focus < 0) return {};
  const auto& obs = env.observations();
  const Eigen::MatrixXd features = encode_observations(std::span(&obs[focus], 1));
  const PolicyOutput out = policy_forward(features, params_);
  return pick(out, env.config().action_bounds(), mode_, rng_);
}

}  // namespace mtac
