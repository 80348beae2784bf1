#pragma once

#include <mtac/env.hpp>
#include <mtac/policy.hpp>

#include <memory>
#include <random>
#include <string>

namespace mtac {

// Focus selection for the sequential baselines: the nearest unclassified
// target (ties to the lowest id), kept until it becomes classified.
class SequentialPlan {
 public:
  // Returns the focus index, or -1 when every target is classified.
  int update(const EpisodeState& state);
  int focus() const { return focus_; }
  void reset() { focus_ = -1; }

 private:
  int focus_ = -1;
};

// Steps toward the pose `standoff` meters in front of the focus target,
// looking back at it. The target position is extrapolated `lead` seconds
// along its velocity. Zero action when everything is classified.
ViewpointAction handcrafted_action(const EpisodeState& state, SequentialPlan& plan,
                                   const ActionBounds& bounds, double standoff = 2.0,
                                   double lead = 0.0);

// Mean-pooling ablation; `params` must use Pooling::kMean.
PolicyOutput deepsets_forward(const Eigen::MatrixXd& features, const PolicyParams& params);

// Copies the self-attention trunk (which leads the parameter layout) between
// networks of equal SAB dimensions.
void copy_shared_trunk(const PolicyParams& from, PolicyParams& to);

// Common interface used by the evaluation harness.
// How learned policies turn the Gaussian head into a viewpoint: the squashed
// mean, or a squashed sample from a generator reseeded every episode.
enum class ActionMode { kMean, kSample };

class ViewpointPolicy {
 public:
  virtual ~ViewpointPolicy() = default;
  virtual std::string name() const = 0;
  virtual void reset(std::uint64_t /*episode_seed*/) {}
  virtual void set_action_mode(ActionMode) {}
  virtual ViewpointAction act(const Environment& env) = 0;
};

// Attention or DeepSets network acting on the full observation set.
class LearnedPolicy final : public ViewpointPolicy {
 public:
  LearnedPolicy(std::string name, PolicyParams params);
  std::string name() const override { return name_; }
  void reset(std::uint64_t episode_seed) override;
  void set_action_mode(ActionMode mode) override { mode_ = mode; }
  ViewpointAction act(const Environment& env) override;
  const PolicyParams& params() const { return params_; }

 private:
  std::string name_;
  PolicyParams params_;
  ActionMode mode_ = ActionMode::kMean;
  std::mt19937_64 rng_;
};

class HandcraftedPolicy final : public ViewpointPolicy {
 public:
  explicit HandcraftedPolicy(double standoff = 2.0) : standoff_(standoff) {}
  std::string name() const override { return "handcrafted"; }
  void reset(std::uint64_t) override { plan_.reset(); }
  ViewpointAction act(const Environment& env) override;

 private:
  SequentialPlan plan_;
  double standoff_;
};

// Network trained on single-target episodes, fed only the focus target.
class SingleTargetPolicy final : public ViewpointPolicy {
 public:
  explicit SingleTargetPolicy(PolicyParams params);
  std::string name() const override { return "single-target"; }
  void reset(std::uint64_t episode_seed) override;
  void set_action_mode(ActionMode mode) override { mode_ = mode; }
  ViewpointAction act(const Environment& env) override;
  int focus() const { return plan_.focus(); }

 private:
  PolicyParams params_;
  SequentialPlan plan_;
  ActionMode mode_ = ActionMode::kMean;
  std::mt19937_64 rng_;
};

}  // namespace mtac
