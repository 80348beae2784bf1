#pragma once

#include <mtac/env.hpp>
#include <mtac/policy.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mtac {

struct PPOHyperparams {
  double gae_lambda = 0.95;
  double gamma = 0.99;
  int steps_per_update = 16000;
  int epochs_per_update = 30;
  int minibatch_size = 256;
  double clip_param = 0.3;
  double kl_target = 0.01;
  double learning_rate = 3e-4;
  double kl_coeff_init = 0.2;
  double value_loss_coeff = 1.0;
  double entropy_coeff = 0.001;
  double grad_clip = 0.1;  // global L2 norm
  double reward_scale = 0.01;  // applied to rewards before GAE
  double vf_clip = 0.0;       // caps each squared value error; 0 disables
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

// Number of minibatch gradient steps in one update: the shuffled epochs are
// streamed back to back and cut into full minibatches.
int gradient_steps_per_update(const PPOHyperparams& hp, int batch_steps);

struct Transition {
  Eigen::MatrixXd features;  // encoded observation set
  Eigen::Vector3d pre_squash = Eigen::Vector3d::Zero();
  Eigen::Vector3d mu_old = Eigen::Vector3d::Zero();
  Eigen::Vector3d log_std_old = Eigen::Vector3d::Zero();
  double log_prob_old = 0.0;  // Gaussian log-density of pre_squash
  double reward = 0.0;
  double value_old = 0.0;
  bool done = false;
};

// One worker's contiguous rollout segment.
struct Trajectory {
  std::vector<Transition> steps;
  double bootstrap_value = 0.0;  // V(s_T); ignored when the last step is done
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// delta_t = r_t + gamma v_{t+1} (1 - done_t) - v_t
// A_t     = delta_t + gamma lambda (1 - done_t) A_{t+1}
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const bool> dones, double bootstrap_value, double gamma,
                      double lambda);

struct PPOSample {
  const Transition* step = nullptr;
  double advantage = 0.0;
  double ret = 0.0;
};

struct LossStats {
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double kl = 0.0;
  double clip_frac = 0.0;
};

// Clipped surrogate + kl_coeff * KL(old || new) + c_v * (V - R)^2 - c_e * H,
// averaged over the batch. When `grad` is non-empty the gradient of the loss
// w.r.t. the parameters is accumulated into it.
LossStats ppo_loss(std::span<const PPOSample> batch, const PolicyParams& params,
                   double kl_coeff, const PPOHyperparams& hp, std::span<double> grad = {});

// Doubles the coefficient when KL > 2 target, halves it when KL < target / 2.
double adapt_kl_coeff(double kl_measured, double kl_coeff, double kl_target);

// Scales `grad` so its L2 norm is at most max_norm; returns the pre-clip norm.
double clip_grad_norm(std::span<double> grad, double max_norm);

class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t size, double beta1, double beta2, double eps);
  void step(std::span<double> params, std::span<const double> grad, double lr);
  std::int64_t step_count() const { return t_; }
  bool finite() const;

 private:
  std::vector<double> m_, v_;
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

struct TrainConfig {
  EnvConfig env;
  PPOHyperparams hp;
  PolicyDims dims;
  CurriculumSchedule schedule = CurriculumSchedule::with_budget(4e5);
  double budget = 4e5;  // environment steps
  std::uint64_t seed = 0;
  int workers = 4;
  std::optional<std::filesystem::path> out_dir;  // metrics CSV + checkpoints
  bool save_every_update = true;
  bool verbose = false;
};

struct UpdateMetrics {
  int update = 0;
  std::int64_t env_steps = 0;
  double mean_return = 0.0;  // NaN when no episode finished this round
  double mean_length = 0.0;
  double kl = 0.0;
  double entropy = 0.0;
  double clip_frac = 0.0;
  double kl_coeff = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  int episodes = 0;
};

struct TrainResult {
  PolicyParams params;
  std::vector<UpdateMetrics> metrics;
  std::vector<std::filesystem::path> checkpoints;
  bool diverged = false;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const UpdateMetrics& m);

// PPO training loop with parallel rollout workers and the two-phase
// curriculum. Deterministic given the seed and worker count.
TrainResult train(const TrainConfig& cfg,
                  const std::function<void(const UpdateMetrics&)>& on_update = {});

}  // namespace mtac
