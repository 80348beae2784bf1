#pragma once

#include <mtac/baselines.hpp>
#include <mtac/env.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mtac {

struct MethodSpec {
  std::string name;
  // Called once per worker before any episode runs; may throw (e.g. a
  // missing checkpoint).
  std::function<std::unique_ptr<ViewpointPolicy>()> make;
};

// Factories for the four compared methods. Learned kinds load their
// checkpoint inside the factory; the kind must be one of attention, deepsets,
// handcrafted, single-target.
MethodSpec make_method(const std::string& kind,
                       const std::optional<std::filesystem::path>& checkpoint);
MethodSpec learned_method(const std::string& name, PolicyParams params);
MethodSpec single_target_method(PolicyParams params);
MethodSpec handcrafted_method();

struct EvalConfig {
  EnvConfig env;
  int episodes = 50;
  std::uint64_t seed = 0;
  int workers = 1;
  double metric_time = 75.0;  // seconds
  bool keep_traces = true;
  bool sensor_debug = false;
  ActionMode action_mode = ActionMode::kMean;  // learned policies only
};

struct StepTrace {
  int step = 0;
  int num_classified = 0;
  int visible = 0;
  int visible_unclassified = 0;
  int measurements = 0;
  double reward = 0.0;
  Vec3 drone_position = Vec3::Zero();
  double drone_yaw = 0.0;
  double tracking_error = 0.0;
};

struct SensorTraceRow {
  int step = 0;
  int target = 0;
  bool visible = false;
  double area = 0.0;
  double skew = 1.0;
  double p_true = 0.0;
  double belief_max = 0.0;
};

struct EpisodeRecord {
  std::string method;
  int episode = 0;
  std::uint64_t seed = 0;
  int num_targets = 0;
  Dynamics dynamics = Dynamics::kConstantVelocity;
  int classified_at_metric = 0;
  int classified_final = 0;
  int steps = 0;
  bool completed = false;       // all targets classified before timeout
  double completion_time = 0.0; // seconds; the timeout when not completed
  double total_return = 0.0;
  int misclassified = 0;
  std::vector<StepTrace> trace;
  std::vector<SensorTraceRow> sensor_trace;

  double percent_classified_at_metric() const;
  double mean_simultaneous_first_half() const;
};

struct MethodSummary {
  std::string method;
  int episodes = 0;
  double percent_classified_mean = 0.0, percent_classified_std = 0.0;
  double return_mean = 0.0, return_std = 0.0;
  double completion_time_mean = 0.0, completion_time_std = 0.0;
  double simultaneous_mean = 0.0, simultaneous_std = 0.0;
  double misclassified_percent = 0.0;
  double completion_rate = 0.0;
};

struct EvalReport {
  std::vector<EpisodeRecord> rows;  // sorted by (method order, episode)
  std::vector<std::string> methods;

  std::vector<MethodSummary> summarize() const;
  const EpisodeRecord& row(const std::string& method, int episode) const;
};

// Seed for episode `index`; identical for every method.
std::uint64_t episode_seed(std::uint64_t base, int index);

EpisodeRecord run_episode(ViewpointPolicy& policy, const EnvConfig& env, std::uint64_t seed,
                          int episode, double metric_time, bool sensor_debug = false);

EvalReport run_eval(const std::vector<MethodSpec>& methods, const EvalConfig& cfg);

// Targets classified after the step nearest floor(at / tau_h), or the final
// count when the episode ended earlier.
int metric_classified_at(const std::vector<StepTrace>& trace, double at, double tau_h);

// Visible-and-unclassified count per step.
std::vector<int> metric_simultaneous_observations(const std::vector<StepTrace>& trace);

// mean and sample standard deviation (0 for fewer than two values)
std::pair<double, double> mean_std(const std::vector<double>& xs);

void write_eval_outputs(const EvalReport& report, const EvalConfig& cfg,
                        const std::filesystem::path& out_dir);

}  // namespace mtac
