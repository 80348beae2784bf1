#pragma once

#include <mtac/env.hpp>
#include <mtac/policy.hpp>
#include <mtac/ppo.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace mtac {

// Everything an experiment needs; every field has an embedded default and
// any subset can be overridden from a JSON file.
struct ExperimentConfig {
  EnvConfig env;
  PPOHyperparams ppo;
  PolicyDims policy;
  CurriculumSchedule curriculum = CurriculumSchedule::with_budget(4e5);
  double budget = 4e5;
  int workers = 4;
  std::uint64_t seed = 0;
  int training_seeds = 2;  // train runs seed, seed+1, ...
  int eval_episodes = 50;
};

// Parses a JSON document on top of the defaults. Unknown keys are rejected
// so typos surface as errors. Throws std::runtime_error.
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string dump_config(const ExperimentConfig& cfg);

Dynamics parse_dynamics(std::string_view name);
std::string_view dynamics_name(Dynamics d);

}  // namespace mtac
