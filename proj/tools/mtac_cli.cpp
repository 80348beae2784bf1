#include <mtac/config.hpp>
#include <mtac/eval.hpp>
#include <mtac/log.hpp>
#include <mtac/ppo.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>

namespace fs = std::filesystem;
using namespace mtac;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out = "out";
  bool verbose = false;
};

ExperimentConfig base_config(const Globals& g) {
  ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (g.workers) cfg.workers = *g.workers;
  return cfg;
}

void set_arena(EnvConfig& env, double side) {
  env.world.arena_width = side;
  env.world.arena_height = side;
}

template <typename F>
double seconds_per_call(int reps, F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) f();
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
  return dt.count() / reps;
}

int cmd_train(const Globals& g, double budget, std::optional<double> boundary,
              std::optional<int> max_targets, std::optional<double> arena,
              const std::string& pooling, std::optional<int> seeds) {
  ExperimentConfig cfg = base_config(g);
  if (budget > 0) {
    const double old_boundary_frac = cfg.curriculum.phase_boundary / cfg.curriculum.total_steps;
    cfg.budget = budget;
    cfg.curriculum.total_steps = budget;
    cfg.curriculum.phase_boundary = old_boundary_frac * budget;
  }
  if (boundary) cfg.curriculum.phase_boundary = *boundary;
  if (max_targets) {
    cfg.curriculum.phase1 = {1, *max_targets};
    cfg.curriculum.phase2 = {1, std::min(*max_targets, cfg.curriculum.phase2.hi)};
    cfg.env.episode.num_targets = cfg.curriculum.phase1;
  }
  if (arena) set_arena(cfg.env, *arena);
  if (!pooling.empty()) cfg.policy.pooling = pooling == "mean" ? Pooling::kMean : Pooling::kAttention;

  if (seeds) cfg.training_seeds = *seeds;

  fs::create_directories(g.out);
  {
    std::ofstream f(fs::path(g.out) / "config.json");
    f << dump_config(cfg) << '\n';
  }
  bool diverged = false;
  for (int k = 0; k < cfg.training_seeds; ++k) {
    TrainConfig tc;
    tc.env = cfg.env;
    tc.hp = cfg.ppo;
    tc.dims = cfg.policy;
    tc.schedule = cfg.curriculum;
    tc.budget = cfg.budget;
    tc.seed = cfg.seed + static_cast<std::uint64_t>(k);
    tc.workers = cfg.workers;
    tc.out_dir = cfg.training_seeds == 1 ? fs::path(g.out)
                                         : fs::path(g.out) / ("seed_" + std::to_string(tc.seed));
    tc.verbose = g.verbose;
    if (cfg.training_seeds > 1) std::printf("seed %llu\n", static_cast<unsigned long long>(tc.seed));
    const TrainResult res = train(tc, [&](const UpdateMetrics& m) {
      std::printf("update %4d  steps %9lld  return %10.3f  len %7.1f  kl %.4f  ent %.3f\n", m.update,
                  static_cast<long long>(m.env_steps), m.mean_return, m.mean_length, m.kl,
                  m.entropy);
      std::fflush(stdout);
    });
    std::printf("wrote %s\n", (*tc.out_dir / "policy.bin").c_str());
    diverged = diverged || res.diverged;
  }
  return diverged ? 3 : 0;
}

struct EvalOptions {
  std::vector<std::string> policies{"handcrafted"};
  std::string attention_ckpt, deepsets_ckpt, single_ckpt;
  int episodes = -1;
  int num_targets = -1;
  int max_targets = -1;
  std::string dynamics;
  double timeout = -1.0;
  double arena = -1.0;
  double static_fraction = -1.0;
  bool mpc = false;
  bool no_traces = false;
  bool sensor_debug = false;
  bool sample = false;
};

int cmd_eval(const Globals& g, const EvalOptions& o) {
  ExperimentConfig cfg = base_config(g);
  EvalConfig ec;
  ec.env = cfg.env;
  ec.episodes = o.episodes >= 0 ? o.episodes : cfg.eval_episodes;
  ec.seed = cfg.seed;
  ec.workers = cfg.workers;
  ec.keep_traces = !o.no_traces;
  ec.sensor_debug = o.sensor_debug;
  if (o.sample) ec.action_mode = ActionMode::kSample;
  if (o.max_targets > 0) ec.env.episode.num_targets = {1, o.max_targets};
  if (o.num_targets > 0) ec.env.episode.num_targets = {o.num_targets, o.num_targets};
  if (!o.dynamics.empty()) ec.env.episode.dynamics = parse_dynamics(o.dynamics);
  if (o.timeout > 0) ec.env.episode.timeout = o.timeout;
  if (o.arena > 0) set_arena(ec.env, o.arena);
  if (o.static_fraction >= 0) ec.env.episode.static_fraction = {o.static_fraction, o.static_fraction};
  ec.env.use_mpc = ec.env.use_mpc || o.mpc;

  const std::map<std::string, std::string> ckpt{{"attention", o.attention_ckpt},
                                                {"deepsets", o.deepsets_ckpt},
                                                {"single-target", o.single_ckpt}};
  std::vector<MethodSpec> methods;
  for (const auto& p : o.policies) {
    std::optional<fs::path> path;
    if (auto it = ckpt.find(p); it != ckpt.end() && !it->second.empty()) path = it->second;
    methods.push_back(make_method(p, path));
  }

  const EvalReport report = run_eval(methods, ec);
  write_eval_outputs(report, ec, g.out);
  for (const auto& s : report.summarize()) {
    std::printf("%-14s classified@%gs %6.2f%% +- %5.2f  return %9.3f +- %8.3f  sim %.3f  done %.0f%%\n",
                s.method.c_str(), ec.metric_time, s.percent_classified_mean,
                s.percent_classified_std, s.return_mean, s.return_std, s.simultaneous_mean,
                100.0 * s.completion_rate);
  }
  const auto expected = static_cast<std::size_t>(ec.episodes) * methods.size();
  return report.rows.size() == expected ? 0 : 1;
}

int cmd_bench(const Globals& g) {
  ExperimentConfig cfg = base_config(g);
  std::mt19937_64 rng(cfg.seed);
  const PolicyParams params = PolicyParams::initialize(cfg.policy, rng);

  for (int m : {1, 3, 10, 40}) {
    std::vector<TargetObservation> obs(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) {
      obs[j].rel_position = Vec2(0.5 * j, 3.0 - 0.1 * j);
      obs[j].rel_facing = 0.1 * j;
    }
    const Eigen::MatrixXd x = encode_observations(obs);
    const double t = seconds_per_call(2000, [&] { (void)policy_forward(x, params); });
    std::printf("policy_forward   M=%-3d %10.2f us\n", m, 1e6 * t);
  }

  EnvConfig env_cfg = cfg.env;
  env_cfg.episode.num_targets = {10, 10};
  Environment env(env_cfg);
  env.reset(cfg.seed);
  HandcraftedPolicy hc;
  const double t_env = seconds_per_call(2000, [&] {
    if (env.done()) {
      env.reset(rng);
      hc.reset(0);
    }
    env.step(hc.act(env));
  });
  std::printf("env.step         M=10  %10.2f us\n", 1e6 * t_env);

  DroneState d;
  d.position = Vec3(10, 10, env_cfg.world.drone_altitude);
  const ViewpointTarget vt{Vec3(12.5, 11.0, env_cfg.world.drone_altitude), 1.0};
  const double t_mpc = seconds_per_call(200, [&] { (void)mpc_solve(d, vt, env_cfg.mpc); });
  std::printf("mpc_solve        N=%-3d %10.2f us\n", env_cfg.mpc.horizon, 1e6 * t_mpc);
  return 0;
}

int cmd_inspect(const std::string& path) {
  const PolicyParams p = load_checkpoint(path);
  const PolicyDims& d = p.dims();
  double sq = 0.0, mx = 0.0;
  bool finite = true;
  for (double v : p.data()) {
    sq += v * v;
    mx = std::max(mx, std::abs(v));
    finite = finite && std::isfinite(v);
  }
  std::printf("checkpoint  %s\n", path.c_str());
  std::printf("d_in        %d\nd_h         %d\nd_enc       %d\nheads       %d\n", d.d_in, d.d_h,
              d.d_enc, d.heads);
  std::printf("pooling     %s\n", d.pooling == Pooling::kMean ? "mean" : "attention");
  std::printf("parameters  %zu\nl2 norm     %.6g\nmax |w|     %.6g\nfinite      %s\n", p.size(),
              std::sqrt(sq), mx, finite ? "yes" : "no");
  return finite ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-target active classification: training, evaluation and tools"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON config overriding the defaults")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Base seed");
  app.add_option("--workers", g.workers, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("-v,--verbose", g.verbose, "Log progress to stderr");

  auto* train_cmd = app.add_subcommand("train", "Train a policy with PPO");
  double budget = -1.0;
  std::optional<double> boundary;
  std::optional<int> max_targets;
  std::optional<double> train_arena;
  std::string pooling;
  train_cmd->add_option("--budget", budget, "Environment steps");
  train_cmd->add_option("--phase-boundary", boundary, "Step at which the curriculum switches");
  train_cmd->add_option("--max-targets", max_targets, "Upper target count for both phases")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--arena", train_arena, "Square arena side in meters");
  train_cmd->add_option("--pooling", pooling, "attention or mean")
      ->check(CLI::IsMember({"attention", "mean"}));
  std::optional<int> train_seeds;
  train_cmd->add_option("--seeds", train_seeds, "Independent runs from seed, seed+1, ...")
      ->check(CLI::PositiveNumber);

  auto* eval_cmd = app.add_subcommand("eval", "Paired evaluation of one or more policies");
  EvalOptions eo;
  eval_cmd->add_option("--policy", eo.policies, "Methods to compare")
      ->check(CLI::IsMember({"attention", "deepsets", "handcrafted", "single-target"}))
      ->delimiter(',');
  eval_cmd->add_option("--attention-checkpoint", eo.attention_ckpt);
  eval_cmd->add_option("--deepsets-checkpoint", eo.deepsets_ckpt);
  eval_cmd->add_option("--single-target-checkpoint", eo.single_ckpt);
  eval_cmd->add_option("--episodes", eo.episodes);
  eval_cmd->add_option("--num-targets", eo.num_targets, "Fixed target count");
  eval_cmd->add_option("--max-targets", eo.max_targets, "Target count drawn from 1..N")
      ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--dynamics", eo.dynamics)->check(CLI::IsMember({"cv", "social"}));
  eval_cmd->add_option("--timeout", eo.timeout, "Episode timeout in seconds");
  eval_cmd->add_option("--arena", eo.arena, "Square arena side in meters");
  eval_cmd->add_option("--static-fraction", eo.static_fraction);
  eval_cmd->add_flag("--mpc", eo.mpc, "Track viewpoints with the MPC controller");
  eval_cmd->add_flag("--no-traces", eo.no_traces, "Skip per-episode trace files");
  eval_cmd->add_flag("--sensor-debug", eo.sensor_debug, "Dump per-step sensor readings");
  eval_cmd->add_flag("--sample-actions", eo.sample,
                     "Learned policies sample from their action distribution");

  auto* bench_cmd = app.add_subcommand("bench", "Micro-benchmarks of the hot paths");

  auto* inspect_cmd = app.add_subcommand("inspect-checkpoint", "Print checkpoint metadata");
  std::string ckpt_path;
  inspect_cmd->add_option("path", ckpt_path)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  if (g.verbose) log::set_level(log::Level::kInfo);

  try {
    if (*train_cmd) return cmd_train(g, budget, boundary, max_targets, train_arena, pooling, train_seeds);
    if (*eval_cmd) return cmd_eval(g, eo);
    if (*bench_cmd) return cmd_bench(g);
    if (*inspect_cmd) return cmd_inspect(ckpt_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
