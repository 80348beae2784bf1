#include <mtac/baselines.hpp>
#include <mtac/belief.hpp>
#include <mtac/config.hpp>
#include <mtac/eval.hpp>
#include <mtac/mpc.hpp>
#include <mtac/ppo.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using namespace mtac;

namespace {

struct Options {
  std::string unit_tests;
  fs::path work = "acceptance_work";
  bool reuse = false;
  std::uint64_t seed = 1;
  std::string only;
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::vector<std::string> g_info;

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void set_arena(EnvConfig& env, double side) {
  env.world.arena_width = side;
  env.world.arena_height = side;
}

ExperimentConfig desk_config(const Options& o, IntRange targets) {
  ExperimentConfig cfg;
  set_arena(cfg.env, 15.0);
  cfg.env.episode.dynamics = Dynamics::kConstantVelocity;
  cfg.env.episode.num_targets = targets;
  cfg.curriculum.phase1 = targets;
  cfg.curriculum.phase2 = targets;
  cfg.seed = o.seed;
  cfg.training_seeds = 1;
  cfg.workers = 1;
  return cfg;
}

// Trains into work/name, or loads the policy there when --reuse is set and
// the stored config matches.
PolicyParams trained(const Options& o, const std::string& name, const ExperimentConfig& cfg,
                     std::vector<UpdateMetrics>* metrics = nullptr) {
  const fs::path dir = o.work / name;
  const std::string dumped = dump_config(cfg);
  if (o.reuse && fs::exists(dir / "policy.bin") && slurp(dir / "config.json") == dumped + "\n") {
    std::printf("  [%s] reusing %s\n", name.c_str(), (dir / "policy.bin").c_str());
    std::fflush(stdout);
    if (metrics) {
      std::ifstream f(dir / "train_metrics.csv");
      std::string line;
      std::getline(f, line);
      while (std::getline(f, line)) {
        std::stringstream ss(line);
        std::string cell;
        UpdateMetrics m;
        std::getline(ss, cell, ',');
        m.update = std::stoi(cell);
        std::getline(ss, cell, ',');
        m.env_steps = std::stoll(cell);
        std::getline(ss, cell, ',');
        m.mean_return = std::stod(cell);
        metrics->push_back(m);
      }
    }
    return load_checkpoint(dir / "policy.bin");
  }
  fs::remove_all(dir);
  fs::create_directories(dir);
  TrainConfig tc;
  tc.env = cfg.env;
  tc.hp = cfg.ppo;
  tc.dims = cfg.policy;
  tc.schedule = cfg.curriculum;
  tc.budget = cfg.budget;
  tc.seed = cfg.seed;
  tc.workers = cfg.workers;
  tc.out_dir = dir;
  tc.save_every_update = false;
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult r = train(tc, [&](const UpdateMetrics& m) {
    std::printf("  [%s] update %d steps %lld return %.3f\n", name.c_str(), m.update,
                static_cast<long long>(m.env_steps), m.mean_return);
    std::fflush(stdout);
  });
  std::printf("  [%s] trained in %.0f s\n", name.c_str(), seconds_since(t0));
  std::ofstream(dir / "config.json") << dumped << '\n';
  if (metrics) *metrics = r.metrics;
  return r.params;
}

const MethodSummary& summary_of(const std::vector<MethodSummary>& s, const std::string& m) {
  return *std::find_if(s.begin(), s.end(), [&](const MethodSummary& x) { return x.method == m; });
}

double percent_classified_final(const EvalReport& rep, const std::string& method) {
  std::vector<double> v;
  for (const auto& r : rep.rows) {
    if (r.method == method) v.push_back(100.0 * r.classified_final / r.num_targets);
  }
  return mean_std(v).first;
}

Outcome property_suite(const Options& o) {
  if (o.unit_tests.empty()) return {false, "unit test binary not given"};
  const std::string cmd = "\"" + o.unit_tests + "\" --test-suite=property --no-version=true";
  const auto t0 = std::chrono::steady_clock::now();
  const int rc = std::system(cmd.c_str());
  const double dt = seconds_since(t0);
  return {rc == 0 && dt < 120.0, fmt("exit %d, %.1f s (limit 120 s)", rc, dt)};
}

Outcome conflation_convergence() {
  Belief b = Belief::uniform(2);
  ClassProbability z;
  z.probs = Eigen::Vector2d(0.8, 0.2);
  int n = 0;
  while (b.max_prob() < 0.95 && n < 10) {
    b = conflate(b, z);
    ++n;
  }
  return {n == 3, fmt("b_max %.6f after %d fusions (expected 3)", b.max_prob(), n)};
}

Outcome learning_smoke(const Options& o) {
  ExperimentConfig cfg = desk_config(o, {1, 1});
  cfg.env.episode.static_fraction = {1.0, 1.0};
  cfg.budget = 2e5;
  cfg.curriculum = CurriculumSchedule::with_budget(cfg.budget);
  cfg.curriculum.phase1 = cfg.curriculum.phase2 = {1, 1};
  std::vector<UpdateMetrics> ms;
  trained(o, "smoke_static", cfg, &ms);
  std::vector<double> ret;
  for (const auto& m : ms) {
    if (std::isfinite(m.mean_return)) ret.push_back(m.mean_return);
  }
  const std::size_t q = ret.size() / 4;
  if (q == 0) return {false, "too few updates with finished episodes"};
  const double first = std::accumulate(ret.begin(), ret.begin() + q, 0.0) / q;
  const double last = std::accumulate(ret.end() - q, ret.end(), 0.0) / q;
  return {last > first, fmt("mean return first quartile %.3f, last quartile %.3f", first, last)};
}

Outcome desk_learning(const Options& o, const PolicyParams& att) {
  EvalConfig ec;
  ec.env = desk_config(o, {1, 3}).env;
  ec.episodes = 50;
  ec.seed = 1000 + o.seed;
  ec.keep_traces = false;
  const std::vector<MethodSpec> methods{learned_method("attention", att), handcrafted_method()};
  {
    const EvalReport mean = run_eval(methods, ec);
    write_eval_outputs(mean, ec, o.work / "eval_desk_mean");
    g_info.push_back(fmt("desk_learning with mean actions: classified %.1f%%, return %.2f",
                         percent_classified_final(mean, "attention"),
                         summary_of(mean.summarize(), "attention").return_mean));
  }
  ec.action_mode = ActionMode::kSample;
  const EvalReport rep = run_eval(methods, ec);
  write_eval_outputs(rep, ec, o.work / "eval_desk");
  const auto sums = rep.summarize();
  const double pct = percent_classified_final(rep, "attention");
  const double hpct = percent_classified_final(rep, "handcrafted");
  const double ret = summary_of(sums, "attention").return_mean;
  const double hret = summary_of(sums, "handcrafted").return_mean;
  const double floor = hret - 0.1 * std::abs(hret);
  return {pct >= 80.0 && ret >= floor,
          fmt("sampled actions, classified %.1f%% (need >= 80), return %.2f vs handcrafted %.2f (need >= %.2f); "
              "handcrafted classified %.1f%%",
              pct, ret, hret, floor, hpct)};
}

bool finite(const PolicyOutput& y) {
  return y.mu.allFinite() && y.log_std.allFinite() && std::isfinite(y.value);
}

Outcome scalability(const Options& o, const PolicyParams& att) {
  EnvConfig env;
  env.episode.num_targets = {40, 40};
  Environment e(env);
  std::mt19937_64 rng(o.seed);
  int steps = 0, checks = 0;
  double worst = 0.0;
  bool ok = true;
  for (int ep = 0; ep < 3; ++ep) {
    e.reset(episode_seed(2000 + o.seed, ep));
    while (!e.done()) {
      const Eigen::MatrixXd x = encode_observations(e.observations());
      if (x.rows() != 40) ok = false;
      const PolicyOutput y = policy_forward(x, att);
      ok = ok && finite(y);
      if (steps % 10 == 0) {
        std::vector<int> perm(40);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Eigen::MatrixXd xp(x.rows(), x.cols());
        for (int i = 0; i < 40; ++i) xp.row(i) = x.row(perm[i]);
        const PolicyOutput yp = policy_forward(xp, att);
        worst = std::max({worst, (y.mu - yp.mu).cwiseAbs().maxCoeff(),
                          (y.log_std - yp.log_std).cwiseAbs().maxCoeff(),
                          std::abs(y.value - yp.value)});
        ++checks;
      }
      e.step(deterministic_action(y, env.action_bounds()));
      ++steps;
    }
  }
  return {ok && worst < 1e-12,
          fmt("3 episodes, %d steps at M=40, outputs finite: %s, max permutation gap %.2e over %d "
              "checks",
              steps, ok ? "yes" : "no", worst, checks)};
}

Outcome ablation(const Options& o, const PolicyParams& att, const PolicyParams& single,
                 const PolicyParams& deepsets, std::string& report) {
  EvalConfig ec;
  set_arena(ec.env, 20.0);
  ec.env.episode.num_targets = {10, 10};
  ec.episodes = 30;
  ec.seed = 3000 + o.seed;
  ec.keep_traces = true;
  ec.action_mode = ActionMode::kSample;
  const EvalReport rep = run_eval({learned_method("attention", att), single_target_method(single),
                                   learned_method("deepsets", deepsets)},
                                  ec);
  EvalConfig out = ec;
  out.keep_traces = false;
  write_eval_outputs(rep, out, o.work / "eval_ablation");
  const auto sums = rep.summarize();
  const auto& a = summary_of(sums, "attention");
  const auto& s = summary_of(sums, "single-target");
  const auto& d = summary_of(sums, "deepsets");
  report = fmt("attention %.3f vs deepsets %.3f simultaneous observations (%s); classified %.1f%% "
               "vs %.1f%%",
               a.simultaneous_mean, d.simultaneous_mean,
               a.simultaneous_mean >= d.simultaneous_mean ? "attention ahead" : "deepsets ahead",
               a.percent_classified_mean, d.percent_classified_mean);
  return {a.simultaneous_mean >= s.simultaneous_mean,
          fmt("mean simultaneous observations, first half, 10 targets: attention %.3f, "
              "single-target %.3f",
              a.simultaneous_mean, s.simultaneous_mean)};
}

Outcome closed_loop_mpc(const Options& o, const PolicyParams& att) {
  MPCConfig cfg;
  WorldConfig w;
  DroneState x;
  x.position = Vec3(10, 10, w.drone_altitude);
  const ViewpointTarget t{Vec3(12.4, 11.8, w.drone_altitude), deg2rad(40)};
  MpcController ctl(cfg);
  for (int k = 0; k < 100; ++k) x = drone_dynamics_f(x, ctl.track(x, t), cfg.dt, w, cfg.box);
  const double pos_err = (x.position - t.position).norm();
  const double yaw_err = rad2deg(std::abs(wrap_angle(x.yaw - t.yaw)));

  EvalConfig ec;
  ec.env = desk_config(o, {1, 3}).env;
  ec.env.use_mpc = true;
  ec.episodes = 5;
  ec.seed = 4000 + o.seed;
  const EvalReport rep = run_eval({learned_method("attention", att), handcrafted_method()}, ec);
  int finished = 0, gaps = 0;
  const int max_steps = ec.env.max_steps();
  for (const auto& r : rep.rows) {
    const bool ended = r.classified_final == r.num_targets || r.steps == max_steps;
    if (ended && r.steps == static_cast<int>(r.trace.size())) ++finished;
    for (const auto& s : r.trace) gaps += s.measurements < 1;
  }
  const int total = static_cast<int>(rep.rows.size());
  return {pos_err < 0.05 && yaw_err < 2.0 && finished == total && gaps == 0,
          fmt("tracking error %.4f m, %.3f deg after 100 steps; MPC eval %d/%d episodes ended, "
              "%d steps without a measurement",
              pos_err, yaw_err, finished, total, gaps)};
}

Outcome determinism(const Options& o) {
  ExperimentConfig cfg = desk_config(o, {1, 3});
  TrainConfig tc;
  tc.env = cfg.env;
  tc.hp.steps_per_update = 1000;
  tc.hp.minibatch_size = 250;
  tc.hp.epochs_per_update = 2;
  tc.dims = cfg.policy;
  tc.budget = 3000;
  tc.schedule = CurriculumSchedule::with_budget(tc.budget);
  tc.seed = o.seed;
  tc.workers = 1;
  std::vector<fs::path> runs;
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = o.work / "determinism" / std::to_string(run);
    fs::remove_all(dir);
    tc.out_dir = dir;
    const TrainResult r = train(tc);
    EvalConfig ec;
    ec.env = cfg.env;
    ec.episodes = 3;
    ec.seed = 5000 + o.seed;
    write_eval_outputs(run_eval({learned_method("attention", r.params), handcrafted_method()}, ec),
                       ec, dir / "eval");
    runs.push_back(dir);
  }
  int files = 0, differ = 0;
  for (const auto& entry : fs::recursive_directory_iterator(runs[0])) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), runs[0]);
    ++files;
    if (!fs::exists(runs[1] / rel) || slurp(entry.path()) != slurp(runs[1] / rel)) ++differ;
  }
  return {files > 0 && differ == 0,
          fmt("%d checkpoint/CSV/JSON files compared, %d differ", files, differ)};
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Acceptance checks; one PASS/FAIL line per criterion"};
  app.add_option("--unit-tests", o.unit_tests, "Path to the unit test binary");
  app.add_option("--work", o.work, "Directory for trained policies and eval outputs");
  app.add_flag("--reuse", o.reuse, "Reuse policies trained with an identical config");
  app.add_option("--seed", o.seed, "Training seed");
  app.add_option("--only", o.only, "Run one criterion by name");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(o.work);

  std::vector<std::pair<std::string, Outcome>> results;
  auto run = [&](const std::string& name, auto&& f) {
    if (!o.only.empty() && o.only != name) return;
    std::printf("-- %s\n", name.c_str());
    std::fflush(stdout);
    const auto t0 = std::chrono::steady_clock::now();
    Outcome r;
    try {
      r = f();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    std::printf("   (%.0f s)\n", seconds_since(t0));
    results.emplace_back(name, r);
  };

  std::optional<PolicyParams> att, single, deepsets;
  auto attention = [&]() -> const PolicyParams& {
    if (!att) att = trained(o, "attention", desk_config(o, {1, 3}));
    return *att;
  };

  run("property_suite", [&] { return property_suite(o); });
  run("conflation_convergence", [] { return conflation_convergence(); });
  run("learning_smoke", [&] { return learning_smoke(o); });
  run("desk_learning", [&] { return desk_learning(o, attention()); });
  run("scalability_40_targets", [&] { return scalability(o, attention()); });
  std::string deepsets_report;
  run("ablation_attention_vs_single", [&] {
    single = trained(o, "single_target", desk_config(o, {1, 1}));
    ExperimentConfig ds = desk_config(o, {1, 3});
    ds.policy.pooling = Pooling::kMean;
    deepsets = trained(o, "deepsets", ds);
    return ablation(o, attention(), *single, *deepsets, deepsets_report);
  });
  run("closed_loop_mpc", [&] { return closed_loop_mpc(o, attention()); });
  run("determinism", [&] { return determinism(o); });

  std::printf("\n");
  bool all = true;
  for (const auto& [name, r] : results) {
    std::printf("%s %s: %s\n", r.pass ? "PASS" : "FAIL", name.c_str(), r.detail.c_str());
    all = all && r.pass;
  }
  if (!deepsets_report.empty()) std::printf("INFO deepsets_comparison: %s\n", deepsets_report.c_str());
  for (const auto& line : g_info) std::printf("INFO %s\n", line.c_str());
  return all ? 0 : 1;
}
