#include <mtac/eval.hpp>

#include <mtac/config.hpp>
#include <mtac/log.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <thread>

namespace mtac {

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  return f;
}

}  // namespace

MethodSpec learned_method(const std::string& name, PolicyParams params) {
  return {name, [name, params] { return std::make_unique<LearnedPolicy>(name, params); }};
}

MethodSpec single_target_method(PolicyParams params) {
  return {"single-target", [params] { return std::make_unique<SingleTargetPolicy>(params); }};
}

MethodSpec handcrafted_method() {
  return {"handcrafted", [] { return std::make_unique<HandcraftedPolicy>(); }};
}

MethodSpec make_method(const std::string& kind,
                       const std::optional<std::filesystem::path>& checkpoint) {
  if (kind == "handcrafted") return handcrafted_method();
  if (kind != "attention" && kind != "deepsets" && kind != "single-target") {
    throw std::invalid_argument("unknown policy '" + kind + "'");
  }
  if (!checkpoint) throw std::runtime_error("policy '" + kind + "' needs a checkpoint");
  const std::filesystem::path path = *checkpoint;
  return {kind, [kind, path]() -> std::unique_ptr<ViewpointPolicy> {
            PolicyParams params = load_checkpoint(path);
            const bool mean = params.dims().pooling == Pooling::kMean;
            if (kind == "deepsets" && !mean) {
              throw std::runtime_error(path.string() + ": deepsets needs a mean-pooling checkpoint");
            }
            if (kind == "attention" && mean) {
              throw std::runtime_error(path.string() + ": attention needs an attention checkpoint");
            }
            if (kind == "single-target") return std::make_unique<SingleTargetPolicy>(std::move(params));
            return std::make_unique<LearnedPolicy>(kind, std::move(params));
          }};
}

double EpisodeRecord::percent_classified_at_metric() const {
  return num_targets > 0 ? 100.0 * classified_at_metric / num_targets : 0.0;
}

double EpisodeRecord::mean_simultaneous_first_half() const {
  const std::size_t n = (trace.size() + 1) / 2;
  if (n == 0) return 0.0;
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += trace[k].visible_unclassified;
  return s / static_cast<double>(n);
}

std::uint64_t episode_seed(std::uint64_t base, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(index), 0x5eedu};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

int metric_classified_at(const std::vector<StepTrace>& trace, double at, double tau_h) {
  if (trace.empty()) return 0;
  const auto step = static_cast<std::size_t>(std::floor(at / tau_h + 1e-9));
  if (step == 0) return 0;
  if (step > trace.size()) return trace.back().num_classified;
  return trace[step - 1].num_classified;
}

std::vector<int> metric_simultaneous_observations(const std::vector<StepTrace>& trace) {
  std::vector<int> out;
  out.reserve(trace.size());
  for (const auto& t : trace) out.push_back(t.visible_unclassified);
  return out;
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {m, 0.0};
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  return {m, std::sqrt(v / static_cast<double>(xs.size() - 1))};
}

EpisodeRecord run_episode(ViewpointPolicy& policy, const EnvConfig& env_cfg, std::uint64_t seed,
                          int episode, double metric_time, bool sensor_debug) {
  Environment env(env_cfg);
  env.reset(seed);
  policy.reset(seed);

  EpisodeRecord rec;
  rec.method = policy.name();
  rec.episode = episode;
  rec.seed = seed;
  rec.num_targets = env.state().num_targets();
  rec.dynamics = env_cfg.episode.dynamics;

  const EnvConfig& cfg = env.config();
  while (!env.done()) {
    const StepResult r = env.step(policy.act(env));
    const DroneState& d = env.state().drone;
    StepTrace t;
    t.step = env.state().step;
    t.num_classified = r.info.num_classified;
    t.visible = r.info.visible_count;
    t.visible_unclassified = r.info.visible_unclassified;
    t.measurements = r.info.measurements;
    t.reward = r.reward;
    t.drone_position = d.position;
    t.drone_yaw = d.yaw;
    t.tracking_error = r.info.tracking_error;
    rec.trace.push_back(t);
    rec.total_return += r.reward;
    rec.misclassified = r.info.misclassified;

    if (sensor_debug) {
      const auto& s = env.state();
      const auto readings = observe_all_detailed(d, s.targets, cfg.camera, cfg.world, cfg.law,
                                                 cfg.episode.num_classes);
      for (std::size_t j = 0; j < readings.size(); ++j) {
        rec.sensor_trace.push_back({t.step, static_cast<int>(j), readings[j].visible,
                                    readings[j].projection.area, readings[j].projection.skew,
                                    readings[j].p_true, s.beliefs[j].max_prob()});
      }
    }
    if (r.done) rec.completed = !r.info.timeout;
  }
  rec.steps = static_cast<int>(rec.trace.size());
  rec.classified_final = env.state().num_classified();
  rec.classified_at_metric = metric_classified_at(rec.trace, metric_time, cfg.world.tau_h);
  rec.completion_time = rec.completed ? rec.steps * cfg.world.tau_h : cfg.episode.timeout;
  return rec;
}

EvalReport run_eval(const std::vector<MethodSpec>& methods, const EvalConfig& cfg) {
  if (methods.empty()) throw std::invalid_argument("run_eval: no methods");
  if (cfg.episodes < 0) throw std::invalid_argument("run_eval: negative episode count");
  cfg.env.validate();
  const int workers = std::max(1, std::min(cfg.workers, std::max(1, cfg.episodes)));

  // Instantiate everything up front so a bad checkpoint fails before any
  // episode runs.
  std::vector<std::vector<std::unique_ptr<ViewpointPolicy>>> policies(workers);
  for (auto& per_worker : policies) {
    for (const auto& m : methods) {
      auto p = m.make();
      if (!p) throw std::runtime_error("run_eval: method '" + m.name + "' produced no policy");
      p->set_action_mode(cfg.action_mode);
      per_worker.push_back(std::move(p));
    }
  }

  std::vector<std::vector<EpisodeRecord>> results(workers);
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](int w) {
    try {
      for (int e = w; e < cfg.episodes; e += workers) {
        const std::uint64_t seed = episode_seed(cfg.seed, e);
        for (std::size_t m = 0; m < methods.size(); ++m) {
          EpisodeRecord rec = run_episode(*policies[w][m], cfg.env, seed, e, cfg.metric_time,
                                          cfg.sensor_debug);
          rec.method = methods[m].name;
          results[w].push_back(std::move(rec));
        }
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) threads.emplace_back(work, w);
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  EvalReport report;
  for (const auto& m : methods) report.methods.push_back(m.name);
  std::map<std::string, std::size_t> order;
  for (std::size_t m = 0; m < methods.size(); ++m) order.emplace(methods[m].name, m);
  for (auto& r : results) {
    for (auto& rec : r) report.rows.push_back(std::move(rec));
  }
  std::sort(report.rows.begin(), report.rows.end(), [&](const auto& a, const auto& b) {
    const auto oa = order.at(a.method), ob = order.at(b.method);
    return oa != ob ? oa < ob : a.episode < b.episode;
  });
  return report;
}

const EpisodeRecord& EvalReport::row(const std::string& method, int episode) const {
  for (const auto& r : rows) {
    if (r.method == method && r.episode == episode) return r;
  }
  throw std::out_of_range("no row for " + method + " episode " + std::to_string(episode));
}

std::vector<MethodSummary> EvalReport::summarize() const {
  std::vector<MethodSummary> out;
  for (const auto& m : methods) {
    std::vector<double> pct, ret, ct, sim;
    int mis = 0, total = 0, done = 0;
    for (const auto& r : rows) {
      if (r.method != m) continue;
      pct.push_back(r.percent_classified_at_metric());
      ret.push_back(r.total_return);
      ct.push_back(r.completion_time);
      sim.push_back(r.mean_simultaneous_first_half());
      mis += r.misclassified;
      total += r.classified_final;
      done += r.completed ? 1 : 0;
    }
    MethodSummary s;
    s.method = m;
    s.episodes = static_cast<int>(pct.size());
    std::tie(s.percent_classified_mean, s.percent_classified_std) = mean_std(pct);
    std::tie(s.return_mean, s.return_std) = mean_std(ret);
    std::tie(s.completion_time_mean, s.completion_time_std) = mean_std(ct);
    std::tie(s.simultaneous_mean, s.simultaneous_std) = mean_std(sim);
    s.misclassified_percent = total > 0 ? 100.0 * mis / total : 0.0;
    s.completion_rate = s.episodes > 0 ? static_cast<double>(done) / s.episodes : 0.0;
    out.push_back(s);
  }
  return out;
}

void write_eval_outputs(const EvalReport& report, const EvalConfig& cfg,
                        const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  {
    auto f = open_out(out_dir / "eval_rows.csv");
    f << "method,episode,seed,num_targets,dynamics,classified_at_metric,percent_classified,"
         "classified_final,completed,completion_time,steps,return,misclassified,"
         "mean_simultaneous_first_half\n";
    for (const auto& r : report.rows) {
      f << r.method << ',' << r.episode << ',' << r.seed << ',' << r.num_targets << ','
        << dynamics_name(r.dynamics) << ',' << r.classified_at_metric << ','
        << fmt(r.percent_classified_at_metric()) << ',' << r.classified_final << ','
        << (r.completed ? 1 : 0) << ',' << fmt(r.completion_time) << ',' << r.steps << ','
        << fmt(r.total_return) << ',' << r.misclassified << ','
        << fmt(r.mean_simultaneous_first_half()) << '\n';
    }
  }

  {
    nlohmann::ordered_json j;
    j["episodes"] = cfg.episodes;
    j["seed"] = cfg.seed;
    j["metric_time"] = cfg.metric_time;
    j["dynamics"] = std::string(dynamics_name(cfg.env.episode.dynamics));
    j["mpc"] = cfg.env.use_mpc;
    j["actions"] = cfg.action_mode == ActionMode::kSample ? "sample" : "mean";
    auto pair = [](double m, double s) { return nlohmann::ordered_json{{"mean", m}, {"std", s}}; };
    for (const auto& s : report.summarize()) {
      nlohmann::ordered_json m;
      m["episodes"] = s.episodes;
      m["percent_classified"] = pair(s.percent_classified_mean, s.percent_classified_std);
      m["return"] = pair(s.return_mean, s.return_std);
      m["completion_time"] = pair(s.completion_time_mean, s.completion_time_std);
      m["simultaneous_first_half"] = pair(s.simultaneous_mean, s.simultaneous_std);
      m["misclassified_percent"] = s.misclassified_percent;
      m["completion_rate"] = s.completion_rate;
      j["methods"][s.method] = m;
    }
    auto f = open_out(out_dir / "eval_summary.json");
    f << j.dump(2) << '\n';
  }

  if (cfg.keep_traces) {
    fs::create_directories(out_dir / "traces");
    for (int e = 0; e < cfg.episodes; ++e) {
      auto f = open_out(out_dir / "traces" / ("episode_" + std::to_string(e) + ".csv"));
      f << "method,step,time,num_classified,visible,visible_unclassified,measurements,reward,"
           "drone_x,drone_y,drone_z,drone_yaw,tracking_error\n";
      for (const auto& m : report.methods) {
        const auto& r = report.row(m, e);
        for (const auto& t : r.trace) {
          f << m << ',' << t.step << ',' << fmt(t.step * cfg.env.world.tau_h) << ','
            << t.num_classified << ',' << t.visible << ',' << t.visible_unclassified << ','
            << t.measurements << ',' << fmt(t.reward) << ',' << fmt(t.drone_position.x()) << ','
            << fmt(t.drone_position.y()) << ',' << fmt(t.drone_position.z()) << ','
            << fmt(t.drone_yaw) << ',' << fmt(t.tracking_error) << '\n';
        }
      }
    }
  }

  if (cfg.sensor_debug) {
    fs::create_directories(out_dir / "sensor_debug");
    for (int e = 0; e < cfg.episodes; ++e) {
      auto f = open_out(out_dir / "sensor_debug" / ("episode_" + std::to_string(e) + ".csv"));
      f << "method,step,target,visible,area,skew,p_true,belief_max\n";
      for (const auto& m : report.methods) {
        for (const auto& s : report.row(m, e).sensor_trace) {
          f << m << ',' << s.step << ',' << s.target << ',' << (s.visible ? 1 : 0) << ','
            << fmt(s.area) << ',' << fmt(s.skew) << ',' << fmt(s.p_true) << ','
            << fmt(s.belief_max) << '\n';
        }
      }
    }
  }

  // Mean cumulative fraction of classified targets against time; episodes
  // that ended early hold their final count.
  {
    const int max_steps = cfg.env.max_steps();
    auto f = open_out(out_dir / "classification_speed.csv");
    f << "# time";
    for (const auto& m : report.methods) f << ' ' << m;
    f << '\n';
    std::vector<std::vector<const EpisodeRecord*>> per_method(report.methods.size());
    for (std::size_t m = 0; m < report.methods.size(); ++m) {
      for (const auto& r : report.rows) {
        if (r.method == report.methods[m]) per_method[m].push_back(&r);
      }
    }
    for (int k = 1; k <= max_steps; ++k) {
      f << fmt(k * cfg.env.world.tau_h);
      for (const auto& rows : per_method) {
        double s = 0.0;
        for (const auto* r : rows) {
          if (r->num_targets == 0) continue;
          const int c = r->trace.empty() ? 0
                        : k <= static_cast<int>(r->trace.size())
                            ? r->trace[k - 1].num_classified
                            : r->trace.back().num_classified;
          s += static_cast<double>(c) / r->num_targets;
        }
        f << ' ' << fmt(rows.empty() ? 0.0 : s / static_cast<double>(rows.size()));
      }
      f << '\n';
    }
  }
}

}  // namespace mtac
