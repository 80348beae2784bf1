#include <mtac/log.hpp>
#include <mtac/ppo.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace mtac {

namespace {

struct Worker {
  explicit Worker(const EnvConfig& cfg, std::uint64_t seed) : env(cfg), rng(seed) {}

  Environment env;
  std::mt19937_64 rng;
  bool needs_reset = true;
  double episode_return = 0.0;
  int episode_length = 0;
  std::vector<double> finished_returns;
  std::vector<int> finished_lengths;
  Trajectory segment;
  bool failed = false;
  std::string error;
};

std::uint64_t worker_seed(std::uint64_t seed, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), 0x6d746163u};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

void collect(Worker& w, const PolicyParams& params, const EpisodeConfig& ep, int steps) {
  const ActionBounds bounds = w.env.config().action_bounds();
  w.segment.steps.clear();
  w.segment.steps.reserve(static_cast<std::size_t>(steps));
  w.finished_returns.clear();
  w.finished_lengths.clear();
  for (int t = 0; t < steps; ++t) {
    if (w.needs_reset) {
      w.env.set_episode_config(ep);
      w.env.reset(w.rng);
      w.needs_reset = false;
      w.episode_return = 0.0;
      w.episode_length = 0;
    }
    Transition tr;
    tr.features = encode_observations(w.env.observations());
    const PolicyOutput out = policy_forward(tr.features, params);
    const ActionSample s = sample_action(out, bounds, w.rng);
    const StepResult res = w.env.step(s.action);
    tr.pre_squash = s.pre_squash;
    tr.mu_old = out.mu;
    tr.log_std_old = out.log_std;
    tr.log_prob_old = s.gaussian_log_prob;
    tr.value_old = out.value;
    tr.reward = res.reward;
    tr.done = res.done;
    w.segment.steps.push_back(std::move(tr));
    w.episode_return += res.reward;
    ++w.episode_length;
    if (res.done) {
      w.finished_returns.push_back(w.episode_return);
      w.finished_lengths.push_back(w.episode_length);
      w.needs_reset = true;
    }
  }
  w.segment.bootstrap_value = 0.0;
  if (!w.needs_reset) {
    w.segment.bootstrap_value =
        policy_forward(encode_observations(w.env.observations()), params).value;
  }
}

void write_text(const std::filesystem::path& path, const std::string& text, bool append) {
  std::ofstream f(path, append ? std::ios::app : std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

}  // namespace

void PPOHyperparams::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0 && gae_lambda > 0.0 && gae_lambda <= 1.0)) {
    throw std::invalid_argument("ppo: gamma and lambda must lie in (0, 1]");
  }
  if (steps_per_update < 1 || epochs_per_update < 1 || minibatch_size < 1) {
    throw std::invalid_argument("ppo: batch sizes must be >= 1");
  }
  if (!(reward_scale > 0.0 && vf_clip >= 0.0)) {
    throw std::invalid_argument("ppo: reward_scale must be > 0 and vf_clip >= 0");
  }
  if (!(clip_param > 0.0 && learning_rate > 0.0 && grad_clip > 0.0 && kl_target > 0.0)) {
    throw std::invalid_argument("ppo: clip, learning rate, gradient clip and KL target must be > 0");
  }
}

int gradient_steps_per_update(const PPOHyperparams& hp, int batch_steps) {
  const std::int64_t total = static_cast<std::int64_t>(batch_steps) * hp.epochs_per_update;
  return static_cast<int>(total / hp.minibatch_size);
}

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const bool> dones, double bootstrap_value, double gamma,
                      double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) {
    throw std::invalid_argument("compute_gae: misaligned sequences");
  }
  GaeResult g;
  g.advantages.assign(n, 0.0);
  g.returns.assign(n, 0.0);
  double next_adv = 0.0;
  double next_value = bootstrap_value;
  for (std::size_t i = n; i-- > 0;) {
    const double live = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + gamma * next_value * live - values[i];
    next_adv = delta + gamma * lambda * live * next_adv;
    g.advantages[i] = next_adv;
    g.returns[i] = next_adv + values[i];
    next_value = values[i];
  }
  return g;
}

LossStats ppo_loss(std::span<const PPOSample> batch, const PolicyParams& params,
                   double kl_coeff, const PPOHyperparams& hp, std::span<double> grad) {
  LossStats st;
  if (batch.empty()) return st;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const bool want_grad = !grad.empty();
  ForwardCache cache;
  for (const PPOSample& s : batch) {
    const Transition& tr = *s.step;
    const PolicyOutput out = policy_forward(tr.features, params, want_grad ? &cache : nullptr);
    const double logp = gaussian_log_prob(tr.pre_squash, out.mu, out.log_std);
    const double ratio = std::exp(logp - tr.log_prob_old);
    const double a = s.advantage;
    const double unclipped = ratio * a;
    const double clipped = std::clamp(ratio, 1.0 - hp.clip_param, 1.0 + hp.clip_param) * a;
    const double surr = std::min(unclipped, clipped);
    const double kl = gaussian_kl(tr.mu_old, tr.log_std_old, out.mu, out.log_std);
    const double verr = out.value - s.ret;
    const bool v_capped = hp.vf_clip > 0.0 && verr * verr > hp.vf_clip;
    const double ent = gaussian_entropy(out.log_std);

    st.policy_loss += -surr * inv_n;
    st.kl += kl * inv_n;
    st.value_loss += (v_capped ? hp.vf_clip : verr * verr) * inv_n;
    st.entropy += ent * inv_n;
    if (std::abs(ratio - 1.0) > hp.clip_param) st.clip_frac += inv_n;

    if (want_grad) {
      // d(-surr)/dlogp is -ratio*A on the unclipped branch, zero otherwise.
      const double dlogp = unclipped <= clipped ? -ratio * a : 0.0;
      Eigen::Vector3d d_mu = Eigen::Vector3d::Zero();
      Eigen::Vector3d d_ls = Eigen::Vector3d::Zero();
      for (int i = 0; i < kActionDim; ++i) {
        const double var_new = std::exp(2.0 * out.log_std[i]);
        const double diff = tr.pre_squash[i] - out.mu[i];
        d_mu[i] += dlogp * diff / var_new;
        d_ls[i] += dlogp * (diff * diff / var_new - 1.0);

        const double var_old = std::exp(2.0 * tr.log_std_old[i]);
        const double dm = out.mu[i] - tr.mu_old[i];
        d_mu[i] += kl_coeff * dm / var_new;
        d_ls[i] += kl_coeff * (1.0 - (var_old + dm * dm) / var_new);

        d_ls[i] -= hp.entropy_coeff;
      }
      const double d_v = v_capped ? 0.0 : hp.value_loss_coeff * 2.0 * verr;
      policy_backward(cache, params, d_mu * inv_n, d_ls * inv_n, d_v * inv_n, grad);
    }
  }
  st.loss = st.policy_loss + kl_coeff * st.kl + hp.value_loss_coeff * st.value_loss -
            hp.entropy_coeff * st.entropy;
  return st;
}

double adapt_kl_coeff(double kl_measured, double kl_coeff, double kl_target) {
  if (kl_measured > 2.0 * kl_target) return kl_coeff * 2.0;
  if (kl_measured < 0.5 * kl_target) return kl_coeff * 0.5;
  return kl_coeff;
}

double clip_grad_norm(std::span<double> grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (double& g : grad) g *= scale;
  }
  return norm;
}

AdamOptimizer::AdamOptimizer(std::size_t size, double beta1, double beta2, double eps)
    : m_(size, 0.0), v_(size, 0.0), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(std::span<double> params, std::span<const double> grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw std::invalid_argument("adam: size mismatch");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    const double mhat = m_[i] / bc1;
    const double vhat = v_[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
  }
}

bool AdamOptimizer::finite() const {
  for (std::size_t i = 0; i < m_.size(); ++i) {
    if (!std::isfinite(m_[i]) || !std::isfinite(v_[i])) return false;
  }
  return true;
}

std::string metrics_csv_header() {
  return "update,env_steps,mean_return,mean_episode_length,kl,entropy,clip_frac,kl_coeff,"
         "policy_loss,value_loss,episodes\n";
}

std::string metrics_csv_row(const UpdateMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%d,%lld,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%d\n",
                m.update, static_cast<long long>(m.env_steps), m.mean_return, m.mean_length, m.kl,
                m.entropy, m.clip_frac, m.kl_coeff, m.policy_loss, m.value_loss, m.episodes);
  return buf;
}

TrainResult train(const TrainConfig& cfg, const std::function<void(const UpdateMetrics&)>& on_update) {
  cfg.env.validate();
  cfg.hp.validate();
  if (cfg.workers < 1) throw std::invalid_argument("train: need at least one worker");
  if (!(cfg.budget >= 1.0)) throw std::invalid_argument("train: budget must be >= 1 step");
  const PPOHyperparams& hp = cfg.hp;

  std::mt19937_64 rng(cfg.seed);
  TrainResult result{PolicyParams::initialize(cfg.dims, rng), {}, {}, false};
  PolicyParams& params = result.params;
  AdamOptimizer adam(params.size(), hp.adam_beta1, hp.adam_beta2, hp.adam_eps);
  double kl_coeff = hp.kl_coeff_init;

  std::vector<Worker> workers;
  workers.reserve(static_cast<std::size_t>(cfg.workers));
  for (int i = 0; i < cfg.workers; ++i) workers.emplace_back(cfg.env, worker_seed(cfg.seed, i));

  const auto budget = static_cast<std::int64_t>(std::llround(cfg.budget));
  const int batch_steps = static_cast<int>(std::min<std::int64_t>(hp.steps_per_update, budget));
  const int updates = static_cast<int>((budget + batch_steps - 1) / batch_steps);

  std::filesystem::path metrics_path;
  if (cfg.out_dir) {
    std::filesystem::create_directories(*cfg.out_dir / "checkpoints");
    metrics_path = *cfg.out_dir / "train_metrics.csv";
    write_text(metrics_path, metrics_csv_header(), false);
  }

  std::int64_t env_steps = 0;
  std::vector<double> grad(params.size());
  for (int update = 0; update < updates; ++update) {
    const EpisodeConfig ep =
        curriculum_phase(cfg.schedule, cfg.env.episode, static_cast<double>(env_steps));

    // Rollouts against a frozen parameter snapshot.
    const int per_worker = batch_steps / cfg.workers;
    const int remainder = batch_steps % cfg.workers;
    auto run = [&](int i) {
      try {
        collect(workers[i], params, ep, per_worker + (i < remainder ? 1 : 0));
      } catch (const std::exception& e) {
        workers[i].failed = true;
        workers[i].error = e.what();
      }
    };
    if (cfg.workers == 1) {
      run(0);
    } else {
      std::vector<std::thread> threads;
      for (int i = 0; i < cfg.workers; ++i) threads.emplace_back(run, i);
      for (auto& t : threads) t.join();
    }
    for (const Worker& w : workers) {
      if (w.failed) throw std::runtime_error("rollout worker failed: " + w.error);
    }

    // Advantages, in worker-index order.
    std::vector<PPOSample> samples;
    samples.reserve(static_cast<std::size_t>(batch_steps));
    UpdateMetrics mt;
    double return_sum = 0.0;
    double length_sum = 0.0;
    bool bad_reward = false;
    for (const Worker& w : workers) {
      const auto& steps = w.segment.steps;
      std::vector<double> r(steps.size()), v(steps.size());
      auto d = std::make_unique<bool[]>(steps.size());
      for (std::size_t t = 0; t < steps.size(); ++t) {
        r[t] = hp.reward_scale * steps[t].reward;
        v[t] = steps[t].value_old;
        d[t] = steps[t].done;
        if (!std::isfinite(r[t])) bad_reward = true;
      }
      const GaeResult g = compute_gae(r, v, std::span<const bool>(d.get(), steps.size()),
                                      w.segment.bootstrap_value, hp.gamma, hp.gae_lambda);
      for (std::size_t t = 0; t < steps.size(); ++t) {
        samples.push_back({&steps[t], g.advantages[t], g.returns[t]});
      }
      for (std::size_t e = 0; e < w.finished_returns.size(); ++e) {
        return_sum += w.finished_returns[e];
        length_sum += w.finished_lengths[e];
        ++mt.episodes;
      }
    }
    env_steps += batch_steps;
    mt.update = update;
    mt.env_steps = env_steps;
    mt.mean_return = mt.episodes > 0 ? return_sum / mt.episodes
                                     : std::numeric_limits<double>::quiet_NaN();
    mt.mean_length = mt.episodes > 0 ? length_sum / mt.episodes
                                     : std::numeric_limits<double>::quiet_NaN();
    if (bad_reward) {
      log::error("train: non-finite reward in rollouts, halting with the last good parameters");
      result.diverged = true;
      break;
    }

    double adv_mean = 0.0;
    for (const auto& s : samples) adv_mean += s.advantage;
    adv_mean /= static_cast<double>(samples.size());
    double adv_var = 0.0;
    for (const auto& s : samples) adv_var += (s.advantage - adv_mean) * (s.advantage - adv_mean);
    const double adv_std = std::sqrt(adv_var / static_cast<double>(samples.size()));
    for (auto& s : samples) s.advantage = (s.advantage - adv_mean) / (adv_std + 1e-8);

    const PolicyParams snapshot = params;
    const AdamOptimizer adam_snapshot = adam;

    // Shuffled epochs streamed back to back, cut into full minibatches.
    std::vector<std::uint32_t> stream;
    stream.reserve(samples.size() * static_cast<std::size_t>(hp.epochs_per_update));
    std::vector<std::uint32_t> perm(samples.size());
    for (int e = 0; e < hp.epochs_per_update; ++e) {
      std::iota(perm.begin(), perm.end(), 0u);
      for (std::size_t i = perm.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(perm[i - 1], perm[pick(rng)]);
      }
      stream.insert(stream.end(), perm.begin(), perm.end());
    }
    const int n_minibatches = gradient_steps_per_update(hp, static_cast<int>(samples.size()));
    std::vector<PPOSample> mb(static_cast<std::size_t>(hp.minibatch_size));
    bool non_finite = false;
    double pl_sum = 0.0;
    double vl_sum = 0.0;
    for (int b = 0; b < n_minibatches; ++b) {
      for (int i = 0; i < hp.minibatch_size; ++i) {
        mb[i] = samples[stream[static_cast<std::size_t>(b) * hp.minibatch_size + i]];
      }
      std::fill(grad.begin(), grad.end(), 0.0);
      const LossStats st = ppo_loss(mb, params, kl_coeff, hp, grad);
      if (!std::isfinite(st.loss)) {
        log::error("train: non-finite loss at update " + std::to_string(update) + ", minibatch " +
                   std::to_string(b) + " (policy " + std::to_string(st.policy_loss) + ", value " +
                   std::to_string(st.value_loss) + ", kl " + std::to_string(st.kl) + ")");
        non_finite = true;
        break;
      }
      pl_sum += st.policy_loss;
      vl_sum += st.value_loss;
      clip_grad_norm(grad, hp.grad_clip);
      adam.step(params.data(), grad, hp.learning_rate);
    }
    if (non_finite || !params.all_finite()) {
      params = snapshot;
      adam = adam_snapshot;
      result.diverged = true;
      log::error("train: update round aborted, keeping the last good parameters");
      break;
    }

    const LossStats after = ppo_loss(samples, params, kl_coeff, hp);
    mt.kl = after.kl;
    mt.entropy = after.entropy;
    mt.clip_frac = after.clip_frac;
    mt.policy_loss = n_minibatches > 0 ? pl_sum / n_minibatches : 0.0;
    mt.value_loss = n_minibatches > 0 ? vl_sum / n_minibatches : 0.0;
    kl_coeff = adapt_kl_coeff(after.kl, kl_coeff, hp.kl_target);
    mt.kl_coeff = kl_coeff;
    result.metrics.push_back(mt);

    if (cfg.out_dir) {
      write_text(metrics_path, metrics_csv_row(mt), true);
      if (cfg.save_every_update) {
        char name[64];
        std::snprintf(name, sizeof(name), "update_%04d.bin", update);
        const auto path = *cfg.out_dir / "checkpoints" / name;
        save_checkpoint(params, path);
        result.checkpoints.push_back(path);
      }
    }
    if (cfg.verbose) {
      std::ostringstream os;
      os << "update " << update << " steps " << env_steps << " return " << mt.mean_return
         << " len " << mt.mean_length << " kl " << mt.kl << " kl_coeff " << kl_coeff
         << " vloss " << mt.value_loss;
      log::info(os.str());
    }
    if (on_update) on_update(mt);
  }

  if (cfg.out_dir) {
    const auto path = *cfg.out_dir / "policy.bin";
    save_checkpoint(params, path);
    result.checkpoints.push_back(path);
  }
  return result;
}

}  // namespace mtac
