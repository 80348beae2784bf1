#include <mtac/mpc.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mtac {

namespace {

using Vec8 = Eigen::Matrix<double, 8, 1>;

Vec8 state_error(const Eigen::Vector4d& pos, const Eigen::Vector4d& vel,
                 const ViewpointTarget& target) {
  Vec8 e;
  e.head<3>() = pos.head<3>() - target.position;
  e[3] = wrap_angle(pos[3] - target.yaw);
  e.tail<4>() = vel;
  return e;
}

// Terminal error of the unclamped double integrator:
//   v_N = v_0 + dt * sum_k u_k
//   p_N = p_0 + N dt v_0 + dt^2 * sum_k (N - k) u_k
Vec8 terminal_error(const DroneState& x0, const ViewpointTarget& target,
                    const ControlSequence& u, double dt) {
  const int n = static_cast<int>(u.size());
  Eigen::Vector4d p(x0.position.x(), x0.position.y(), x0.position.z(), x0.yaw);
  Eigen::Vector4d v(x0.velocity.x(), x0.velocity.y(), x0.velocity.z(), x0.yaw_rate);
  Eigen::Vector4d sum_u = Eigen::Vector4d::Zero();
  Eigen::Vector4d weighted = Eigen::Vector4d::Zero();
  for (int k = 0; k < n; ++k) {
    sum_u += u[k];
    weighted += static_cast<double>(n - k) * u[k];
  }
  const Eigen::Vector4d p_n = p + n * dt * v + dt * dt * weighted;
  const Eigen::Vector4d v_n = v + dt * sum_u;
  return state_error(p_n, v_n, target);
}

double stage_norm(const Eigen::Vector4d& u, double s) {
  return std::sqrt(u.squaredNorm() + s * s);
}

double surrogate_cost(const DroneState& x0, const ViewpointTarget& target,
                      const ControlSequence& u, const MPCConfig& cfg, double dist0, double mu) {
  const double s = std::max(mu, cfg.smoothing);
  double stage = 0.0;
  for (const auto& uk : u) stage += stage_norm(uk, s);
  const Vec8 e = terminal_error(x0, target, u, cfg.dt);
  const double en = mu > cfg.smoothing ? std::sqrt(e.squaredNorm() + mu * mu) : e.norm();
  return cfg.w_u * stage + cfg.w_g * en / dist0;
}

// Gradient of the cost with both norms smoothed by mu (mu = smoothing gives
// the exact gradient of the stage term; the terminal norm keeps its kink at 0
// only when mu is 0).
ControlSequence gradient(const DroneState& x0, const ViewpointTarget& target,
                         const ControlSequence& u, const MPCConfig& cfg, double dist0,
                         double mu) {
  const int n = static_cast<int>(u.size());
  const double s = std::max(mu, cfg.smoothing);
  ControlSequence g(u.size());
  for (int k = 0; k < n; ++k) g[k] = cfg.w_u * u[k] / stage_norm(u[k], s);

  const Vec8 e = terminal_error(x0, target, u, cfg.dt);
  const double en = mu > cfg.smoothing ? std::sqrt(e.squaredNorm() + mu * mu) : e.norm();
  if (en > 0.0) {
    const Vec8 de = (cfg.w_g / dist0) * e / en;
    for (int k = 0; k < n; ++k) {
      const double dp = cfg.dt * cfg.dt * static_cast<double>(n - k);
      g[k] += dp * de.head<4>() + cfg.dt * de.tail<4>();
    }
  }
  if (!cfg.plan_z) {
    for (auto& gk : g) gk[2] = 0.0;
  }
  return g;
}

}  // namespace

void MPCConfig::validate() const {
  if (horizon < 1) throw std::invalid_argument("mpc: horizon must be >= 1");
  if (!(dt > 0.0)) throw std::invalid_argument("mpc: dt must be > 0");
  if (!(w_u >= 0.0 && w_g >= 0.0)) throw std::invalid_argument("mpc: weights must be >= 0");
  if (!(box.accel_max.minCoeff() >= 0.0 && box.yaw_accel_max >= 0.0)) {
    throw std::invalid_argument("mpc: input box must be non-empty");
  }
  if (iterations < 0 || !(step_size > 0.0)) {
    throw std::invalid_argument("mpc: invalid solver settings");
  }
}

double state_distance(const DroneState& x, const ViewpointTarget& target) {
  const Eigen::Vector4d p(x.position.x(), x.position.y(), x.position.z(), x.yaw);
  const Eigen::Vector4d v(x.velocity.x(), x.velocity.y(), x.velocity.z(), x.yaw_rate);
  return state_error(p, v, target).norm();
}

double mpc_cost(const DroneState& x0, const ViewpointTarget& target,
                const ControlSequence& u, const MPCConfig& cfg) {
  const double dist0 = state_distance(x0, target);
  double stage = 0.0;
  for (const auto& uk : u) stage += stage_norm(uk, cfg.smoothing);
  const double terminal =
      dist0 > 0.0 ? terminal_error(x0, target, u, cfg.dt).norm() / dist0 : 0.0;
  return cfg.w_u * stage + cfg.w_g * terminal;
}

void project_controls(ControlSequence& u, const MPCConfig& cfg) {
  for (auto& uk : u) {
    for (int i = 0; i < 3; ++i) {
      uk[i] = std::clamp(uk[i], -cfg.box.accel_max[i], cfg.box.accel_max[i]);
    }
    uk[3] = std::clamp(uk[3], -cfg.box.yaw_accel_max, cfg.box.yaw_accel_max);
    if (!cfg.plan_z) uk[2] = 0.0;
  }
}

MPCSolution mpc_solve(const DroneState& x0, const ViewpointTarget& target,
                      const MPCConfig& cfg, const ControlSequence& warm_start) {
  cfg.validate();
  MPCSolution sol;
  sol.controls.assign(static_cast<std::size_t>(cfg.horizon), Eigen::Vector4d::Zero());
  const double dist0 = state_distance(x0, target);
  if (dist0 <= cfg.min_distance) {
    sol.cost = mpc_cost(x0, target, sol.controls, cfg);
    sol.cost_history.push_back(sol.cost);
    return sol;
  }
  if (warm_start.size() == sol.controls.size()) sol.controls = warm_start;
  project_controls(sol.controls, cfg);

  ControlSequence& u = sol.controls;
  double cost = mpc_cost(x0, target, u, cfg);
  sol.cost_history.push_back(cost);
  double step = cfg.step_size;
  // Continuation: accelerated projected gradient on a surrogate whose norms
  // are smoothed by mu, with mu shrunk tenfold whenever a level stalls. The
  // last level is the true cost. The best true cost seen is what is kept.
  double mu = std::max(cfg.smoothing, 0.1 * dist0);
  double theta = 1.0;
  double level_cost = surrogate_cost(x0, target, u, cfg, dist0, mu);
  ControlSequence best = u, prev = u, y = u, trial(u.size());
  auto next_level = [&] {
    mu = std::max(cfg.smoothing, 0.1 * mu);
    theta = 1.0;
    prev = u;
    step = cfg.step_size;
    level_cost = surrogate_cost(x0, target, u, cfg, dist0, mu);
  };
  for (int it = 0; it < cfg.iterations; ++it) {
    const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
    const double beta = (theta - 1.0) / theta_next;
    for (std::size_t k = 0; k < u.size(); ++k) y[k] = u[k] + beta * (u[k] - prev[k]);
    project_controls(y, cfg);
    const ControlSequence g = gradient(x0, target, y, cfg, dist0, mu);

    if (beta == 0.0) {
      // Stationarity measure: u - P(u - g).
      for (std::size_t k = 0; k < u.size(); ++k) trial[k] = u[k] - g[k];
      project_controls(trial, cfg);
      double pg = 0.0;
      for (std::size_t k = 0; k < u.size(); ++k) pg += (u[k] - trial[k]).squaredNorm();
      if (std::sqrt(pg) < cfg.tolerance) {
        if (mu <= cfg.smoothing) break;
        next_level();
        continue;
      }
    }

    bool accepted = false;
    double t = step;
    while (t > 1e-12) {
      for (std::size_t k = 0; k < u.size(); ++k) trial[k] = y[k] - t * g[k];
      project_controls(trial, cfg);
      const double c = surrogate_cost(x0, target, trial, cfg, dist0, mu);
      if (c < level_cost) {
        prev = u;
        u = trial;
        level_cost = c;
        accepted = true;
        step = 2.0 * t;
        break;
      }
      t *= 0.5;
    }
    sol.iterations = it + 1;
    if (accepted) {
      theta = theta_next;
      const double c = mpc_cost(x0, target, u, cfg);
      if (c < cost) {
        cost = c;
        best = u;
        sol.cost_history.push_back(cost);
      }
    } else if (beta != 0.0) {
      theta = 1.0;
      prev = u;
    } else if (mu > cfg.smoothing) {
      next_level();
    } else {
      break;
    }
  }
  u = best;
  sol.cost = cost;
  return sol;
}

MpcController::MpcController(MPCConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

Eigen::Vector4d MpcController::track(const DroneState& x, const ViewpointTarget& target) {
  ControlSequence warm;
  if (previous_.size() == static_cast<std::size_t>(cfg_.horizon)) {
    warm.assign(previous_.begin() + 1, previous_.end());
    warm.push_back(previous_.back());
  }
  last_ = mpc_solve(x, target, cfg_, warm);
  previous_ = last_.controls;
  return last_.controls.front();
}

}  // namespace mtac
