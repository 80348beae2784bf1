#pragma once

#include <mtac/world.hpp>

#include <Eigen/Core>

#include <vector>

namespace mtac {

struct MPCConfig {
  int horizon = 10;
  double dt = 0.05;
  double w_u = 0.01;   // stage weight on ||u_k||
  double w_g = 10.0;   // terminal weight on the normalized state error
  InputBox box;
  int iterations = 200;
  double step_size = 1.0;
  double tolerance = 1e-6;     // projected-gradient norm
  double smoothing = 1e-6;     // ||u|| ~ sqrt(||u||^2 + s^2)
  double min_distance = 1e-9;  // below this the target counts as reached
  bool plan_z = false;

  void validate() const;
};

// World-frame viewpoint to reach, at rest.
struct ViewpointTarget {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
};

using ControlSequence = std::vector<Eigen::Vector4d>;

struct MPCSolution {
  ControlSequence controls;
  double cost = 0.0;
  int iterations = 0;
  std::vector<double> cost_history;  // cost after every accepted iterate
};

// Full 8D distance between a drone state and a resting viewpoint, yaw wrapped.
double state_distance(const DroneState& x, const ViewpointTarget& target);

// Cost of a control sequence under the internal double-integrator model.
double mpc_cost(const DroneState& x0, const ViewpointTarget& target,
                const ControlSequence& u, const MPCConfig& cfg);

// Projects every input onto the box (and zeroes vertical accel unless
// planning in z).
void project_controls(ControlSequence& u, const MPCConfig& cfg);

// Projected gradient with backtracking on the control sequence; `warm_start`
// (when non-empty) seeds the iteration.
MPCSolution mpc_solve(const DroneState& x0, const ViewpointTarget& target,
                      const MPCConfig& cfg, const ControlSequence& warm_start = {});

// Receding-horizon wrapper: solves, applies the first input, and shifts the
// solution to warm-start the next call.
class MpcController {
 public:
  explicit MpcController(MPCConfig cfg);

  Eigen::Vector4d track(const DroneState& x, const ViewpointTarget& target);
  void reset() { previous_.clear(); }

  const MPCConfig& config() const { return cfg_; }
  const MPCSolution& last_solution() const { return last_; }

 private:
  MPCConfig cfg_;
  ControlSequence previous_;
  MPCSolution last_;
};

}  // namespace mtac
