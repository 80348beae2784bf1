#include <mtac/observation.hpp>

#include <cmath>

namespace mtac {

Eigen::MatrixXd encode_observations(std::span<const TargetObservation> obs) {
  Eigen::MatrixXd f(static_cast<Eigen::Index>(obs.size()), kObservationFeatures);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const TargetObservation& o = obs[i];
    const auto r = static_cast<Eigen::Index>(i);
    f(r, 0) = o.rel_position.x() / kPositionScale;
    f(r, 1) = o.rel_position.y() / kPositionScale;
    f(r, 2) = o.rel_velocity.x() / kVelocityScale;
    f(r, 3) = o.rel_velocity.y() / kVelocityScale;
    f(r, 4) = std::cos(o.rel_facing);
    f(r, 5) = std::sin(o.rel_facing);
    f(r, 6) = o.belief_entropy;
    f(r, 7) = o.measurement_entropy;
    f(r, 8) = o.classified;
  }
  return f;
}

}  // namespace mtac
