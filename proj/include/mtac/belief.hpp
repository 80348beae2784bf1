#pragma once

#include <mtac/sensor.hpp>

#include <Eigen/Core>

#include <span>

namespace mtac {

// Per-target class belief. Starts uniform and is refined by conflation.
struct Belief {
  Eigen::VectorXd probs;

  static Belief uniform(int num_classes);
  double max_prob() const { return probs.maxCoeff(); }
  int argmax() const;
};

struct ClassificationStatus {
  bool classified = false;
  double b_max = 0.95;
};

// Product-then-normalize fusion. When b and p have orthogonal supports the
// measurement is skipped (belief returned unchanged) and a warning is logged.
Belief conflate(const Belief& b, const ClassProbability& p);

// Conflation with the measurement raised to a non-negative power `w`.
Belief conflate_weighted(const Belief& b, const ClassProbability& p, double w);

// Shannon entropy divided by ln(C), with 0 ln 0 = 0.
double normalized_entropy(std::span<const double> dist);
double normalized_entropy(const Eigen::VectorXd& dist);

// Latching update: once classified, always classified.
ClassificationStatus update_status(const Belief& b, ClassificationStatus status);

}  // namespace mtac
