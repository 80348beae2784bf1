#pragma once

#include <mtac/env.hpp>
#include <mtac/policy.hpp>

#include <Eigen/Core>

#include <cmath>
#include <random>
#include <vector>

namespace mtac::testing {

// Hand-rolled generators shared by the property tests.
struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng); }

  // Strictly positive probability vector.
  Eigen::VectorXd simplex(int c) {
    Eigen::VectorXd p(c);
    for (int i = 0; i < c; ++i) p[i] = uniform(0.01, 1.0);
    return p / p.sum();
  }

  TargetObservation observation() {
    TargetObservation o;
    o.rel_position = Vec2(uniform(-10, 10), uniform(-10, 10));
    o.rel_velocity = Vec2(uniform(-2, 2), uniform(-2, 2));
    o.rel_facing = uniform(-kPi, kPi);
    o.belief_entropy = uniform(0, 1);
    o.measurement_entropy = uniform(0, 1);
    o.classified = integer(0, 1);
    return o;
  }

  std::vector<TargetObservation> observations(int m) {
    std::vector<TargetObservation> out;
    for (int i = 0; i < m; ++i) out.push_back(observation());
    return out;
  }

  std::vector<int> permutation(int m) {
    std::vector<int> p(m);
    for (int i = 0; i < m; ++i) p[i] = i;
    std::shuffle(p.begin(), p.end(), rng);
    return p;
  }
};

inline Eigen::MatrixXd permute_rows(const Eigen::MatrixXd& x, const std::vector<int>& perm) {
  Eigen::MatrixXd y(x.rows(), x.cols());
  for (int i = 0; i < static_cast<int>(perm.size()); ++i) y.row(i) = x.row(perm[i]);
  return y;
}

inline ClassProbability cp(std::initializer_list<double> v) {
  ClassProbability p;
  p.probs = Eigen::VectorXd(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) p.probs[i++] = x;
  return p;
}

inline Belief belief(std::initializer_list<double> v) { return Belief{cp(v).probs}; }

}  // namespace mtac::testing
