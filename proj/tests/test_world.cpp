#include "support.hpp"

#include <mtac/world.hpp>

#include <doctest.h>

#include <cmath>

using namespace mtac;
using namespace mtac::testing;

namespace {

TargetState target(Vec2 p, Vec2 v, bool is_static = false) {
  TargetState t;
  t.position = p;
  t.velocity = v;
  t.facing = v.norm() > 0 ? std::atan2(v.y(), v.x()) : 0.0;
  t.is_static = is_static;
  return t;
}

double kinetic(const std::vector<TargetState>& ts) {
  double e = 0.0;
  for (const auto& t : ts) e += 0.5 * t.velocity.squaredNorm();
  return e;
}

Vec2 momentum(const std::vector<TargetState>& ts) {
  Vec2 m = Vec2::Zero();
  for (const auto& t : ts) m += t.velocity;
  return m;
}

bool inside(const TargetState& t, const WorldConfig& w) {
  return t.position.x() >= 0 && t.position.x() <= w.arena_width && t.position.y() >= 0 &&
         t.position.y() <= w.arena_height;
}

}  // namespace

TEST_CASE("world config validation") {
  WorldConfig w;
  CHECK_NOTHROW(w.validate());
  CHECK(w.low_level_steps_per_high_level() == 5);
  w.tau_l = 0.07;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
  w.tau_l = 0.5;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
}

TEST_CASE("head-on equal-mass collision swaps velocities") {
  WorldConfig w;
  std::vector<TargetState> ts{target({10.0, 25.0}, {1, 0}), target({11.3, 25.0}, {-1, 0})};
  const auto out = step_targets_cv(ts, w, 0.05);
  CHECK(out[0].velocity.x() == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(out[1].velocity.x() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(out[0].velocity.y()) < 1e-12);
  CHECK((out[1].position - out[0].position).norm() >= 2 * w.target_radius - 1e-12);
}

TEST_CASE("wall rebound reflects the normal component") {
  WorldConfig w;
  std::vector<TargetState> ts{target({0.65, 25.0}, {-1, 0})};
  const auto out = step_targets_cv(ts, w, 0.25);
  CHECK(out[0].velocity.x() == doctest::Approx(1.0));
  CHECK(out[0].velocity.y() == 0.0);
  CHECK(out[0].position.x() >= w.target_radius);
}

TEST_CASE("free motion is an Euler step") {
  WorldConfig w;
  std::vector<TargetState> ts{target({10, 10}, {1, 0.5})};
  const auto out = step_targets_cv(ts, w, 0.25);
  CHECK(out[0].position.x() == doctest::Approx(10.25).epsilon(1e-15));
  CHECK(out[0].position.y() == doctest::Approx(10.125).epsilon(1e-15));
  CHECK(out[0].facing == doctest::Approx(std::atan2(0.5, 1.0)));
}

TEST_CASE("static targets act as immovable obstacles") {
  WorldConfig w;
  TargetState wall = target({20, 20}, {0, 0}, true);
  wall.facing = 1.234;
  std::vector<TargetState> ts{wall, target({18.85, 20}, {1, 0})};
  const auto out = step_targets_cv(ts, w, 0.05);
  CHECK(out[0].position == wall.position);
  CHECK(out[0].velocity == Vec2::Zero());
  CHECK(out[0].facing == 1.234);
  CHECK(out[1].velocity.x() == doctest::Approx(-1.0));
}

TEST_CASE("social forces: attraction toward a distant goal") {
  WorldConfig w;
  SocialForcesConfig sf;
  std::mt19937_64 rng(1);
  std::vector<TargetState> ts{target({10, 10}, {0, 0})};
  std::vector<Vec2> goals{Vec2(30, 40)};
  const auto out = step_targets_social(ts, goals, sf, w, 0.25, rng);
  const Vec2 dir = (goals[0] - ts[0].position).normalized();
  CHECK(out.targets[0].velocity.normalized().dot(dir) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("social forces: pure repulsion pushes neighbors apart") {
  WorldConfig w;
  SocialForcesConfig sf;
  sf.goal_attraction_gain = 0.0;
  std::mt19937_64 rng(1);
  std::vector<TargetState> ts{target({20, 20}, {0, 0}), target({21.5, 20.3}, {0, 0})};
  std::vector<Vec2> goals{ts[0].position, ts[1].position};
  const auto out = step_targets_social(ts, goals, sf, w, 0.25, rng);
  CHECK((out.targets[1].position - out.targets[0].position).norm() >
        (ts[1].position - ts[0].position).norm());
}

TEST_CASE("social forces: equilibrium at the goal") {
  WorldConfig w;
  SocialForcesConfig sf;
  std::vector<TargetState> ts{target({25, 25}, {0, 0})};
  std::vector<Vec2> goals{Vec2(25, 25)};
  const auto acc = social_accelerations(ts, goals, sf, w);
  CHECK(acc[0].norm() < 1e-6);
}

TEST_CASE("first-order drone") {
  WorldConfig w;
  DroneState d;
  d.position = Vec3(10, 10, w.drone_altitude);

  SUBCASE("velocity saturation") {
    const auto n = step_drone_firstorder(d, Vec3(5, 0, 0), 0.0, w, 0.25);
    CHECK((n.position - d.position).x() == doctest::Approx(0.5));
    CHECK((n.position - d.position).y() == 0.0);
  }
  SUBCASE("yaw wraps") {
    d.yaw = kPi - 0.1;
    const auto n = step_drone_firstorder(d, Vec3::Zero(), 1.0, w, 0.3);
    CHECK(n.yaw == doctest::Approx(-kPi + 0.2).epsilon(1e-12));
  }
  SUBCASE("zero command is the identity") {
    d.yaw = 0.3;
    const auto n = step_drone_firstorder(d, Vec3::Zero(), 0.0, w, 0.25);
    CHECK(n.position == d.position);
    CHECK(n.yaw == d.yaw);
  }
}

TEST_CASE("double-integrator drone") {
  WorldConfig w;
  InputBox box;
  DroneState x;
  x.position = Vec3(10, 10, 2);

  SUBCASE("ballistic") {
    x.velocity = Vec3(1, -0.5, 0);
    const auto n = drone_dynamics_f(x, Eigen::Vector4d::Zero(), 0.05, w, box);
    CHECK(n.velocity == x.velocity);
    CHECK((n.position - x.position - 0.05 * x.velocity).norm() < 1e-15);
  }
  SUBCASE("two hand-iterated steps") {
    const Eigen::Vector4d u(1, 0, 0, 0);
    const auto n = drone_dynamics_f(drone_dynamics_f(x, u, 0.05, w, box), u, 0.05, w, box);
    CHECK(n.position.x() - 10.0 == doctest::Approx(0.0075).epsilon(1e-12));
  }
  SUBCASE("velocity saturates") {
    DroneState s = x;
    for (int k = 0; k < 100; ++k) s = drone_dynamics_f(s, Eigen::Vector4d(4, 4, 0, 4), 0.05, w, box);
    CHECK(s.velocity.x() == doctest::Approx(w.drone_v_max));
    CHECK(s.yaw_rate == doctest::Approx(w.drone_yaw_rate_max));
  }
  SUBCASE("inputs outside the box are rejected") {
    CHECK_THROWS_AS(drone_dynamics_f(x, Eigen::Vector4d(5, 0, 0, 0), 0.05, w, box),
                    std::invalid_argument);
  }
  SUBCASE("deterministic") {
    const Eigen::Vector4d u(0.3, -1.1, 0, 2.2);
    const auto a = drone_dynamics_f(x, u, 0.05, w, box);
    const auto b = drone_dynamics_f(x, u, 0.05, w, box);
    CHECK(std::memcmp(&a, &b, sizeof(DroneState)) == 0);
  }
}

TEST_CASE("sampled target velocities respect the cap") {
  WorldConfig w;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10000; ++i) {
    const Vec2 v = sample_target_velocity(w, rng);
    REQUIRE(std::abs(v.x()) <= w.target_speed_cap);
    REQUIRE(std::abs(v.y()) <= w.target_speed_cap);
  }
}

TEST_CASE("elastic contacts conserve energy and momentum" * doctest::test_suite("property")) {
  WorldConfig w;
  Gen g(21);
  int contacts = 0;
  for (int trial = 0; trial < 5000; ++trial) {
    // Two targets just short of touching, closing on each other.
    const double ang = g.uniform(-kPi, kPi);
    const Vec2 n(std::cos(ang), std::sin(ang));
    const Vec2 c(g.uniform(10, 40), g.uniform(10, 40));
    const double gap = g.uniform(0.0, 0.05);
    const Vec2 p0 = c - (w.target_radius + gap / 2) * n;
    const Vec2 p1 = c + (w.target_radius + gap / 2) * n;
    const Vec2 v0(g.uniform(-1.5, 1.5), g.uniform(-1.5, 1.5));
    const Vec2 v1(g.uniform(-1.5, 1.5), g.uniform(-1.5, 1.5));
    std::vector<TargetState> ts{target(p0, v0), target(p1, v1)};
    const auto out = step_targets_cv(ts, w, 0.05);
    const double e0 = kinetic(ts), e1 = kinetic(out);
    REQUIRE(std::abs(e1 - e0) <= 1e-9 * std::max(e0, 1e-12));
    REQUIRE((momentum(out) - momentum(ts)).norm() <= 1e-9 * std::max(momentum(ts).norm(), 1.0));
    if ((out[0].velocity - v0).norm() > 1e-12) ++contacts;
  }
  CHECK(contacts > 1000);
}

TEST_CASE("wall rebounds preserve speed" * doctest::test_suite("property")) {
  WorldConfig w;
  Gen g(22);
  for (int trial = 0; trial < 5000; ++trial) {
    const Vec2 p(g.uniform(0.6, 1.0), g.uniform(0.6, 49.4));
    const Vec2 v(g.uniform(-1.5, -0.1), g.uniform(-1.5, 1.5));
    std::vector<TargetState> ts{target(p, v)};
    const auto out = step_targets_cv(ts, w, 0.25);
    REQUIRE(std::abs(out[0].velocity.norm() - v.norm()) < 1e-12);
  }
}

TEST_CASE("fuzz: targets stay in the arena and statics never move" * doctest::test_suite("property")) {
  WorldConfig w;
  w.arena_width = 15;
  w.arena_height = 12;
  SocialForcesConfig sf;
  Gen g(23);
  for (int mode = 0; mode < 2; ++mode) {
    std::vector<TargetState> ts;
    std::vector<Vec2> goals;
    for (int j = 0; j < 8; ++j) {
      TargetState t = target(Vec2(1.5 + 3.0 * (j % 4), 2 + 4.0 * (j / 4)),
                             sample_target_velocity(w, g.rng), j % 3 == 0);
      if (t.is_static) t.velocity.setZero();
      ts.push_back(t);
      goals.push_back(sample_arena_point(w, 1.0, g.rng));
    }
    const auto start = ts;
    for (int k = 0; k < 10000; ++k) {
      if (mode == 0) {
        ts = step_targets_cv(ts, w, 0.05);
      } else {
        auto s = step_targets_social(ts, goals, sf, w, 0.05, g.rng);
        ts = std::move(s.targets);
        goals = std::move(s.goals);
      }
      for (std::size_t j = 0; j < ts.size(); ++j) {
        REQUIRE(inside(ts[j], w));
        REQUIRE(ts[j].facing > -kPi);
        REQUIRE(ts[j].facing <= kPi);
        if (ts[j].is_static) REQUIRE(ts[j].position == start[j].position);
        if (mode == 1) REQUIRE(ts[j].velocity.norm() <= w.target_speed_cap + 1e-12);
      }
    }
  }
}
