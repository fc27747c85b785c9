#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mf/autodiff/rng.hpp"
#include "mf/control/simulate.hpp"

using namespace mf;
using namespace mf::control;

TEST(Pid, Examples) {
  PidState zero;
  zero.gains = {1.0, 1.0, 1.0};
  for (int i = 0; i < 10; ++i) EXPECT_EQ(pid_step(zero, 0.0, 0.1), 0.0);
  PidState p;
  p.gains = {1.0, 0.0, 0.0};
  EXPECT_DOUBLE_EQ(pid_step(p, 0.3, 0.1), 0.3);
  PidState i;
  i.gains = {0.0, 0.5, 0.0};
  double out = 0;
  for (int k = 0; k < 10; ++k) out = pid_step(i, 1.0, 0.1);
  EXPECT_NEAR(out, 0.5, 1e-12);
  EXPECT_THROW(pid_step(i, 1.0, 0.0), std::invalid_argument);
}

TEST(Pid, IntegralIsWindowedAndClamped) {
  PidState s;
  s.gains = {0.0, 1.0, 0.0};
  s.window = 20;
  s.out_min = -2;
  s.out_max = 2;
  double out = 0;
  for (int k = 0; k < 500; ++k) out = pid_step(s, 1.0, 1.0);
  EXPECT_EQ(s.terms.size(), 20u);
  EXPECT_DOUBLE_EQ(s.integral(), 20.0);
  EXPECT_EQ(out, 2.0);
}

TEST(Commands, StraightAheadAtTargetSpeed) {
  Controller c;
  const std::vector<double> wp = {2.5, 0, 5, 0, 7.5, 0, 10, 0};
  auto cmd = c.step(wp, 5.0, 0.05);
  EXPECT_LT(std::abs(cmd.steer), 1e-6);
  EXPECT_EQ(cmd.brake, 0);
  EXPECT_DOUBLE_EQ(desired_speed(wp, 0.5), 5.0);
}

TEST(Commands, AllAtOriginBrakes) {
  Controller c;
  auto cmd = c.step(std::vector<double>(8, 0.0), 0.0, 0.05);
  EXPECT_EQ(cmd.brake, 1);
  EXPECT_EQ(cmd.throttle, 0.0);
  EXPECT_THROW(c.step({1.0, 0.0}, 0.0, 0.05), std::invalid_argument);
}

TEST(Commands, LeftBearingSteersNegative) {
  Controller c;
  const double a = -30.0 * std::numbers::pi / 180.0;  // left is negative y
  std::vector<double> wp;
  for (int k = 1; k <= 4; ++k) wp.insert(wp.end(), {2.0 * k * std::cos(a), 2.0 * k * std::sin(a)});
  EXPECT_NEAR(waypoint_heading(wp), a, 1e-12);
  auto cmd = c.step(wp, 0.0, 0.05);
  EXPECT_LT(cmd.steer, 0.0);
  EXPECT_GT(std::abs(cmd.steer), 0.0);
}

TEST(Commands, RangesHoldForRandomInputs) {
  Rng rng(3);
  Controller c;
  for (int k = 0; k < 2000; ++k) {
    std::vector<double> wp(8);
    for (auto& v : wp) v = rng.uniform(-20, 20);
    auto cmd = c.step(wp, rng.uniform(0, 15), 0.05);
    ASSERT_GE(cmd.steer, -1.0);
    ASSERT_LE(cmd.steer, 1.0);
    ASSERT_GE(cmd.throttle, 0.0);
    ASSERT_LE(cmd.throttle, 1.0);
    ASSERT_TRUE(cmd.brake == 0 || cmd.brake == 1);
  }
}

TEST(Creep, Rule) {
  std::vector<std::pair<double, double>> moving, stalled;
  for (int k = 0; k < 100; ++k) {
    moving.emplace_back(0.2 * k, 0.0);
    stalled.emplace_back(0.05 * k / 99.0, 0.0);
  }
  EXPECT_FALSE(creep_check(moving, 100, 0.1));
  EXPECT_TRUE(creep_check(stalled, 100, 0.1));
  EXPECT_FALSE(creep_check(std::vector<std::pair<double, double>>(50), 100, 0.1));
}

TEST(Bicycle, StraightAtZeroSteer) {
  BicycleModel m;
  EgoState s{0, 0, 0.3, 5.0};
  for (int k = 0; k < 1000; ++k) s = bicycle_step(s, {0.0, 0.5, 0}, m, 0.05);
  EXPECT_EQ(s.heading, 0.3);
  EXPECT_NEAR(s.y / s.x, std::tan(0.3), 1e-9);
  s = bicycle_step(s, {0.0, 0.0, 1}, m, 10.0);
  EXPECT_EQ(s.speed, 0.0);
}

TEST(Geometry, BoxOverlap) {
  EXPECT_TRUE(boxes_overlap({0, 0, 4, 2, 0}, {3, 0, 4, 2, 0}));
  EXPECT_FALSE(boxes_overlap({0, 0, 4, 2, 0}, {4.5, 0, 4, 2, 0}));
  EXPECT_FALSE(boxes_overlap({0, 0, 4, 2, 0}, {0, 3.2, 4, 2, 0.7}));
  EXPECT_TRUE(boxes_overlap({0, 0, 4, 2, 0}, {0, 2.0, 4, 2, 0.7}));
}

TEST(ClosedLoop, OracleCompletesStraightRoute) {
  RouteScenario sc;
  sc.world.ego_speed_mps = 6.0;
  sc.world.ego = {0.0, 0.3, 0.05};
  sc.route_length_m = 200.0;
  auto log = simulate_route(oracle_policy(), sc);
  EXPECT_TRUE(log.completed);
  EXPECT_FALSE(log.failed);
  EXPECT_TRUE(log.events.empty());
  EXPECT_LT(log.max_lateral_deviation, 0.5);
  EXPECT_EQ(log.result().multiplier, 1.0);
  double after100 = 0;
  for (std::size_t k = 100; k < log.steps.size(); ++k) after100 = std::max(after100, std::abs(log.steps[k].y));
  EXPECT_LT(after100, 0.5);
}

TEST(ClosedLoop, StalledPolicyTriggersCreep) {
  RouteScenario sc;
  sc.max_steps = 200;
  Policy stalled = [](const PolicyInput&) { return std::vector<double>(8, 0.0); };
  auto log = simulate_route(stalled, sc);
  ASSERT_EQ(log.steps.size(), 200u);
  for (std::size_t k = 0; k < 99; ++k) {
    EXPECT_FALSE(log.steps[k].creeping);
    EXPECT_EQ(log.steps[k].x, 0.0);
  }
  EXPECT_TRUE(log.steps[99].creeping);
  EXPECT_EQ(log.steps[99].target_speed, 4.0);
  EXPECT_GT(log.steps.back().x, 0.0);
}

TEST(ClosedLoop, CollisionRecorded) {
  RouteScenario sc;
  scenes::Actor v;
  v.s = 15;
  sc.world.vehicles.push_back(v);
  sc.max_steps = 400;
  Policy reckless = [](const PolicyInput&) { return std::vector<double>{3, 0, 6, 0, 9, 0, 12, 0}; };
  auto log = simulate_route(reckless, sc);
  ASSERT_FALSE(log.events.empty());
  EXPECT_EQ(log.events[0].kind, eval::InfractionKind::vehicle);
  EXPECT_DOUBLE_EQ(log.result().multiplier, 0.6);
  // The expert follows a slower lead car without contact.
  sc.world.ego_speed_mps = 6.0;
  sc.world.vehicles[0].speed = 3.0;
  auto safe = simulate_route(oracle_policy(), sc);
  EXPECT_TRUE(safe.events.empty());
  // Parked car: the expert stops behind it, then the creep rule eventually pushes into it.
  sc.world.vehicles[0].speed = 0.0;
  auto parked = simulate_route(oracle_policy(), sc);
  ASSERT_FALSE(parked.events.empty());
  bool crept = false;
  for (const auto& r : parked.steps) crept = crept || r.creeping;
  EXPECT_TRUE(crept);
}

TEST(ClosedLoop, RedLightCrossingAndOffRoad) {
  RouteScenario sc;
  sc.world.topology = scenes::Topology::intersection;
  sc.world.crossing_s_m = 20;
  sc.world.light = {true, true, 15.5, 3.0, 16.0};
  sc.max_steps = 300;
  Policy go = [](const PolicyInput&) { return std::vector<double>{3, 0, 6, 0, 9, 0, 12, 0}; };
  auto log = simulate_route(go, sc);
  bool red = false;
  for (const auto& e : log.events) red = red || e.kind == eval::InfractionKind::red_light;
  EXPECT_TRUE(red);
  RouteScenario off;
  Policy veer = [](const PolicyInput&) { return std::vector<double>{2, 2, 4, 4, 6, 6, 8, 8}; };
  auto l2 = simulate_route(veer, off);
  ASSERT_FALSE(l2.events.empty());
  EXPECT_EQ(l2.events.back().kind, eval::InfractionKind::off_road);
  EXPECT_LT(l2.completion, 1.0);
  EXPECT_FALSE(l2.completed);
}

TEST(ClosedLoop, LogCsv) {
  RouteScenario sc;
  sc.max_steps = 5;
  auto log = simulate_route(oracle_policy(), sc);
  const auto csv = route_log_csv(log);
  EXPECT_EQ(csv.rfind("t,x,y,heading,speed,steer,throttle,brake,event\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
  EXPECT_EQ(route_log_records(log).size(), 3u);
}
