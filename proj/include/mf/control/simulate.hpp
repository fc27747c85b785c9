#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mf/autodiff/records.hpp"
#include "mf/control/control.hpp"
#include "mf/eval/metrics.hpp"
#include "mf/scenes/scene.hpp"

namespace mf::control {

struct RouteScenario {
  std::size_t route_id = 0;
  scenes::SceneSpec world;  // world.ego is the start pose
  double route_length_m = 200.0;
  double start_speed = 0.0;
  double dt = 0.05;
  std::size_t max_steps = 4000;
  scenes::SensorSetup sensors;
};

/// What a policy sees at one step. render() produces the sensor view from the current pose.
struct PolicyInput {
  const scenes::SceneSpec& world;  // actors at the current time, ego at the current pose
  const scenes::SensorSetup& sensors;
  std::size_t step = 0;
  double speed = 0.0;
  double target_x = 0.0, target_y = 0.0;  // ego frame
  std::function<scenes::SceneSample()> render;
};

/// Returns waypoints [T, 2] in the ego frame.
using Policy = std::function<std::vector<double>(const PolicyInput&)>;

struct RouteStep {
  double t = 0.0, x = 0.0, y = 0.0, heading = 0.0, speed = 0.0;
  VehicleCommand cmd;
  double target_speed = 0.0;
  bool creeping = false;
  std::string event;
};

struct RouteLog {
  std::size_t route_id = 0;
  std::vector<RouteStep> steps;
  std::vector<eval::InfractionEvent> events;
  double completion = 0.0;
  bool completed = false;
  bool failed = false;  // aborted on a non-finite state or policy error
  std::string failure;
  double max_lateral_deviation = 0.0;

  eval::RouteResult result(const eval::PenaltyCoefficients& coeffs = {}) const;
};

/// Closed loop: view -> policy -> controller -> bicycle model -> infraction checks.
RouteLog simulate_route(const Policy& policy, const RouteScenario& scenario, const ControllerConfig& controller = {},
                        const BicycleModel& vehicle = {});

/// Replays the expert waypoints of the current world state; never renders.
Policy oracle_policy();

/// Actors advanced along their lanes by their speeds.
scenes::SceneSpec world_at(const scenes::SceneSpec& world, double t);

/// Separating-axis overlap test for two ground-plane boxes.
bool boxes_overlap(const geometry::Box& a, const geometry::Box& b);

std::string route_log_csv(const RouteLog& log);
std::vector<ArrayRecord> route_log_records(const RouteLog& log);

}  // namespace mf::control
