#pragma once

#include <cstddef>
#include <deque>
#include <limits>
#include <utility>
#include <vector>

namespace mf::control {

struct PidGains {
  double kp = 0.0, ki = 0.0, kd = 0.0;
};

/// kp * e + ki * (windowed sum of e * dt) + kd * de/dt, clamped.
struct PidState {
  PidGains gains;
  std::size_t window = 20;
  double out_min = -std::numeric_limits<double>::infinity();
  double out_max = std::numeric_limits<double>::infinity();
  std::deque<double> terms;  // e * dt per step, newest last
  double prev_error = 0.0;
  bool has_prev = false;

  double integral() const;
  void reset();
};

double pid_step(PidState& state, double error, double dt);

struct VehicleCommand {
  double steer = 0.0;     // [-1, 1], negative turns left
  double throttle = 0.0;  // [0, 1]
  int brake = 0;          // 0 or 1
};

struct ControllerConfig {
  PidGains turn{1.25, 0.75, 0.3};
  PidGains speed{5.0, 0.5, 1.0};
  std::size_t pid_window = 20;
  double waypoint_dt_s = 0.5;
  double brake_speed = 0.4;     // desired speed below this means stop
  double brake_margin = 1.0;  // brake when speed exceeds desired by more than this (m/s)
  double max_throttle = 0.75;
  std::size_t creep_window = 100;
  double creep_threshold_m = 0.1;
  std::size_t creep_duration = 25;
  double creep_speed = 4.0;
};

/// Stateful PID pair plus the creep rule.
struct Controller {
  ControllerConfig config;
  PidState turn, speed;
  std::size_t creep_left = 0;
  double last_target_speed = 0.0;
  bool last_creeping = false;

  explicit Controller(ControllerConfig c = {});
  /// waypoints [T, 2] in ego meters (x forward, y right); history of world positions, newest last.
  VehicleCommand step(const std::vector<double>& waypoints, double speed_mps, double dt,
                      const std::vector<std::pair<double, double>>& history = {});
};

/// Heading error (radians, negative = left) from the weighted average of consecutive waypoint
/// differences, starting at the ego origin. The near and far halves are averaged separately and
/// combined with equal weights.
double waypoint_heading(const std::vector<double>& waypoints);
/// Mean of the first two step lengths divided by the waypoint time base.
double desired_speed(const std::vector<double>& waypoints, double waypoint_dt_s);

/// Stateless part of the controller; throws std::invalid_argument when T < 2.
VehicleCommand waypoints_to_commands(const std::vector<double>& waypoints, double speed_mps, PidState& turn,
                                     PidState& speed, const ControllerConfig& config, double dt,
                                     double target_override = -1.0);

/// True when the displacement over the last `window` positions is below threshold.
bool creep_check(const std::vector<std::pair<double, double>>& history, std::size_t window, double threshold_m);

struct BicycleModel {
  double wheelbase_m = 2.9;
  double max_steer_rad = 0.6;
  double max_accel = 4.0;   // at full throttle, m/s^2
  double brake_decel = 8.0;
  double drag = 0.05;       // 1/s
};

struct EgoState {
  double x = 0.0, y = 0.0, heading = 0.0, speed = 0.0;
};

/// Semi-implicit Euler step; speed never goes negative.
EgoState bicycle_step(const EgoState& s, const VehicleCommand& cmd, const BicycleModel& m, double dt);

}  // namespace mf::control
