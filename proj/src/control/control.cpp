#include "mf/control/control.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mf::control {

double PidState::integral() const {
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

void PidState::reset() {
  terms.clear();
  prev_error = 0.0;
  has_prev = false;
}

double pid_step(PidState& state, double error, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("pid_step: dt must be positive");
  state.terms.push_back(error * dt);
  while (state.terms.size() > state.window) state.terms.pop_front();
  const double derivative = state.has_prev ? (error - state.prev_error) / dt : 0.0;
  state.prev_error = error;
  state.has_prev = true;
  const double out = state.gains.kp * error + state.gains.ki * state.integral() + state.gains.kd * derivative;
  return std::clamp(out, state.out_min, state.out_max);
}

double waypoint_heading(const std::vector<double>& wp) {
  const std::size_t t = wp.size() / 2;
  if (t < 2) throw std::invalid_argument("waypoints_to_commands: need at least two waypoints");
  std::vector<std::pair<double, double>> diffs;
  double px = 0.0, py = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    diffs.emplace_back(wp[2 * i] - px, wp[2 * i + 1] - py);
    px = wp[2 * i];
    py = wp[2 * i + 1];
  }
  const std::size_t half = diffs.size() / 2;
  auto mean = [&](std::size_t b, std::size_t e) {
    double x = 0, y = 0;
    for (std::size_t i = b; i < e; ++i) {
      x += diffs[i].first;
      y += diffs[i].second;
    }
    return std::pair<double, double>{x / double(e - b), y / double(e - b)};
  };
  const auto near = mean(0, half), far = mean(half, diffs.size());
  const double ax = 0.5 * near.first + 0.5 * far.first, ay = 0.5 * near.second + 0.5 * far.second;
  if (ax == 0.0 && ay == 0.0) return 0.0;
  return std::atan2(ay, ax);
}

double desired_speed(const std::vector<double>& wp, double waypoint_dt_s) {
  if (wp.size() < 4) throw std::invalid_argument("waypoints_to_commands: need at least two waypoints");
  const double d1 = std::hypot(wp[0], wp[1]);
  const double d2 = std::hypot(wp[2] - wp[0], wp[3] - wp[1]);
  return 0.5 * (d1 + d2) / waypoint_dt_s;
}

VehicleCommand waypoints_to_commands(const std::vector<double>& wp, double speed_mps, PidState& turn, PidState& speed,
                                     const ControllerConfig& config, double dt, double target_override) {
  for (double v : wp) {
    if (!std::isfinite(v)) throw std::invalid_argument("waypoints_to_commands: non-finite waypoint");
  }
  const double angle = waypoint_heading(wp) / (std::numbers::pi / 2.0);
  VehicleCommand cmd;
  cmd.steer = std::clamp(pid_step(turn, angle, dt), -1.0, 1.0);
  double desired = desired_speed(wp, config.waypoint_dt_s);
  bool brake = desired < config.brake_speed || speed_mps - desired > config.brake_margin;
  if (target_override >= 0.0) {
    desired = target_override;
    brake = false;
  }
  const double throttle = pid_step(speed, desired - speed_mps, dt);
  cmd.throttle = brake ? 0.0 : std::clamp(throttle, 0.0, config.max_throttle);
  cmd.brake = brake ? 1 : 0;
  return cmd;
}

bool creep_check(const std::vector<std::pair<double, double>>& history, std::size_t window, double threshold_m) {
  if (window == 0 || history.size() < window) return false;
  const auto& a = history[history.size() - window];
  const auto& b = history.back();
  return std::hypot(b.first - a.first, b.second - a.second) < threshold_m;
}

Controller::Controller(ControllerConfig c) : config(c) {
  turn.gains = config.turn;
  speed.gains = config.speed;
  turn.window = speed.window = config.pid_window;
}

VehicleCommand Controller::step(const std::vector<double>& waypoints, double speed_mps, double dt,
                                const std::vector<std::pair<double, double>>& history) {
  if (creep_left == 0 && creep_check(history, config.creep_window, config.creep_threshold_m)) {
    creep_left = config.creep_duration;
  }
  last_creeping = creep_left > 0;
  const double override_speed = last_creeping ? config.creep_speed : -1.0;
  if (creep_left > 0) --creep_left;
  auto cmd = waypoints_to_commands(waypoints, speed_mps, turn, speed, config, dt, override_speed);
  last_target_speed = last_creeping ? config.creep_speed : desired_speed(waypoints, config.waypoint_dt_s);
  return cmd;
}

EgoState bicycle_step(const EgoState& s, const VehicleCommand& cmd, const BicycleModel& m, double dt) {
  EgoState n = s;
  const double accel = cmd.throttle * m.max_accel - (cmd.brake ? m.brake_decel : 0.0) - m.drag * s.speed;
  n.speed = std::max(0.0, s.speed + accel * dt);
  n.x = s.x + n.speed * std::cos(s.heading) * dt;
  n.y = s.y + n.speed * std::sin(s.heading) * dt;
  n.heading = s.heading + n.speed / m.wheelbase_m * std::tan(cmd.steer * m.max_steer_rad) * dt;
  return n;
}

}  // namespace mf::control
