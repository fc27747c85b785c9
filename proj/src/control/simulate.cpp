#include "mf/control/simulate.hpp"

#include <array>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <set>
#include <sstream>

namespace mf::control {

namespace {

constexpr double kEgoLength = 4.5;
constexpr double kEgoWidth = 2.0;

std::array<std::pair<double, double>, 4> corners(const geometry::Box& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double hl = b.length / 2, hw = b.width / 2;
  std::array<std::pair<double, double>, 4> out;
  const double sx[4] = {hl, hl, -hl, -hl}, sy[4] = {hw, -hw, -hw, hw};
  for (int i = 0; i < 4; ++i) out[i] = {b.x + c * sx[i] - s * sy[i], b.y + s * sx[i] + c * sy[i]};
  return out;
}

}  // namespace

bool boxes_overlap(const geometry::Box& a, const geometry::Box& b) {
  const auto ca = corners(a), cb = corners(b);
  for (const auto* box : {&a, &b}) {
    for (double ang : {box->yaw, box->yaw + std::numbers::pi / 2}) {
      const double ax = std::cos(ang), ay = std::sin(ang);
      double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
      for (const auto& [x, y] : ca) {
        amin = std::min(amin, x * ax + y * ay);
        amax = std::max(amax, x * ax + y * ay);
      }
      for (const auto& [x, y] : cb) {
        bmin = std::min(bmin, x * ax + y * ay);
        bmax = std::max(bmax, x * ax + y * ay);
      }
      if (amax <= bmin || bmax <= amin) return false;
    }
  }
  return true;
}

scenes::SceneSpec world_at(const scenes::SceneSpec& world, double t) {
  scenes::SceneSpec w = world;
  for (auto& v : w.vehicles) v.s += (v.oncoming ? -1.0 : 1.0) * v.speed * t;
  return w;
}

eval::RouteResult RouteLog::result(const eval::PenaltyCoefficients& coeffs) const {
  return {completion, eval::infraction_multiplier(events, coeffs)};
}

Policy oracle_policy() {
  return [](const PolicyInput& in) { return scenes::expert_waypoints(in.world, in.sensors); };
}

RouteLog simulate_route(const Policy& policy, const RouteScenario& sc, const ControllerConfig& cc,
                        const BicycleModel& vehicle) {
  RouteLog log;
  log.route_id = sc.route_id;
  Controller controller(cc);
  EgoState ego{sc.world.ego.x, sc.world.ego.y, sc.world.ego.heading, sc.start_speed};
  std::vector<std::pair<double, double>> history;
  std::set<std::size_t> hit_vehicles, hit_pedestrians;
  bool hit_static = false;
  auto [s_prev, d_start] = scenes::route_project(sc.world, ego.x, ego.y);
  const double s_start = s_prev;
  auto record = [&](eval::InfractionKind k, double t, RouteStep& row) {
    log.events.push_back({k, sc.route_id, t});
    row.event += (row.event.empty() ? "" : "|") + eval::to_string(k);
  };

  for (std::size_t step = 0; step < sc.max_steps; ++step) {
    const double t = double(step) * sc.dt;
    scenes::SceneSpec world = world_at(sc.world, t);
    world.ego = {ego.x, ego.y, ego.heading};
    const auto [s_now, d_now] = scenes::route_project(world, ego.x, ego.y);
    const auto goal = scenes::route_point(world, s_now + world.target_distance_m, 0.0);
    const auto [gx, gy] = scenes::world_to_ego(world.ego, goal.x, goal.y);
    PolicyInput in{world, sc.sensors, step, ego.speed, gx, gy, [&world, &sc]() { return scenes::render_view(world, sc.sensors); }};

    RouteStep row;
    row.t = t;
    std::vector<double> wp;
    try {
      wp = policy(in);
      history.emplace_back(ego.x, ego.y);
      row.cmd = controller.step(wp, ego.speed, sc.dt, history);
    } catch (const std::exception& e) {
      log.failed = true;
      log.failure = std::string("policy/controller error: ") + e.what();
      break;
    }
    row.target_speed = controller.last_target_speed;
    row.creeping = controller.last_creeping;
    ego = bicycle_step(ego, row.cmd, vehicle, sc.dt);
    row.x = ego.x;
    row.y = ego.y;
    row.heading = ego.heading;
    row.speed = ego.speed;
    if (!std::isfinite(ego.x) || !std::isfinite(ego.y) || !std::isfinite(ego.heading) || !std::isfinite(ego.speed)) {
      log.failed = true;
      log.failure = "non-finite ego state";
      row.event = "abort";
      log.steps.push_back(row);
      break;
    }

    const auto [s, d] = scenes::route_project(world, ego.x, ego.y);
    log.max_lateral_deviation = std::max(log.max_lateral_deviation, std::abs(d));
    log.completion = std::clamp((s - s_start) / sc.route_length_m, 0.0, 1.0);
    const geometry::Box ego_box{ego.x, ego.y, kEgoLength, kEgoWidth, ego.heading};
    const double t_next = t + sc.dt;
    const auto next_world = world_at(sc.world, t_next);
    for (std::size_t i = 0; i < next_world.vehicles.size(); ++i) {
      if (!hit_vehicles.count(i) && boxes_overlap(ego_box, scenes::actor_box(next_world, next_world.vehicles[i]))) {
        hit_vehicles.insert(i);
        record(eval::InfractionKind::vehicle, t_next, row);
      }
    }
    for (std::size_t i = 0; i < next_world.pedestrians.size(); ++i) {
      if (!hit_pedestrians.count(i) &&
          boxes_overlap(ego_box, scenes::actor_box(next_world, next_world.pedestrians[i]))) {
        hit_pedestrians.insert(i);
        record(eval::InfractionKind::pedestrian, t_next, row);
      }
    }
    if (world.light.present) {
      const auto pole = scenes::route_point(world, world.light.s, world.light.d);
      if (!hit_static && boxes_overlap(ego_box, {pole.x, pole.y, 0.3, 0.3, pole.heading})) {
        hit_static = true;
        record(eval::InfractionKind::static_object, t_next, row);
      }
      if (world.light.red && s_prev < world.light.stop_s && s >= world.light.stop_s) {
        record(eval::InfractionKind::red_light, t_next, row);
      }
    }
    s_prev = s;
    const bool off_road = !scenes::on_road(world, s, d);
    if (off_road) record(eval::InfractionKind::off_road, t_next, row);
    log.steps.push_back(row);
    if (off_road) break;  // completion is truncated where the ego left the road
    if (s - s_start >= sc.route_length_m) {
      log.completed = true;
      log.completion = 1.0;
      break;
    }
  }
  return log;
}

std::string route_log_csv(const RouteLog& log) {
  std::ostringstream os;
  os << "t,x,y,heading,speed,steer,throttle,brake,event\n" << std::setprecision(9);
  for (const auto& r : log.steps) {
    os << r.t << ',' << r.x << ',' << r.y << ',' << r.heading << ',' << r.speed << ',' << r.cmd.steer << ','
       << r.cmd.throttle << ',' << r.cmd.brake << ',' << r.event << '\n';
  }
  return os.str();
}

std::vector<ArrayRecord> route_log_records(const RouteLog& log) {
  std::vector<double> rows;
  for (const auto& r : log.steps) {
    rows.insert(rows.end(), {r.t, r.x, r.y, r.heading, r.speed, r.cmd.steer, r.cmd.throttle, double(r.cmd.brake)});
  }
  std::vector<double> events;
  for (const auto& e : log.events) events.insert(events.end(), {double(e.kind), e.timestamp});
  return {ArrayRecord::from_f64("route_steps", {log.steps.size(), 8}, rows),
          ArrayRecord::from_f64("route_events", {log.events.size(), 2}, events),
          ArrayRecord::from_f64("route_summary", {3}, {log.completion, double(log.completed), double(log.failed)})};
}

}  // namespace mf::control
