#include "mf/scenes/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "mf/autodiff/rng.hpp"

namespace mf::scenes {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kDashPeriod = 6.0;
constexpr double kDashOn = 3.0;

double pos_fmod(double a, double m) {
  double r = std::fmod(a, m);
  return r < 0 ? r + m : r;
}

double road_left() { return -1.5 * kLaneWidth; }
double road_right() { return 0.5 * kLaneWidth; }

// Semantic class ids, matching the order of the semantic class table.
enum Sem : std::uint8_t { kUnlabeled = 0, kVehicle = 1, kRoad = 2, kRedLight = 3, kPedestrian = 4, kMarking = 5, kSidewalk = 6 };

struct Solid {
  geometry::Box box;  // ego frame
  double z0 = 0.0, z1 = 1.0;
  std::uint8_t sem = kUnlabeled;
  std::array<float, 3> color{};
};

const std::array<std::array<float, 3>, 6> kVehiclePalette = {{{0.75f, 0.1f, 0.1f},
                                                              {0.1f, 0.2f, 0.7f},
                                                              {0.85f, 0.85f, 0.85f},
                                                              {0.1f, 0.1f, 0.1f},
                                                              {0.8f, 0.65f, 0.1f},
                                                              {0.3f, 0.55f, 0.3f}}};

std::array<float, 3> ground_color(Ground g) {
  switch (g) {
    case Ground::road: return {0.35f, 0.35f, 0.37f};
    case Ground::marking: return {0.92f, 0.92f, 0.86f};
    case Ground::sidewalk: return {0.62f, 0.6f, 0.56f};
    default: return {0.27f, 0.45f, 0.2f};
  }
}

std::uint8_t ground_semantic(Ground g) {
  switch (g) {
    case Ground::road: return kRoad;
    case Ground::marking: return kMarking;
    case Ground::sidewalk: return kSidewalk;
    default: return kUnlabeled;
  }
}

float ground_intensity(Ground g) {
  switch (g) {
    case Ground::road: return 0.3f;
    case Ground::marking: return 0.9f;
    case Ground::sidewalk: return 0.45f;
    default: return 0.15f;
  }
}

std::vector<Solid> solids_in_ego_frame(const SceneSpec& spec) {
  std::vector<Solid> out;
  auto to_ego = [&](geometry::Box b) {
    auto [x, y] = world_to_ego(spec.ego, b.x, b.y);
    b.x = x;
    b.y = y;
    b.yaw -= spec.ego.heading;
    return b;
  };
  for (const auto& v : spec.vehicles) {
    out.push_back({to_ego(actor_box(spec, v)), 0.0, v.height, kVehicle, kVehiclePalette[v.color % kVehiclePalette.size()]});
  }
  for (const auto& p : spec.pedestrians) {
    out.push_back({to_ego(actor_box(spec, p)), 0.0, p.height, kPedestrian, {0.8f, 0.35f, 0.3f}});
  }
  if (spec.light.present) {
    const auto pole = route_point(spec, spec.light.s, spec.light.d);
    geometry::Box b{pole.x, pole.y, 0.3, 0.3, pole.heading};
    out.push_back({to_ego(b), 0.0, 3.2, kUnlabeled, {0.3f, 0.3f, 0.3f}});
    b.length = b.width = 0.5;
    const std::array<float, 3> lamp = spec.light.red ? std::array<float, 3>{1.0f, 0.1f, 0.1f}
                                                      : std::array<float, 3>{0.1f, 0.95f, 0.25f};
    out.push_back({to_ego(b), 3.2, 4.0, spec.light.red ? kRedLight : kUnlabeled, lamp});
  }
  return out;
}

// Slab test of the ray o + t * dir against a solid. Returns the entry t and the hit axis.
bool ray_solid(const Solid& s, const double o[3], const double dir[3], double& t_hit, int& axis) {
  const double c = std::cos(s.box.yaw), sn = std::sin(s.box.yaw);
  const double px = o[0] - s.box.x, py = o[1] - s.box.y;
  const double lo[3] = {c * px + sn * py, -sn * px + c * py, o[2]};
  const double ld[3] = {c * dir[0] + sn * dir[1], -sn * dir[0] + c * dir[1], dir[2]};
  const double mn[3] = {-s.box.length / 2, -s.box.width / 2, s.z0};
  const double mx[3] = {s.box.length / 2, s.box.width / 2, s.z1};
  double t0 = 0.0, t1 = kInf;
  int ax = -1;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(ld[k]) < 1e-15) {
      if (lo[k] < mn[k] || lo[k] > mx[k]) return false;
      continue;
    }
    double a = (mn[k] - lo[k]) / ld[k], b = (mx[k] - lo[k]) / ld[k];
    if (a > b) std::swap(a, b);
    if (a > t0) {
      t0 = a;
      ax = k;
    }
    t1 = std::min(t1, b);
    if (t0 > t1) return false;
  }
  if (ax < 0) return false;  // camera inside the solid
  t_hit = t0;
  axis = ax;
  return true;
}

SceneSample render(const SceneSpec& spec, const SensorSetup& setup) {
  SceneSample out;
  out.image_h = setup.image_h;
  out.image_w = setup.image_w;
  out.lidar_res = setup.lidar_res;
  out.bev_res = setup.bev_seg_res;
  out.meters_per_pixel = setup.meters_per_pixel;
  const auto solids = solids_in_ego_frame(spec);

  // Camera, depth and semantics by ray casting.
  const auto cam = geometry::CameraModel::make(setup.fov_deg, setup.image_w, setup.image_h, setup.camera_height_m);
  const double f = cam.focal_px();
  const std::size_t h = setup.image_h, w = setup.image_w, hw = h * w;
  out.camera.assign(3 * hw, 0.0f);
  out.depth.assign(hw, static_cast<float>(setup.max_depth_m));
  out.semantic.assign(hw, kUnlabeled);
  Rng noise_rng = Rng(spec.seed).split(0xca3e);
  const double o[3] = {0.0, 0.0, setup.camera_height_m};
  for (std::size_t v = 0; v < h; ++v) {
    for (std::size_t u = 0; u < w; ++u) {
      const double dir[3] = {1.0, (double(u) + 0.5 - cam.cx()) / f, -(double(v) + 0.5 - cam.cy()) / f};
      const double norm = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
      double best = kInf;
      std::array<float, 3> color = {0.55f, 0.7f, 0.92f};
      std::uint8_t sem = kUnlabeled;
      if (dir[2] < 0.0) {
        best = -o[2] / dir[2];
        const auto [wx, wy] = ego_to_world(spec.ego, best * dir[0], best * dir[1]);
        const Ground g = ground_at(spec, wx, wy);
        color = ground_color(g);
        sem = ground_semantic(g);
      }
      for (const auto& s : solids) {
        double t;
        int axis;
        if (ray_solid(s, o, dir, t, axis) && t < best) {
          best = t;
          const float shade = axis == 0 ? 1.0f : axis == 1 ? 0.75f : 1.1f;
          color = {s.color[0] * shade, s.color[1] * shade, s.color[2] * shade};
          sem = s.sem;
        }
      }
      const std::size_t p = v * w + u;
      if (std::isfinite(best)) out.depth[p] = static_cast<float>(std::min(best * norm, setup.max_depth_m));
      out.semantic[p] = sem;
      for (std::size_t k = 0; k < 3; ++k) {
        double c = color[k] * spec.brightness;
        if (spec.noise > 0) c += spec.noise * noise_rng.normal();
        out.camera[k * hw + p] = static_cast<float>(std::clamp(c, 0.0, 1.0));
      }
    }
  }

  // LiDAR raster: height-slice occupancy plus a return-intensity plane.
  const auto frame = setup.lidar_frame();
  const std::size_t r = setup.lidar_res, rr = r * r;
  out.lidar.assign((kLidarSlices + 1) * rr, 0.0f);
  const double sub = setup.meters_per_pixel / 3.0;
  for (std::size_t row = 0; row < r; ++row) {
    for (std::size_t col = 0; col < r; ++col) {
      const std::size_t p = row * r + col;
      const auto [x, y] = frame.pixel_to_meters(double(row), double(col));
      const auto [wx, wy] = ego_to_world(spec.ego, x, y);
      const Ground g = ground_at(spec, wx, wy);
      out.lidar[p] = 1.0f;
      if (g == Ground::sidewalk) out.lidar[rr + p] = 1.0f;
      float intensity = 0.0f;
      for (int i = -1; i <= 1; ++i) {
        for (int j = -1; j <= 1; ++j) {
          const auto [sx, sy] = ego_to_world(spec.ego, x + i * sub, y + j * sub);
          intensity += ground_intensity(ground_at(spec, sx, sy));
        }
      }
      float density = intensity / 9.0f;
      for (const auto& s : solids) {
        if (!geometry::box_contains(s.box, x, y)) continue;
        const auto k0 = static_cast<std::size_t>(std::floor(s.z0 / kSliceHeight));
        const auto k1 = std::min(kLidarSlices, static_cast<std::size_t>(std::ceil(s.z1 / kSliceHeight)));
        for (std::size_t k = k0; k < k1; ++k) out.lidar[k * rr + p] = 1.0f;
        density = 1.0f;
      }
      out.lidar[kLidarSlices * rr + p] = density;
    }
  }

  // BEV segmentation: any marking coverage wins, otherwise the center sample decides.
  const auto seg = setup.seg_frame();
  const std::size_t a = setup.bev_seg_res;
  out.bev_seg.assign(a * a, 2);
  for (std::size_t row = 0; row < a; ++row) {
    for (std::size_t col = 0; col < a; ++col) {
      const auto [x, y] = seg.pixel_to_meters(double(row), double(col));
      bool marking = false;
      for (int i = 0; i < 4 && !marking; ++i) {
        for (int j = 0; j < 4 && !marking; ++j) {
          const double ox = ((i + 0.5) / 4.0 - 0.5) * seg.meters_per_pixel;
          const double oy = ((j + 0.5) / 4.0 - 0.5) * seg.meters_per_pixel;
          const auto [wx, wy] = ego_to_world(spec.ego, x + ox, y + oy);
          marking = ground_at(spec, wx, wy) == Ground::marking;
        }
      }
      const auto [wx, wy] = ego_to_world(spec.ego, x, y);
      const Ground g = ground_at(spec, wx, wy);
      out.bev_seg[row * a + col] = marking ? 1 : (g == Ground::road ? 0 : 2);
    }
  }

  for (const auto& s : solids) {
    if (s.sem == kVehicle || s.sem == kPedestrian) out.boxes.push_back(s.box);
  }
  out.speed = spec.ego_speed_mps;
  return out;
}

}  // namespace

Topology parse_topology(const std::string& s) {
  if (s == "straight") return Topology::straight;
  if (s == "curve") return Topology::curve;
  if (s == "intersection") return Topology::intersection;
  throw SceneError("unknown topology '" + s + "' (expected straight, curve or intersection)");
}

std::string to_string(Topology t) {
  switch (t) {
    case Topology::straight: return "straight";
    case Topology::curve: return "curve";
    default: return "intersection";
  }
}

TopologyMix TopologyMix::parse(const std::string& text) {
  TopologyMix mix;
  for (auto& [k, v] : mix.weights) v = 0.0;
  std::stringstream ss(text);
  std::string item;
  double total = 0.0;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    const std::string key = item.substr(0, eq);
    double w = 1.0;
    if (eq != std::string::npos) {
      try {
        w = std::stod(item.substr(eq + 1));
      } catch (const std::exception&) {
        throw SceneError("topology mix: bad weight in '" + item + "'");
      }
    }
    if (!(w >= 0.0)) throw SceneError("topology mix: negative weight for '" + key + "'");
    mix.weights[parse_topology(key)] = w;
    total += w;
  }
  if (!(total > 0.0)) throw SceneError("topology mix: all weights are zero");
  return mix;
}

RoutePoint route_point(const SceneSpec& spec, double s, double d) {
  if (spec.topology != Topology::curve || s < 0.0) return {s, d, 0.0};
  const double radius = std::abs(spec.curve_radius_m);
  const double k = spec.curve_radius_m > 0 ? 1.0 : -1.0;
  const double theta = s / radius;
  const double rho = radius - k * d;
  return {rho * std::sin(theta), k * radius - k * rho * std::cos(theta), k * theta};
}

std::pair<double, double> route_project(const SceneSpec& spec, double x, double y) {
  if (spec.topology != Topology::curve || x < 0.0) return {x, y};
  const double radius = std::abs(spec.curve_radius_m);
  const double k = spec.curve_radius_m > 0 ? 1.0 : -1.0;
  const double vy = y - k * radius;
  const double theta = std::atan2(x, -k * vy);
  const double rho = std::hypot(x, vy);
  return {radius * theta, k * (radius - rho)};
}

bool on_road(const SceneSpec& spec, double s, double d) {
  if (d >= road_left() && d < road_right()) return true;
  return spec.topology == Topology::intersection && std::abs(s - spec.crossing_s_m) < kLaneWidth;
}

Ground ground_at(const SceneSpec& spec, double x, double y) {
  const auto [s, d] = route_project(spec, x, y);
  const double half = kMarkingWidth / 2.0;
  if (spec.topology == Topology::intersection) {
    const double ds = s - spec.crossing_s_m;
    if (std::abs(ds) < kLaneWidth) {
      if (std::abs(ds) < half && pos_fmod(d, kDashPeriod) < kDashOn) return Ground::marking;
      return Ground::road;
    }
    const bool main_road = d >= road_left() && d < road_right();
    if (!main_road && std::abs(ds) < kLaneWidth + kSidewalkWidth) return Ground::sidewalk;
    if (spec.light.present && s >= spec.light.stop_s - 0.4 && s < spec.light.stop_s && d >= -kLaneWidth / 2 &&
        d < kLaneWidth / 2) {
      return Ground::marking;
    }
  }
  if (d >= road_left() && d < road_right()) {
    if (std::abs(d - road_right()) < half || std::abs(d - road_left()) < half) return Ground::marking;
    if (std::abs(d + kLaneWidth / 2) < half && pos_fmod(s, kDashPeriod) < kDashOn) return Ground::marking;
    return Ground::road;
  }
  if ((d >= road_right() && d < road_right() + kSidewalkWidth) || (d < road_left() && d >= road_left() - kSidewalkWidth)) {
    return Ground::sidewalk;
  }
  return Ground::other;
}

geometry::Box actor_box(const SceneSpec& spec, const Actor& a) {
  const auto p = route_point(spec, a.s, a.d);
  return {p.x, p.y, a.length, a.width, p.heading + (a.oncoming ? std::numbers::pi : 0.0)};
}

std::pair<double, double> world_to_ego(const EgoPose& pose, double x, double y) {
  const double dx = x - pose.x, dy = y - pose.y;
  const double c = std::cos(pose.heading), s = std::sin(pose.heading);
  return {c * dx + s * dy, -s * dx + c * dy};
}

std::pair<double, double> ego_to_world(const EgoPose& pose, double x, double y) {
  const double c = std::cos(pose.heading), s = std::sin(pose.heading);
  return {pose.x + c * x - s * y, pose.y + s * x + c * y};
}

double cruise_speed(const SceneSpec& spec) {
  switch (spec.topology) {
    case Topology::intersection: return 4.5;
    case Topology::curve: return std::min(6.0, std::sqrt(1.0 * std::abs(spec.curve_radius_m)));
    default: return 6.0;
  }
}

SceneSpec random_spec(std::uint64_t seed, const TopologyMix& mix, const SensorSetup& setup) {
  Rng rng = Rng(seed).split(0x5ce7e);
  SceneSpec spec;
  spec.seed = seed;
  double total = 0.0;
  for (const auto& [t, w] : mix.weights) total += w;
  double pick = rng.uniform() * total;
  for (const auto& [t, w] : mix.weights) {
    if (w <= 0.0) continue;
    spec.topology = t;
    if (pick < w) break;
    pick -= w;
  }
  if (spec.topology == Topology::curve) {
    spec.curve_radius_m = rng.uniform(25.0, 60.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  }
  if (spec.topology == Topology::intersection) {
    spec.crossing_s_m = rng.uniform(14.0, 26.0);
    spec.light.present = true;
    spec.light.red = rng.uniform() < 0.5;
    spec.light.stop_s = spec.crossing_s_m - kLaneWidth - 0.5;
    spec.light.s = spec.light.stop_s - 0.5;
    spec.light.d = road_right() + 1.2;
  }
  spec.brightness = rng.uniform(0.7, 1.2);
  spec.noise = rng.uniform(0.0, 0.03);
  spec.ego_speed_mps = cruise_speed(spec);
  const auto start = route_point(spec, 0.0, rng.uniform(-0.4, 0.4));
  spec.ego = {start.x, start.y, start.heading + rng.uniform(-0.08, 0.08)};

  const auto frame = setup.lidar_frame();
  auto visible = [&](const Actor& a) {
    const auto b = actor_box(spec, a);
    const auto [x, y] = world_to_ego(spec.ego, b.x, b.y);
    return geometry::meters_to_pixels(x, y, frame).in_frame;
  };
  const std::size_t n_vehicles = rng.below(5);
  for (std::size_t i = 0; i < n_vehicles; ++i) {
    Actor v;
    v.oncoming = rng.uniform() < 0.4;
    v.d = (v.oncoming ? -kLaneWidth : 0.0) + rng.uniform(-0.2, 0.2);
    v.s = rng.uniform(v.oncoming ? 5.0 : 9.0, frame.forward_extent_m() - 2.0);
    v.length = rng.uniform(3.8, 5.0);
    v.width = rng.uniform(1.7, 2.1);
    v.height = rng.uniform(1.4, 1.9);
    v.speed = rng.uniform(0.0, 6.0);
    v.color = static_cast<std::uint32_t>(rng.below(kVehiclePalette.size()));
    bool clear = visible(v);
    for (const auto& o : spec.vehicles) {
      if (std::abs(o.d - v.d) < kLaneWidth / 2 && std::abs(o.s - v.s) < 7.0) clear = false;
    }
    if (spec.topology == Topology::intersection && std::abs(v.s - spec.crossing_s_m) < kLaneWidth + 3.0) clear = false;
    if (clear) spec.vehicles.push_back(v);
  }
  const std::size_t n_peds = rng.below(3);
  for (std::size_t i = 0; i < n_peds; ++i) {
    Actor p;
    p.length = p.width = 0.6;
    p.height = 1.75;
    p.s = rng.uniform(6.0, frame.forward_extent_m() - 2.0);
    if (rng.uniform() < 0.2) {
      p.d = rng.uniform(road_left() + 0.5, road_right() - 0.5);
    } else if (rng.uniform() < 0.5) {
      p.d = rng.uniform(road_right() + 0.5, road_right() + kSidewalkWidth - 0.5);
    } else {
      p.d = rng.uniform(road_left() - kSidewalkWidth + 0.5, road_left() - 0.5);
    }
    bool clear = visible(p);
    for (const auto& o : spec.vehicles) {
      if (std::abs(o.d - p.d) < 2.0 && std::abs(o.s - p.s) < 4.0) clear = false;
    }
    if (spec.light.present && std::abs(p.s - spec.light.s) < 1.5 && std::abs(p.d - spec.light.d) < 1.5) clear = false;
    if (clear) spec.pedestrians.push_back(p);
  }
  return spec;
}

void validate_spec(const SceneSpec& spec, const SensorSetup& setup) {
  const auto frame = setup.lidar_frame();
  auto check_frame = [&](const char* what, std::size_t i, double s, double d) {
    const auto p = route_point(spec, s, d);
    const auto [x, y] = world_to_ego(spec.ego, p.x, p.y);
    if (!geometry::meters_to_pixels(x, y, frame).in_frame) {
      throw SceneError(std::string(what) + " " + std::to_string(i) + " lies outside the BEV extent");
    }
  };
  for (std::size_t i = 0; i < spec.vehicles.size(); ++i) {
    const auto& v = spec.vehicles[i];
    if (!on_road(spec, v.s, v.d)) throw SceneError("vehicle " + std::to_string(i) + " is off the road");
    check_frame("vehicle", i, v.s, v.d);
  }
  for (std::size_t i = 0; i < spec.pedestrians.size(); ++i) {
    const auto& p = spec.pedestrians[i];
    const bool walkable = on_road(spec, p.s, p.d) ||
                          (p.d >= road_left() - kSidewalkWidth && p.d < road_right() + kSidewalkWidth);
    if (!walkable) throw SceneError("pedestrian " + std::to_string(i) + " is off road and sidewalk");
    check_frame("pedestrian", i, p.s, p.d);
  }
  if (spec.light.present) check_frame("traffic light", 0, spec.light.s, spec.light.d);
  const auto [s0, d0] = route_project(spec, spec.ego.x, spec.ego.y);
  if (!on_road(spec, s0, d0)) throw SceneError("ego starts off the road");
  if (!(spec.ego_speed_mps >= 0.0) || !(spec.brightness > 0.0) || !(spec.noise >= 0.0)) {
    throw SceneError("invalid ego speed, brightness or noise level");
  }
}

double expert_stop_s(const SceneSpec& spec, double s_ego) {
  double stop = kInf;
  if (spec.light.present && spec.light.red && s_ego < spec.light.stop_s) stop = spec.light.stop_s - 1.0;
  for (const auto& v : spec.vehicles) {
    if (!v.oncoming && std::abs(v.d) < kLaneWidth / 2 && v.s > s_ego) stop = std::min(stop, v.s - v.length / 2 - 4.0);
  }
  for (const auto& p : spec.pedestrians) {
    if (std::abs(p.d) < kLaneWidth / 2 + 0.5 && p.s > s_ego) stop = std::min(stop, p.s - 4.0);
  }
  return stop;
}

std::vector<double> expert_waypoints(const SceneSpec& spec, const SensorSetup& setup) {
  const auto [s0, d0] = route_project(spec, spec.ego.x, spec.ego.y);
  const double room = std::max(0.0, expert_stop_s(spec, s0) - s0);
  std::vector<double> out;
  for (std::size_t k = 1; k <= setup.waypoints; ++k) {
    const double s = s0 + std::min(spec.ego_speed_mps * setup.waypoint_dt_s * double(k), room);
    const auto p = route_point(spec, s, 0.0);
    const auto [x, y] = world_to_ego(spec.ego, p.x, p.y);
    out.push_back(x);
    out.push_back(y);
  }
  return out;
}

SceneSample render_view(const SceneSpec& spec, const SensorSetup& setup) { return render(spec, setup); }

SceneSample generate_scene(const SceneSpec& spec, const SensorSetup& setup) {
  validate_spec(spec, setup);
  auto out = render(spec, setup);
  out.waypoints = expert_waypoints(spec, setup);
  const auto [s0, d0] = route_project(spec, spec.ego.x, spec.ego.y);
  const auto goal = route_point(spec, s0 + spec.target_distance_m, 0.0);
  std::tie(out.target_x, out.target_y) = world_to_ego(spec.ego, goal.x, goal.y);
  return out;
}

bool SceneSample::operator==(const SceneSample& o) const {
  auto same_boxes = [](const std::vector<geometry::Box>& a, const std::vector<geometry::Box>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].x != b[i].x || a[i].y != b[i].y || a[i].length != b[i].length || a[i].width != b[i].width ||
          a[i].yaw != b[i].yaw) {
        return false;
      }
    }
    return true;
  };
  return image_h == o.image_h && image_w == o.image_w && lidar_res == o.lidar_res && bev_res == o.bev_res &&
         meters_per_pixel == o.meters_per_pixel && camera == o.camera && lidar == o.lidar && depth == o.depth &&
         semantic == o.semantic && bev_seg == o.bev_seg && same_boxes(boxes, o.boxes) && waypoints == o.waypoints &&
         target_x == o.target_x && target_y == o.target_y && speed == o.speed;
}

namespace {

template <typename V>
void rotate_planes(std::vector<V>& data, std::size_t planes, const geometry::BevFrame& frame, double angle, V fill) {
  const std::size_t r = frame.resolution, rr = r * r;
  std::vector<V> out(data.size(), fill);
  const double c = std::cos(angle), s = std::sin(angle);
  for (std::size_t row = 0; row < r; ++row) {
    for (std::size_t col = 0; col < r; ++col) {
      const auto [x, y] = frame.pixel_to_meters(double(row), double(col));
      // Output at q takes the input at R(-angle) q.
      const double sx = c * x + s * y, sy = -s * x + c * y;
      const auto p = geometry::meters_to_pixels(sx, sy, frame);
      if (!p.in_frame) continue;
      const std::size_t src = std::size_t(std::lround(p.row)) * r + std::size_t(std::lround(p.col));
      for (std::size_t k = 0; k < planes; ++k) out[k * rr + row * r + col] = data[k * rr + src];
    }
  }
  data.swap(out);
}

}  // namespace

SceneSample augment_rotation(const SceneSample& sample, double angle_deg, bool unrestricted) {
  if (!unrestricted && std::abs(angle_deg) > 20.0) {
    throw SceneError("augment_rotation: angle " + std::to_string(angle_deg) + " outside [-20, 20] degrees");
  }
  if (angle_deg == 0.0) return sample;
  SceneSample out = sample;
  const double a = angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(a), s = std::sin(a);
  auto rot = [&](double& x, double& y) {
    const double nx = c * x - s * y, ny = s * x + c * y;
    x = nx;
    y = ny;
  };
  const auto frame = geometry::BevFrame::make(sample.lidar_res, sample.meters_per_pixel);
  rotate_planes(out.lidar, kLidarSlices + 1, frame, a, 0.0f);
  rotate_planes(out.bev_seg, 1, frame.rescaled(sample.bev_res), a, std::uint8_t{2});
  for (auto& b : out.boxes) {
    rot(b.x, b.y);
    b.yaw += a;
  }
  for (std::size_t i = 0; i + 1 < out.waypoints.size(); i += 2) rot(out.waypoints[i], out.waypoints[i + 1]);
  rot(out.target_x, out.target_y);
  return out;
}

}  // namespace mf::scenes
