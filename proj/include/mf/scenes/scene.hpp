#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mf/geometry/bev.hpp"

namespace mf::scenes {

class SceneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Topology { straight, curve, intersection };

Topology parse_topology(const std::string& s);
std::string to_string(Topology t);

/// Relative weights per topology, parsed from "straight=1,curve=1,intersection=1".
struct TopologyMix {
  std::map<Topology, double> weights = {{Topology::straight, 1.0}, {Topology::curve, 1.0}, {Topology::intersection, 1.0}};
  static TopologyMix parse(const std::string& text);
};

inline constexpr double kLaneWidth = 3.5;
inline constexpr double kSidewalkWidth = 2.5;
inline constexpr double kMarkingWidth = 0.3;

/// Actor placed in route coordinates: s along the ego lane center, d lateral (right positive).
struct Actor {
  double s = 0.0, d = 0.0;
  double length = 4.5, width = 2.0, height = 1.6;
  double speed = 0.0;      // along the lane direction of travel
  bool oncoming = false;   // faces against the route
  std::uint32_t color = 0;
};

struct TrafficLight {
  bool present = false;
  bool red = false;
  double s = 0.0, d = 3.0;  // pole position
  double stop_s = 0.0;      // stop line
};

struct EgoPose {
  double x = 0.0, y = 0.0, heading = 0.0;  // world meters, heading from +x toward +y
};

struct SceneSpec {
  std::uint64_t seed = 0;
  Topology topology = Topology::straight;
  double curve_radius_m = 0.0;   // signed, positive turns right
  double crossing_s_m = 20.0;    // intersection center along the route
  std::vector<Actor> vehicles;
  std::vector<Actor> pedestrians;
  TrafficLight light;
  double brightness = 1.0;
  double noise = 0.0;
  EgoPose ego;
  double ego_speed_mps = 5.0;
  double target_distance_m = 30.0;
};

/// Sizes of the rendered arrays. Defaults match the desk model.
struct SensorSetup {
  std::size_t image_h = 80, image_w = 176;
  double fov_deg = 120.0;
  double camera_height_m = 2.0;
  std::size_t lidar_res = 64;
  double meters_per_pixel = 0.5;
  std::size_t bev_seg_res = 32;
  std::size_t waypoints = 4;
  double waypoint_dt_s = 0.5;
  double max_depth_m = 32.0;

  geometry::BevFrame lidar_frame() const { return geometry::BevFrame::make(lidar_res, meters_per_pixel); }
  geometry::BevFrame seg_frame() const { return lidar_frame().rescaled(bev_seg_res); }
};

inline constexpr std::size_t kLidarSlices = 32;
inline constexpr double kSliceHeight = 0.125;

struct SceneSample {
  std::size_t image_h = 0, image_w = 0, lidar_res = 0, bev_res = 0;
  double meters_per_pixel = 0.5;
  std::vector<float> camera;            // [3, H, W] in [0, 1]
  std::vector<float> lidar;             // [33, R, R]
  std::vector<float> depth;             // [H, W] meters, clipped to max depth
  std::vector<std::uint8_t> semantic;   // [H, W], index into the 7 semantic classes
  std::vector<std::uint8_t> bev_seg;    // [A, A]: 0 road, 1 lane marking, 2 others
  std::vector<geometry::Box> boxes;     // ego frame
  std::vector<double> waypoints;        // [T, 2] ego meters
  double target_x = 0.0, target_y = 0.0;
  double speed = 0.0;

  bool operator==(const SceneSample&) const;
};

struct RoutePoint {
  double x = 0.0, y = 0.0, heading = 0.0;
};

RoutePoint route_point(const SceneSpec& spec, double s, double d = 0.0);
/// World point -> (s, d).
std::pair<double, double> route_project(const SceneSpec& spec, double x, double y);

enum class Ground : std::uint8_t { other, road, marking, sidewalk };
Ground ground_at(const SceneSpec& spec, double x, double y);
bool on_road(const SceneSpec& spec, double s, double d);

/// World-frame footprint of an actor.
geometry::Box actor_box(const SceneSpec& spec, const Actor& a);
/// World <-> ego-frame transforms for the given pose.
std::pair<double, double> world_to_ego(const EgoPose& pose, double x, double y);
std::pair<double, double> ego_to_world(const EgoPose& pose, double x, double y);

/// Expert cruise speed, fixed by road layout: 6 m/s on open road, 4.5 m/s toward a junction,
/// and at most sqrt(1 m/s^2 * |radius|) in a curve.
double cruise_speed(const SceneSpec& spec);

/// Random but valid spec; actors outside the sensor extent are not placed.
SceneSpec random_spec(std::uint64_t seed, const TopologyMix& mix = {}, const SensorSetup& setup = {});

/// Throws SceneError when an actor is off its allowed surface or outside the BEV extent.
void validate_spec(const SceneSpec& spec, const SensorSetup& setup);

/// Renders sensors and labels from spec.ego.
SceneSample generate_scene(const SceneSpec& spec, const SensorSetup& setup = {});
/// Same rendering without validation or expert labels; used by the closed-loop harness.
SceneSample render_view(const SceneSpec& spec, const SensorSetup& setup);

/// Route distance at which the expert must have stopped, or +inf.
double expert_stop_s(const SceneSpec& spec, double s_ego);
/// Expert waypoints [T, 2] in the ego frame of spec.ego.
std::vector<double> expert_waypoints(const SceneSpec& spec, const SensorSetup& setup);

/// Rotates the BEV raster, BEV labels, boxes, waypoints and target about the ego.
/// |angle| <= 20 unless unrestricted (used by tests).
SceneSample augment_rotation(const SceneSample& sample, double angle_deg, bool unrestricted = false);

}  // namespace mf::scenes
