#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "mf/model/heads.hpp"
#include "mf/scenes/dataset.hpp"

using namespace mf;
using namespace mf::scenes;

namespace {

SensorSetup paper_setup() {
  SensorSetup s;
  s.image_h = 160;
  s.image_w = 704;
  s.lidar_res = 256;
  s.meters_per_pixel = 1.0 / 8.0;
  s.bev_seg_res = 64;
  return s;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("mf_scenes_" + name)).string();
}

}  // namespace

TEST(Scenes, Deterministic) {
  const auto spec = random_spec(11);
  EXPECT_TRUE(generate_scene(spec) == generate_scene(spec));
  EXPECT_FALSE(generate_scene(random_spec(12)) == generate_scene(spec));
}

TEST(Scenes, EmptySceneLabels) {
  SceneSpec spec;
  const auto s = generate_scene(spec);
  EXPECT_TRUE(s.boxes.empty());
  for (auto c : s.semantic) EXPECT_TRUE(c == 0 || c == 2 || c == 5 || c == 6) << int(c);
  std::set<std::uint8_t> seen(s.semantic.begin(), s.semantic.end());
  EXPECT_TRUE(seen.count(2));
  EXPECT_EQ(s.camera.size(), 3u * 80 * 176);
  EXPECT_EQ(s.lidar.size(), 33u * 64 * 64);
  EXPECT_EQ(s.bev_seg.size(), 32u * 32);
  EXPECT_EQ(s.waypoints.size(), 8u);
}

TEST(Scenes, VehicleFootprintAtEightPixelsPerMeter) {
  SceneSpec spec;
  Actor v;
  v.s = 8.0;
  v.length = 4.0;
  v.width = 2.0;
  spec.vehicles.push_back(v);
  const auto setup = paper_setup();
  const auto s = generate_scene(spec, setup);
  const std::size_t r = 256, rr = r * r;
  // Occupancy at mid-height slice 4 (0.5 - 0.625 m) is the footprint.
  std::size_t min_row = r, max_row = 0, min_col = r, max_col = 0, count = 0;
  for (std::size_t row = 0; row < r; ++row)
    for (std::size_t col = 0; col < r; ++col)
      if (s.lidar[4 * rr + row * r + col] > 0) {
        min_row = std::min(min_row, row);
        max_row = std::max(max_row, row);
        min_col = std::min(min_col, col);
        max_col = std::max(max_col, col);
        ++count;
      }
  EXPECT_EQ(max_col - min_col + 1, 16u);
  EXPECT_EQ(max_row - min_row + 1, 32u);
  EXPECT_EQ(count, 16u * 32u);
  // Half-open footprints put the pixel-center centroid half a pixel behind and left of the box center.
  EXPECT_DOUBLE_EQ((min_col + max_col) / 2.0, 127.5);
  EXPECT_DOUBLE_EQ(255.0 - (min_row + max_row) / 2.0, 63.5);
  ASSERT_EQ(s.boxes.size(), 1u);
  const auto p = geometry::meters_to_pixels(s.boxes[0].x, s.boxes[0].y, setup.lidar_frame());
  EXPECT_DOUBLE_EQ(255.0 - p.row, 64.0);
  EXPECT_DOUBLE_EQ(p.col, 128.0);
}

TEST(Scenes, AllTopologiesAndLightStates) {
  std::set<Topology> topo;
  std::set<bool> lights;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto spec = random_spec(seed);
    EXPECT_NO_THROW(validate_spec(spec, {})) << seed;
    topo.insert(spec.topology);
    if (spec.light.present) lights.insert(spec.light.red);
  }
  EXPECT_EQ(topo.size(), 3u);
  EXPECT_EQ(lights.size(), 2u);
}

TEST(Scenes, OffRoadActorRejected) {
  SceneSpec spec;
  Actor v;
  v.s = 10;
  v.d = 12.0;
  spec.vehicles.push_back(v);
  EXPECT_THROW(generate_scene(spec), SceneError);
  spec.vehicles[0].d = 0;
  spec.vehicles[0].s = 80;
  EXPECT_THROW(generate_scene(spec), SceneError);
}

TEST(Scenes, RouteProjectionInverts) {
  for (double radius : {30.0, -45.0}) {
    SceneSpec spec;
    spec.topology = Topology::curve;
    spec.curve_radius_m = radius;
    for (double s : {0.0, 5.0, 17.5, 30.0})
      for (double d : {-4.0, 0.0, 1.2}) {
        const auto p = route_point(spec, s, d);
        const auto [s2, d2] = route_project(spec, p.x, p.y);
        EXPECT_NEAR(s2, s, 1e-9);
        EXPECT_NEAR(d2, d, 1e-9);
      }
  }
}

TEST(Scenes, VehiclePixelsProjectOntoFootprints) {
  const SensorSetup setup;
  const auto cam = geometry::CameraModel::make(setup.fov_deg, setup.image_w, setup.image_h, setup.camera_height_m);
  const auto frame = setup.lidar_frame();
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto spec = random_spec(seed);
    const auto s = generate_scene(spec, setup);
    for (std::size_t v = 0; v < setup.image_h; ++v) {
      for (std::size_t u = 0; u < setup.image_w; ++u) {
        const std::size_t p = v * setup.image_w + u;
        if (s.semantic[p] != 1 || s.depth[p] >= setup.max_depth_m) continue;
        const double dir[3] = {1.0, (u + 0.5 - cam.cx()) / cam.focal_px(), -(v + 0.5 - cam.cy()) / cam.focal_px()};
        const double n = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
        const double x = s.depth[p] * dir[0] / n, y = s.depth[p] * dir[1] / n;
        bool near = false;
        for (const auto& b : s.boxes) {
          auto grown = b;
          grown.length += 2 * frame.meters_per_pixel + 1e-3;
          grown.width += 2 * frame.meters_per_pixel + 1e-3;
          near = near || geometry::box_contains(grown, x, y);
        }
        ASSERT_TRUE(near) << "seed " << seed << " pixel " << v << "," << u;
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 500u);
}

TEST(Scenes, DepthMatchesAnalyticDistance) {
  SceneSpec spec;
  Actor v;
  v.s = 12.0;
  v.length = 4.0;
  spec.vehicles.push_back(v);
  const SensorSetup setup;
  const auto s = generate_scene(spec, setup);
  // Rear face at 10 m, seen through the pixel just left of the image center, a few rows below the horizon.
  const auto cam = geometry::CameraModel::make(setup.fov_deg, setup.image_w, setup.image_h, setup.camera_height_m);
  const std::size_t u = setup.image_w / 2 - 1, row = setup.image_h / 2 + 4;
  const std::size_t p = row * setup.image_w + u;
  ASSERT_EQ(s.semantic[p], 1);
  const double a = (u + 0.5 - cam.cx()) / cam.focal_px(), b = (row + 0.5 - cam.cy()) / cam.focal_px();
  const double analytic = 10.0 * std::sqrt(1 + a * a + b * b);
  EXPECT_NEAR(s.depth[p], analytic, 0.02 * analytic);
  EXPECT_NEAR(s.depth[p], 10.0, 0.2);
}

TEST(Scenes, DetectionCentersMatchFootprints) {
  const SensorSetup setup;
  const auto frame = setup.lidar_frame();
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto s = generate_scene(random_spec(seed), setup);
    const auto t = model::encode_detection_targets(s.boxes, frame);
    const std::size_t r = frame.resolution, rr = r * r;
    for (const auto& b : s.boxes) {
      double sr = 0, sc = 0, n = 0;
      for (std::size_t row = 0; row < r; ++row)
        for (std::size_t col = 0; col < r; ++col) {
          const auto [x, y] = frame.pixel_to_meters(row, col);
          if (geometry::box_contains(b, x, y) && s.lidar[4 * rr + row * r + col] > 0) {
            sr += row;
            sc += col;
            n += 1;
          }
        }
      if (n < 4) continue;
      const auto p = geometry::meters_to_pixels(b.x, b.y, frame);
      const std::size_t idx = std::size_t(std::lround(p.row)) * r + std::size_t(std::lround(p.col));
      EXPECT_EQ(t.center[idx], 1);
      EXPECT_LE(std::hypot(sr / n - std::lround(p.row), sc / n - std::lround(p.col)), 1.0) << seed;
    }
  }
}

TEST(Scenes, ExpertStopsForRedLight) {
  SceneSpec spec;
  spec.topology = Topology::intersection;
  spec.crossing_s_m = 14.0;
  spec.light = {true, true, 9.5, 3.0, 10.0};
  spec.ego_speed_mps = 8.0;
  const auto s = generate_scene(spec);
  EXPECT_NEAR(s.waypoints[6], 9.0, 1e-12);
  spec.light.red = false;
  const auto g = generate_scene(spec);
  EXPECT_NEAR(g.waypoints[6], 16.0, 1e-12);
  std::set<std::uint8_t> seen(s.semantic.begin(), s.semantic.end());
  EXPECT_TRUE(seen.count(3));
}

TEST(Rotation, IdentityAndAlgebra) {
  const auto s = generate_scene(random_spec(3));
  EXPECT_TRUE(augment_rotation(s, 0.0) == s);
  EXPECT_THROW(augment_rotation(s, 25.0), SceneError);
  auto t = s;
  t.waypoints = {1.0, 0.0};
  auto r = augment_rotation(t, 90.0, true);
  EXPECT_NEAR(r.waypoints[0], 0.0, 1e-12);
  EXPECT_NEAR(r.waypoints[1], 1.0, 1e-12);
  EXPECT_EQ(r.camera, s.camera);
  EXPECT_EQ(r.semantic, s.semantic);
}

TEST(Rotation, RoundTripWithinOnePixel) {
  const auto s = generate_scene(random_spec(5));
  const auto back = augment_rotation(augment_rotation(s, 20.0), -20.0);
  const std::size_t r = s.lidar_res, rr = r * r;
  const auto frame = geometry::BevFrame::make(r, s.meters_per_pixel);
  std::size_t compared = 0;
  for (std::size_t row = 1; row + 1 < r; ++row) {
    for (std::size_t col = 1; col + 1 < r; ++col) {
      const auto [x, y] = frame.pixel_to_meters(row, col);
      // Keep to the region that stays inside the frame under both rotations.
      if (std::hypot(x, y) > 14.0 || x < std::abs(y) * 0.4 + 1.0) continue;
      for (std::size_t k = 0; k < 33; ++k) {
        const float v = back.lidar[k * rr + row * r + col];
        bool found = false;
        for (int dr = -1; dr <= 1 && !found; ++dr)
          for (int dc = -1; dc <= 1 && !found; ++dc)
            found = s.lidar[k * rr + (row + dr) * r + (col + dc)] == v;
        ASSERT_TRUE(found) << row << "," << col << " ch " << k;
      }
      ++compared;
    }
  }
  EXPECT_GT(compared, 500u);
  ASSERT_EQ(back.boxes.size(), s.boxes.size());
  for (std::size_t i = 0; i < s.boxes.size(); ++i) {
    EXPECT_NEAR(back.boxes[i].x, s.boxes[i].x, 1e-9);
    EXPECT_NEAR(back.boxes[i].y, s.boxes[i].y, 1e-9);
  }
  for (std::size_t i = 0; i < s.waypoints.size(); ++i) EXPECT_NEAR(back.waypoints[i], s.waypoints[i], 1e-9);
}

TEST(Dataset, RoundTripAndCount) {
  std::vector<SceneSample> samples;
  for (std::uint64_t i = 0; i < 10; ++i) samples.push_back(generate_scene(random_spec(i)));
  const auto path = temp_path("ten.mfds");
  write_dataset(samples, path);
  const auto back = read_dataset(path);
  ASSERT_EQ(back.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_TRUE(back[i] == samples[i]);
  std::ifstream is(path, std::ios::binary);
  char head[16];
  is.read(head, 16);
  std::uint64_t count;
  std::memcpy(&count, head + 8, 8);
  EXPECT_EQ(count, 10u);
  std::filesystem::remove(path);
}

TEST(Dataset, TruncatedFileNamesOffset) {
  const auto path = temp_path("trunc.mfds");
  write_dataset({generate_scene(random_spec(1))}, path);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 100);
  try {
    read_dataset(path);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
    EXPECT_GT(e.offset(), 16u);
  }
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE0000";
  }
  EXPECT_THROW(read_dataset(path), FormatError);
  std::filesystem::remove(path);
}

TEST(Dataset, TopologyMixParsing) {
  auto mix = TopologyMix::parse("straight=2,curve=0");
  EXPECT_EQ(mix.weights[Topology::straight], 2.0);
  EXPECT_EQ(mix.weights[Topology::intersection], 0.0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) EXPECT_EQ(random_spec(seed, mix).topology, Topology::straight);
  EXPECT_THROW(TopologyMix::parse("roundabout=1"), SceneError);
  EXPECT_THROW(TopologyMix::parse("straight=0"), SceneError);
}
