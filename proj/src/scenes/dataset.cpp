#include "mf/scenes/dataset.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace mf::scenes {

namespace {

const ArrayRecord& find(const std::map<std::string, const ArrayRecord*>& by_name, const std::string& name) {
  auto it = by_name.find(name);
  if (it == by_name.end()) throw std::runtime_error("dataset sample: missing record '" + name + "'");
  return *it->second;
}

}  // namespace

std::vector<ArrayRecord> sample_to_records(const SceneSample& s) {
  std::vector<double> boxes;
  for (const auto& b : s.boxes) boxes.insert(boxes.end(), {b.x, b.y, b.length, b.width, b.yaw});
  const std::size_t h = s.image_h, w = s.image_w, r = s.lidar_res, a = s.bev_res;
  return {ArrayRecord::from_f32("camera", {3, h, w}, s.camera),
          ArrayRecord::from_f32("lidar", {kLidarSlices + 1, r, r}, s.lidar),
          ArrayRecord::from_f32("depth", {h, w}, s.depth),
          ArrayRecord::from_u8("semantic", {h, w}, s.semantic),
          ArrayRecord::from_u8("bev_seg", {a, a}, s.bev_seg),
          ArrayRecord::from_f64("boxes", {s.boxes.size(), 5}, boxes),
          ArrayRecord::from_f64("waypoints", {s.waypoints.size() / 2, 2}, s.waypoints),
          ArrayRecord::from_f64("target", {2}, {s.target_x, s.target_y}),
          ArrayRecord::from_f64("speed", {1}, {s.speed}),
          ArrayRecord::from_f64("meters_per_pixel", {1}, {s.meters_per_pixel})};
}

SceneSample sample_from_records(const std::vector<ArrayRecord>& records) {
  std::map<std::string, const ArrayRecord*> by_name;
  for (const auto& r : records) by_name[r.name] = &r;
  SceneSample s;
  const auto& cam = find(by_name, "camera");
  const auto& lidar = find(by_name, "lidar");
  const auto& seg = find(by_name, "bev_seg");
  if (cam.extents.size() != 3 || lidar.extents.size() != 3 || seg.extents.size() != 2) {
    throw std::runtime_error("dataset sample: unexpected array rank");
  }
  s.image_h = cam.extents[1];
  s.image_w = cam.extents[2];
  s.lidar_res = lidar.extents[1];
  s.bev_res = seg.extents[0];
  s.camera = cam.as_f32();
  s.lidar = lidar.as_f32();
  s.depth = find(by_name, "depth").as_f32();
  s.semantic = find(by_name, "semantic").as_u8();
  s.bev_seg = seg.as_u8();
  const auto boxes = find(by_name, "boxes").as_f64();
  for (std::size_t i = 0; i + 4 < boxes.size(); i += 5) {
    s.boxes.push_back({boxes[i], boxes[i + 1], boxes[i + 2], boxes[i + 3], boxes[i + 4]});
  }
  s.waypoints = find(by_name, "waypoints").as_f64();
  const auto target = find(by_name, "target").as_f64();
  s.target_x = target.at(0);
  s.target_y = target.at(1);
  s.speed = find(by_name, "speed").as_f64().at(0);
  s.meters_per_pixel = find(by_name, "meters_per_pixel").as_f64().at(0);
  return s;
}

void write_record_sets(const std::vector<std::vector<ArrayRecord>>& sets, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  RecordWriter w(os);
  w.bytes("MFDS", 4);
  w.u32(kDatasetVersion);
  w.u64(sets.size());
  for (const auto& set : sets) {
    w.u32(static_cast<std::uint32_t>(set.size()));
    for (const auto& r : set) w.record(r);
  }
  if (!os.flush()) throw std::runtime_error("write failed for '" + path + "'");
}

std::vector<std::vector<ArrayRecord>> read_record_sets(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset '" + path + "'");
  RecordReader r(is);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, "MFDS", 4) != 0) throw FormatError("bad dataset magic", 0);
  const auto version = r.u32("version");
  if (version != kDatasetVersion) throw FormatError("unsupported dataset version " + std::to_string(version), 4);
  const auto count = r.u64("sample count");
  std::vector<std::vector<ArrayRecord>> sets;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto n = r.u32("record count");
    std::vector<ArrayRecord> set;
    for (std::uint32_t k = 0; k < n; ++k) set.push_back(r.record());
    sets.push_back(std::move(set));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after last sample", r.offset());
  return sets;
}

void write_dataset(const std::vector<SceneSample>& samples, const std::string& path) {
  std::vector<std::vector<ArrayRecord>> sets;
  for (const auto& s : samples) sets.push_back(sample_to_records(s));
  write_record_sets(sets, path);
}

std::vector<SceneSample> read_dataset(const std::string& path) {
  std::vector<SceneSample> out;
  for (const auto& set : read_record_sets(path)) out.push_back(sample_from_records(set));
  return out;
}

}  // namespace mf::scenes
