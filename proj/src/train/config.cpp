#include "mf/train/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace mf::train {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_real(const std::string& v, double& out) {
  try {
    std::size_t pos = 0;
    out = std::stod(v, &pos);
    return pos == v.size();
  } catch (const std::exception&) {
    return false;
  }
}

bool parse_int(const std::string& v, std::int64_t& out) {
  try {
    std::size_t pos = 0;
    out = std::stoll(v, &pos);
    return pos == v.size();
  } catch (const std::exception&) {
    return false;
  }
}

std::vector<ConfigKey> build_schema() {
  using K = KeyType;
  std::vector<ConfigKey> s = {
      {"seed", K::integer, "0", "global seed (MF_SEED overrides)"},
      {"model.dims", K::text, "desk", "desk | paper | tiny"},
      {"mask_ratio", K::real, "0.75", "fraction of tokens hidden during pretraining"},
      {"recon_target", K::text, "sensor", "sensor | token"},
      {"optim.lr", K::real, "1e-4", "initial learning rate"},
      {"optim.weight_decay", K::real, "0.01", "AdamW decoupled weight decay"},
      {"optim.beta1", K::real, "0.9", ""},
      {"optim.beta2", K::real, "0.999", ""},
      {"optim.lr_drop_epoch", K::integer, "30", "learning rate is multiplied by lr_drop_factor after this epoch"},
      {"optim.lr_drop_factor", K::real, "0.1", ""},
      {"train.batch_size", K::integer, "1", "samples per optimizer step"},
      {"train.epochs", K::integer, "41", ""},
      {"train.max_steps", K::integer, "0", "stop after this many steps (0 = run all epochs)"},
      {"train.augment", K::boolean, "true", "random LiDAR/BEV rotation"},
      {"train.rotation_deg", K::real, "20", "rotation range for augmentation"},
      {"train.pretrain_aux", K::boolean, "true", "add auxiliary perception losses during pretraining"},
      {"train.checkpoint_every", K::integer, "100", "steps between checkpoints"},
      {"train.init_from", K::text, "", "checkpoint used to initialize training"},
      {"data.train", K::text, "data/train.mfds", ""},
      {"data.eval", K::text, "", "held-out dataset"},
      {"data.count", K::integer, "16", "samples written by gen-data"},
      {"data.topology_mix", K::text, "straight=1,curve=1,intersection=1", ""},
      {"out_dir", K::text, "runs", "directory for checkpoints and reports"},
      {"checkpoint", K::text, "", "checkpoint for eval and sweep-mask"},
      {"eval.policy", K::text, "model", "model | oracle"},
      {"eval.routes", K::integer, "4", "routes per evaluation"},
      {"eval.route_length", K::real, "40", "meters"},
      {"eval.seed", K::integer, "1000", "first scenario seed"},
      {"eval.max_steps", K::integer, "1200", "simulation steps per route"},
      {"eval.dt", K::real, "0.05", "simulation step (s)"},
      {"sweep.ratios", K::real_list, "0,0.25,0.5,0.75", ""},
      {"sweep.repeats", K::integer, "3", ""},
      {"grad.seeds", K::integer, "5", "seeds per grad-check case"},
      {"control.turn_kp", K::real, "1.25", ""},
      {"control.turn_ki", K::real, "0.75", ""},
      {"control.turn_kd", K::real, "0.3", ""},
      {"control.speed_kp", K::real, "5.0", ""},
      {"control.speed_ki", K::real, "0.5", ""},
      {"control.speed_kd", K::real, "1.0", ""},
      {"control.pid_window", K::integer, "20", ""},
      {"control.waypoint_dt", K::real, "0.5", "seconds between waypoints"},
      {"control.brake_speed", K::real, "0.4", ""},
      {"control.brake_margin", K::real, "1.0", ""},
      {"control.max_throttle", K::real, "0.75", ""},
      {"control.creep_window", K::integer, "100", ""},
      {"control.creep_threshold", K::real, "0.1", ""},
      {"control.creep_duration", K::integer, "25", ""},
      {"control.creep_speed", K::real, "4.0", ""},
      {"penalty.pedestrian", K::real, "0.5", ""},
      {"penalty.vehicle", K::real, "0.6", ""},
      {"penalty.static", K::real, "0.65", ""},
      {"penalty.red_light", K::real, "0.7", ""},
      {"penalty.stop_sign", K::real, "0.8", ""},
      {"penalty.floor", K::real, "0", ""},
  };
  for (const auto& [name, w] : LossWeights{}.values) {
    std::ostringstream os;
    os << w;
    s.push_back({"weight." + name, K::real, os.str(), ""});
  }
  return s;
}

const ConfigKey* find_key(const std::string& key) {
  for (const auto& k : RunConfig::schema()) {
    if (k.name == key) return &k;
  }
  return nullptr;
}

}  // namespace

const std::vector<ConfigKey>& RunConfig::schema() {
  static const std::vector<ConfigKey> s = build_schema();
  return s;
}

RunConfig::RunConfig() {
  for (const auto& k : schema()) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const ConfigKey* k = find_key(key);
  if (!k) throw ConfigError("unknown config key '" + key + "'");
  const std::string value = trim(raw);
  double d;
  std::int64_t i;
  switch (k->type) {
    case KeyType::real:
      if (!parse_real(value, d)) throw ConfigError("config key '" + key + "' expects a number, got '" + value + "'");
      break;
    case KeyType::integer:
      if (!parse_int(value, i)) throw ConfigError("config key '" + key + "' expects an integer, got '" + value + "'");
      break;
    case KeyType::boolean:
      if (value != "true" && value != "false") throw ConfigError("config key '" + key + "' expects true or false");
      break;
    case KeyType::real_list: {
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (!parse_real(trim(item), d)) throw ConfigError("config key '" + key + "' has a bad list item '" + item + "'");
      }
      break;
    }
    case KeyType::text: break;
  }
  values_[key] = value;
}

void RunConfig::load_text(const std::string& text, const std::string& source) {
  std::istringstream is(text);
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(n) + ": expected key = value");
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  load_text(ss.str(), path);
}

void RunConfig::apply_env() {
  if (const char* s = std::getenv("MF_SEED")) set("seed", s);
}

const std::string& RunConfig::text(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::real(const std::string& key) const { return std::stod(text(key)); }
std::int64_t RunConfig::integer(const std::string& key) const { return std::stoll(text(key)); }
bool RunConfig::boolean(const std::string& key) const { return text(key) == "true"; }

std::vector<double> RunConfig::reals(const std::string& key) const {
  std::vector<double> out;
  std::stringstream ss(text(key));
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(trim(item)));
  return out;
}

std::string RunConfig::dump() const {
  std::ostringstream os;
  for (const auto& k : schema()) {
    os << k.name << " = " << values_.at(k.name);
    if (!k.help.empty()) os << "  # " << k.help;
    os << '\n';
  }
  return os.str();
}

model::ModelDims dims_from(const RunConfig& c) {
  const auto& name = c.text("model.dims");
  model::ModelDims d;
  if (name == "desk") {
    d = model::ModelDims::desk();
  } else if (name == "paper") {
    d = model::ModelDims::paper();
  } else if (name == "tiny") {
    d = model::ModelDims::tiny();
  } else {
    throw ConfigError("model.dims must be desk, paper or tiny, got '" + name + "'");
  }
  d.validate();
  return d;
}

LossWeights weights_from(const RunConfig& c) {
  LossWeights w;
  for (auto& [name, v] : w.values) w.set(name, c.real("weight." + name));
  return w;
}

AdamWConfig optimizer_from(const RunConfig& c) {
  AdamWConfig o;
  o.lr = c.real("optim.lr");
  o.weight_decay = c.real("optim.weight_decay");
  o.beta1 = c.real("optim.beta1");
  o.beta2 = c.real("optim.beta2");
  return o;
}

control::ControllerConfig controller_from(const RunConfig& c) {
  control::ControllerConfig k;
  k.turn = {c.real("control.turn_kp"), c.real("control.turn_ki"), c.real("control.turn_kd")};
  k.speed = {c.real("control.speed_kp"), c.real("control.speed_ki"), c.real("control.speed_kd")};
  k.pid_window = static_cast<std::size_t>(c.integer("control.pid_window"));
  k.waypoint_dt_s = c.real("control.waypoint_dt");
  k.brake_speed = c.real("control.brake_speed");
  k.brake_margin = c.real("control.brake_margin");
  k.max_throttle = c.real("control.max_throttle");
  k.creep_window = static_cast<std::size_t>(c.integer("control.creep_window"));
  k.creep_threshold_m = c.real("control.creep_threshold");
  k.creep_duration = static_cast<std::size_t>(c.integer("control.creep_duration"));
  k.creep_speed = c.real("control.creep_speed");
  return k;
}

eval::PenaltyCoefficients penalties_from(const RunConfig& c) {
  eval::PenaltyCoefficients p;
  for (const char* k : {"pedestrian", "vehicle", "static", "red_light", "stop_sign"}) {
    p.set(eval::parse_infraction(k), c.real(std::string("penalty.") + k));
  }
  p.floor = c.real("penalty.floor");
  return p;
}

scenes::SensorSetup sensors_from(const model::ModelDims& d) {
  scenes::SensorSetup s;
  s.image_h = d.image_h;
  s.image_w = d.image_w;
  s.fov_deg = d.fov_deg;
  s.lidar_res = d.lidar_res;
  s.meters_per_pixel = d.lidar_meters_per_pixel;
  s.bev_seg_res = d.bev_aux_res;
  s.waypoints = d.waypoints;
  s.max_depth_m = d.max_depth_m;
  return s;
}

}  // namespace mf::train
