#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mf/autodiff/optim.hpp"
#include "mf/control/control.hpp"
#include "mf/eval/metrics.hpp"
#include "mf/model/dims.hpp"
#include "mf/model/model.hpp"
#include "mf/scenes/scene.hpp"
#include "mf/train/losses.hpp"

namespace mf::train {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class KeyType { real, integer, boolean, text, real_list };

struct ConfigKey {
  std::string name;
  KeyType type;
  std::string default_value;
  std::string help;
};

/// Flat key = value configuration. Every key has a default; unknown keys are rejected.
class RunConfig {
 public:
  RunConfig();

  static const std::vector<ConfigKey>& schema();

  void set(const std::string& key, const std::string& value);
  /// Parses "key = value" lines; '#' starts a comment.
  void load_text(const std::string& text, const std::string& source = "<text>");
  void load_file(const std::string& path);
  /// MF_SEED overrides the seed key when set.
  void apply_env();

  const std::string& text(const std::string& key) const;
  double real(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  bool boolean(const std::string& key) const;
  std::vector<double> reals(const std::string& key) const;

  /// Full key table in schema order, one "key = value" per line.
  std::string dump() const;

 private:
  std::map<std::string, std::string> values_;
};

model::ModelDims dims_from(const RunConfig& c);
LossWeights weights_from(const RunConfig& c);
AdamWConfig optimizer_from(const RunConfig& c);
control::ControllerConfig controller_from(const RunConfig& c);
eval::PenaltyCoefficients penalties_from(const RunConfig& c);
scenes::SensorSetup sensors_from(const model::ModelDims& d);

}  // namespace mf::train
