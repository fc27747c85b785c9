#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mf/autodiff/optim.hpp"
#include "mf/autodiff/records.hpp"
#include "mf/model/model.hpp"
#include "mf/scenes/scene.hpp"
#include "mf/train/config.hpp"
#include "mf/train/losses.hpp"

namespace mf::train {

/// Non-finite loss during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Phase { pretrain, train };

using LossParts = std::vector<std::pair<std::string, Tensorf>>;

Tensorf camera_tensor(const scenes::SceneSample& s);
Tensorf lidar_tensor(const scenes::SceneSample& s);

/// Depth, semantics, BEV segmentation, center heatmap, box regression and yaw bins.
LossParts perception_losses(const model::ImageAux<float>& image, const model::BevAux<float>& bev,
                            const scenes::SceneSample& s, const model::ModelDims& dims);
LossParts drive_losses(const model::DriveOutputs<float>& out, const scenes::SceneSample& s,
                       const model::ModelDims& dims);
LossParts pretrain_losses(const model::PretrainOutputs<float>& out, const scenes::SceneSample& s,
                          const model::ModelDims& dims, model::ReconTarget target, bool with_aux);

/// Mean squared reconstruction error of both sensors at one mask plan (no gradient).
double reconstruction_error(const model::Model<float>& m, const scenes::SceneSample& s, const model::MaskPlan& plan);

struct StepReport {
  std::int64_t step = 0;  // 1-based index of the step just taken
  std::map<std::string, double> parts;
  double total = 0.0;
  double lr = 0.0;
};

class Trainer {
 public:
  Trainer(Phase phase, const RunConfig& cfg, std::vector<scenes::SceneSample> data);

  model::Model<float>& model() { return *model_; }
  const model::Model<float>& model() const { return *model_; }
  std::int64_t steps_done() const { return optimizer_.steps_taken(); }
  std::int64_t steps_per_epoch() const;
  std::int64_t total_steps() const;
  double lr_at(std::int64_t step) const;

  StepReport step();

  /// Parameters, optimizer moments and step counter.
  void save(const std::string& path) const;
  void resume(const std::string& path);
  /// Copies parameters whose names exist in the checkpoint; shape mismatches throw listing the names.
  std::size_t init_from(const std::string& path);

 private:
  std::vector<std::size_t> batch_indices(std::int64_t step) const;

  Phase phase_;
  RunConfig cfg_;
  model::ModelDims dims_;
  LossWeights weights_;
  std::vector<scenes::SceneSample> data_;
  std::unique_ptr<model::Model<float>> model_;
  AdamW<float> optimizer_;
  double base_lr_;
};

/// Runs the configured number of steps, writing the per-step loss CSV and checkpoints.
/// On a non-finite loss, the last good checkpoint is kept and NumericError is thrown.
struct TrainSummary {
  std::vector<StepReport> history;
  std::string checkpoint;
};
TrainSummary run_training(Trainer& trainer, const std::string& csv_path, const std::string& checkpoint_path,
                          std::int64_t checkpoint_every);

/// Copies "param/<name>" records into the store. With require_all, every parameter must be present.
std::size_t load_params(ParamStore<float>& ps, const std::string& path, bool require_all);

std::vector<ArrayRecord> params_to_records(const ParamStore<float>& ps, const std::string& prefix = "param/");

}  // namespace mf::train
