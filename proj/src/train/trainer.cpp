#include "mf/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "mf/model/heads.hpp"

namespace mf::train {

namespace {

template <typename C>
std::vector<double> to_double(const C& v) {
  return {v.begin(), v.end()};
}

template <typename T>
std::vector<int> to_labels(const std::vector<T>& v) {
  return {v.begin(), v.end()};
}

geometry::BevFrame aux_frame(const scenes::SceneSample& s) {
  return geometry::BevFrame::make(s.lidar_res, s.meters_per_pixel).rescaled(s.bev_res);
}

void check_sample(const scenes::SceneSample& s, const model::ModelDims& d) {
  if (s.image_h != d.image_h || s.image_w != d.image_w || s.lidar_res != d.lidar_res || s.bev_res != d.bev_aux_res ||
      s.waypoints.size() != 2 * d.waypoints) {
    throw std::runtime_error("dataset sample shapes (image " + std::to_string(s.image_h) + "x" +
                             std::to_string(s.image_w) + ", lidar " + std::to_string(s.lidar_res) + ", bev " +
                             std::to_string(s.bev_res) + ") do not match the model dims");
  }
}

}  // namespace

Tensorf camera_tensor(const scenes::SceneSample& s) { return Tensorf({3, s.image_h, s.image_w}, s.camera); }
Tensorf lidar_tensor(const scenes::SceneSample& s) {
  return Tensorf({scenes::kLidarSlices + 1, s.lidar_res, s.lidar_res}, s.lidar);
}

LossParts perception_losses(const model::ImageAux<float>& image, const model::BevAux<float>& bev,
                            const scenes::SceneSample& s, const model::ModelDims& dims) {
  LossParts parts;
  std::vector<double> depth(s.depth.size());
  for (std::size_t i = 0; i < depth.size(); ++i) depth[i] = std::min(1.0, double(s.depth[i]) / dims.max_depth_m);
  parts.emplace_back("depth", l1_loss(image.depth, depth).value);
  parts.emplace_back("semantic_seg", cross_entropy(image.semantic, to_labels(s.semantic)).value);
  parts.emplace_back("bev_seg", cross_entropy(bev.segmentation, to_labels(s.bev_seg)).value);
  const auto det = model::encode_detection_targets(s.boxes, aux_frame(s));
  parts.emplace_back("bev_prediction", focal_loss(bev.position, det.position).value);
  parts.emplace_back("detection", l1_loss(bev.regression, det.regression, det.center).value);
  parts.emplace_back("yaw_class", cross_entropy(bev.orientation, det.orientation).value);
  return parts;
}

LossParts drive_losses(const model::DriveOutputs<float>& out, const scenes::SceneSample& s,
                       const model::ModelDims& dims) {
  LossParts parts;
  parts.emplace_back("wp", waypoint_loss(out.waypoints, s.waypoints));
  parts.emplace_back("velocity", l1_loss(out.speed, {s.speed}).value);
  auto p = perception_losses(out.image, out.bev, s, dims);
  parts.insert(parts.end(), p.begin(), p.end());
  return parts;
}

LossParts pretrain_losses(const model::PretrainOutputs<float>& out, const scenes::SceneSample& s,
                          const model::ModelDims& dims, model::ReconTarget target, bool with_aux) {
  LossParts parts;
  if (target == model::ReconTarget::sensor) {
    parts.emplace_back("recon_image", mse(out.recon_image, to_double(s.camera)));
    parts.emplace_back("recon_lidar", mse(out.recon_lidar, to_double(s.lidar)));
  } else {
    parts.emplace_back("recon_token", mse(out.token_pred, to_double(out.token_target.data())));
  }
  if (with_aux) {
    auto p = perception_losses(out.image, out.bev, s, dims);
    parts.insert(parts.end(), p.begin(), p.end());
  }
  return parts;
}

double reconstruction_error(const model::Model<float>& m, const scenes::SceneSample& s, const model::MaskPlan& plan) {
  NoGradGuard g;
  auto out = m.pretrain_forward(camera_tensor(s), lidar_tensor(s), plan);
  return 0.5 * (double(mse(out.recon_image, to_double(s.camera)).item()) +
                double(mse(out.recon_lidar, to_double(s.lidar)).item()));
}

Trainer::Trainer(Phase phase, const RunConfig& cfg, std::vector<scenes::SceneSample> data)
    : phase_(phase),
      cfg_(cfg),
      dims_(dims_from(cfg)),
      weights_(weights_from(cfg)),
      data_(std::move(data)),
      optimizer_(optimizer_from(cfg)) {
  if (data_.empty()) throw std::runtime_error("training dataset is empty");
  for (const auto& s : data_) check_sample(s, dims_);
  if (cfg_.integer("train.batch_size") < 1) throw ConfigError("train.batch_size must be at least 1");
  model_ = std::make_unique<model::Model<float>>(dims_, static_cast<std::uint64_t>(cfg_.integer("seed")));
  base_lr_ = optimizer_.config().lr;
}

std::int64_t Trainer::steps_per_epoch() const {
  const auto b = cfg_.integer("train.batch_size");
  return (static_cast<std::int64_t>(data_.size()) + b - 1) / b;
}

std::int64_t Trainer::total_steps() const {
  const auto cap = cfg_.integer("train.max_steps");
  const auto full = steps_per_epoch() * cfg_.integer("train.epochs");
  return cap > 0 ? std::min(cap, full) : full;
}

double Trainer::lr_at(std::int64_t step) const {
  const std::int64_t epoch = step / steps_per_epoch();
  return epoch >= cfg_.integer("optim.lr_drop_epoch") ? base_lr_ * cfg_.real("optim.lr_drop_factor") : base_lr_;
}

std::vector<std::size_t> Trainer::batch_indices(std::int64_t step) const {
  const std::int64_t spe = steps_per_epoch();
  const std::int64_t epoch = step / spe, within = step % spe;
  std::vector<std::size_t> order(data_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng(static_cast<std::uint64_t>(cfg_.integer("seed"))).split(0xe90c0000ULL + std::uint64_t(epoch));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const auto b = static_cast<std::size_t>(cfg_.integer("train.batch_size"));
  const std::size_t begin = std::size_t(within) * b, end = std::min(order.size(), begin + b);
  return {order.begin() + std::ptrdiff_t(begin), order.begin() + std::ptrdiff_t(end)};
}

StepReport Trainer::step() {
  const std::int64_t step = steps_done();
  const auto idx = batch_indices(step);
  const auto target = model::parse_recon_target(cfg_.text("recon_target"));
  const bool augment = cfg_.boolean("train.augment");
  const double max_deg = cfg_.real("train.rotation_deg");
  const double ratio = cfg_.real("mask_ratio");
  const auto seed = static_cast<std::uint64_t>(cfg_.integer("seed"));

  StepReport report;
  report.step = step + 1;
  report.lr = lr_at(step);
  model_->params().zero_grad();
  std::vector<std::pair<std::string, double>> totals;
  for (std::size_t b = 0; b < idx.size(); ++b) {
    Rng rng = Rng(seed).split(mix64(std::uint64_t(step) * 4096 + b));
    const double angle = augment ? rng.uniform(-max_deg, max_deg) : 0.0;
    const scenes::SceneSample s = augment ? scenes::augment_rotation(data_[idx[b]], angle) : data_[idx[b]];
    LossParts parts;
    if (phase_ == Phase::pretrain) {
      const auto plan = model::plan_mask(dims_.tokens(), ratio, rng.next_u64());
      auto out = model_->pretrain_forward(camera_tensor(s), lidar_tensor(s), plan, target);
      parts = pretrain_losses(out, s, dims_, target, cfg_.boolean("train.pretrain_aux"));
    } else {
      auto out = model_->drive_forward(camera_tensor(s), lidar_tensor(s), s.target_x, s.target_y,
                                       model::MaskPlan::identity(dims_.tokens()));
      parts = drive_losses(out, s, dims_);
    }
    for (const auto& [name, v] : parts) {
      const double x = v.item();
      if (!std::isfinite(x)) throw NumericError("non-finite " + name + " loss at step " + std::to_string(step + 1));
      report.parts[name] += x / double(idx.size());
    }
    auto total = combine_total(parts, weights_);
    scale(total, 1.0f / float(idx.size())).backward();
  }
  for (const auto& name : loss_part_names()) {
    if (report.parts.count(name)) totals.emplace_back(name, report.parts[name]);
  }
  report.total = combine_total_values(totals, weights_);
  optimizer_.config().lr = report.lr;
  optimizer_.step(model_->params());
  return report;
}

std::vector<ArrayRecord> params_to_records(const ParamStore<float>& ps, const std::string& prefix) {
  std::vector<ArrayRecord> out;
  for (const auto& [name, t] : ps.entries()) {
    const auto d = t.data();
    out.push_back(ArrayRecord::from_f32(prefix + name, t.shape(), {d.begin(), d.end()}));
  }
  return out;
}

void Trainer::save(const std::string& path) const {
  auto records = params_to_records(model_->params());
  auto& opt = const_cast<AdamW<float>&>(optimizer_);
  opt.ensure_state(model_->params());
  const auto& entries = model_->params().entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Shape shape = entries[i].second.shape();
    records.push_back(ArrayRecord::from_f32("adam_m/" + entries[i].first, shape, opt.first_moments()[i]));
    records.push_back(ArrayRecord::from_f32("adam_v/" + entries[i].first, shape, opt.second_moments()[i]));
  }
  records.push_back(ArrayRecord::from_f64("meta/step", {1}, {double(optimizer_.steps_taken())}));
  records.push_back(ArrayRecord::from_f64("meta/tokens", {1}, {double(dims_.tokens())}));
  if (auto dir = std::filesystem::path(path).parent_path(); !dir.empty()) std::filesystem::create_directories(dir);
  save_checkpoint(path, records);
}

namespace {

std::map<std::string, const ArrayRecord*> index_records(const std::vector<ArrayRecord>& records) {
  std::map<std::string, const ArrayRecord*> m;
  for (const auto& r : records) m[r.name] = &r;
  return m;
}

void copy_into(Tensorf& t, const ArrayRecord& r) {
  const auto values = r.as_f32();
  auto dst = t.data();
  std::copy(values.begin(), values.end(), dst.begin());
}

}  // namespace

std::size_t load_params(ParamStore<float>& ps, const std::string& path, bool require_all) {
  const auto records = load_checkpoint(path);
  const auto by_name = index_records(records);
  std::vector<std::string> mismatched;
  for (auto& [name, t] : ps.entries()) {
    auto it = by_name.find("param/" + name);
    if (it == by_name.end() ? require_all : it->second->shape() != t.shape()) mismatched.push_back(name);
  }
  if (!mismatched.empty()) {
    std::string list;
    for (const auto& n : mismatched) list += (list.empty() ? "" : ", ") + n;
    throw std::runtime_error("checkpoint '" + path + "' is incompatible; mismatched parameters: " + list);
  }
  std::size_t copied = 0;
  for (auto& [name, t] : ps.entries()) {
    auto it = by_name.find("param/" + name);
    if (it == by_name.end()) continue;
    copy_into(t, *it->second);
    ++copied;
  }
  if (copied == 0) throw std::runtime_error("checkpoint '" + path + "' shares no parameters with the model");
  return copied;
}

std::size_t Trainer::init_from(const std::string& path) { return load_params(model_->params(), path, false); }

void Trainer::resume(const std::string& path) {
  const auto records = load_checkpoint(path);
  const auto by_name = index_records(records);
  load_params(model_->params(), path, true);
  optimizer_.ensure_state(model_->params());
  const auto& entries = model_->params().entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto m = by_name.find("adam_m/" + entries[i].first), v = by_name.find("adam_v/" + entries[i].first);
    if (m == by_name.end() || v == by_name.end()) {
      throw std::runtime_error("checkpoint '" + path + "' lacks optimizer state for " + entries[i].first);
    }
    optimizer_.first_moments()[i] = m->second->as_f32();
    optimizer_.second_moments()[i] = v->second->as_f32();
  }
  auto st = by_name.find("meta/step");
  if (st == by_name.end()) throw std::runtime_error("checkpoint '" + path + "' lacks meta/step");
  optimizer_.set_steps_taken(static_cast<std::int64_t>(st->second->as_f64().at(0)));
}

TrainSummary run_training(Trainer& trainer, const std::string& csv_path, const std::string& checkpoint_path,
                          std::int64_t checkpoint_every) {
  TrainSummary summary;
  summary.checkpoint = checkpoint_path;
  if (auto dir = std::filesystem::path(csv_path).parent_path(); !dir.empty()) std::filesystem::create_directories(dir);
  const bool fresh = trainer.steps_done() == 0;
  std::ofstream csv(csv_path, fresh ? std::ios::trunc : std::ios::app);
  if (!csv) throw std::runtime_error("cannot write loss CSV '" + csv_path + "'");
  if (fresh) csv << loss_csv_header() << '\n';
  while (trainer.steps_done() < trainer.total_steps()) {
    StepReport r;
    try {
      r = trainer.step();
    } catch (const NumericError&) {
      csv.flush();
      throw;
    }
    csv << loss_csv_row(r.step, r.parts, r.total) << '\n';
    summary.history.push_back(r);
    if (checkpoint_every > 0 && r.step % checkpoint_every == 0) trainer.save(checkpoint_path);
  }
  trainer.save(checkpoint_path);
  return summary;
}

}  // namespace mf::train
