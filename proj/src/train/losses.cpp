#include "mf/train/losses.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace mf::train {

namespace {

template <typename T>
Tensor<T> constant_like(const Tensor<T>& ref, const std::vector<double>& values, const char* op) {
  if (values.size() != ref.numel()) {
    throw TensorError(std::string(op) + ": target has " + std::to_string(values.size()) + " values, prediction " +
                      shape_str(ref.shape()));
  }
  return Tensor<T>(ref.shape(), std::vector<T>(values.begin(), values.end()));
}

template <typename T>
Tensor<T> one_minus(const Tensor<T>& x) {
  return add_scalar(scale(x, T(-1)), T(1));
}

}  // namespace

template <typename T>
Tensor<T> waypoint_loss(const Tensor<T>& pred, const std::vector<double>& gt) {
  if (pred.rank() != 2 || pred.dim(1) != 2 || gt.size() != pred.numel()) {
    throw TensorError("waypoint_loss: prediction " + shape_str(pred.shape()) + " vs " + std::to_string(gt.size() / 2) +
                      " ground-truth waypoints");
  }
  return sum(abs(sub(pred, constant_like(pred, gt, "waypoint_loss"))));
}

template <typename T>
Tensor<T> mse(const Tensor<T>& pred, const std::vector<double>& target) {
  return mean(square(sub(pred, constant_like(pred, target, "mse"))));
}

template <typename T>
Tensor<T> recon_loss(const Tensor<T>& pred_image, const Tensor<T>& pred_lidar, const std::vector<double>& image,
                     const std::vector<double>& lidar, double lambda_image, double lambda_lidar) {
  return add(scale(mse(pred_image, image), T(lambda_image)), scale(mse(pred_lidar, lidar), T(lambda_lidar)));
}

template <typename T>
LossValue<T> focal_loss(const Tensor<T>& prob, const std::vector<double>& target, double alpha, double beta) {
  auto gt = constant_like(prob, target, "focal_loss");
  std::vector<T> pos(target.size()), neg(target.size());
  std::size_t npos = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] >= 1.0) {
      pos[i] = T(1);
      ++npos;
    } else {
      neg[i] = static_cast<T>(std::pow(1.0 - target[i], beta));
    }
  }
  auto p = clamp(prob, T(1e-4), T(1 - 1e-4));
  const Tensor<T> pos_t(prob.shape(), std::move(pos)), neg_t(prob.shape(), std::move(neg));
  auto pos_term = mul(pos_t, mul(pow_scalar(one_minus(p), T(alpha)), log(p)));
  auto neg_term = mul(neg_t, mul(pow_scalar(p, T(alpha)), log(one_minus(p))));
  auto total = scale(add(sum(pos_term), sum(neg_term)), T(-1) / static_cast<T>(std::max<std::size_t>(npos, 1)));
  return {total, false};
}

template <typename T>
LossValue<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  const std::size_t k = logits.dim(0);
  const std::size_t positions = logits.numel() / k;
  if (labels.size() != positions) {
    throw TensorError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                      shape_str(logits.shape()));
  }
  std::vector<T> onehot(positions * k, T(0));
  std::size_t count = 0;
  for (std::size_t i = 0; i < positions; ++i) {
    if (labels[i] < 0) continue;
    if (static_cast<std::size_t>(labels[i]) >= k) throw TensorError("cross_entropy: label out of range");
    onehot[i * k + static_cast<std::size_t>(labels[i])] = T(1);
    ++count;
  }
  if (count == 0) return {scale(sum(logits), T(0)), true};
  auto lp = log_softmax(transpose(reshape(logits, {k, positions})));
  auto picked = sum(mul(lp, Tensor<T>({positions, k}, std::move(onehot))));
  return {scale(picked, T(-1) / static_cast<T>(count)), false};
}

template <typename T>
LossValue<T> l1_loss(const Tensor<T>& pred, const std::vector<double>& gt, const std::vector<std::uint8_t>& mask) {
  auto target = constant_like(pred, gt, "l1_loss");
  const std::size_t n = pred.numel();
  if (mask.empty()) return {mean(abs(sub(pred, target))), false};
  if (n % mask.size() != 0) throw TensorError("l1_loss: mask does not tile prediction " + shape_str(pred.shape()));
  std::vector<T> w(n);
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = mask[i % mask.size()] ? T(1) : T(0);
    count += mask[i % mask.size()] ? 1 : 0;
  }
  auto masked = sum(mul(abs(sub(pred, target)), Tensor<T>(pred.shape(), std::move(w))));
  if (count == 0) return {scale(masked, T(0)), true};
  return {scale(masked, T(1) / static_cast<T>(count)), false};
}

double LossWeights::get(const std::string& name) const {
  auto it = values.find(name);
  if (it == values.end()) throw std::invalid_argument("loss weights: unknown task '" + name + "'");
  return it->second;
}

void LossWeights::set(const std::string& name, double w) {
  if (!values.count(name)) throw std::invalid_argument("loss weights: unknown task '" + name + "'");
  if (!(w >= 0.0)) throw std::invalid_argument("loss weights: '" + name + "' must be non-negative");
  values[name] = w;
}

const std::vector<std::string>& loss_part_names() {
  static const std::vector<std::string> names = {"wp",        "depth",     "semantic_seg", "bev_seg",
                                                 "bev_prediction", "detection", "yaw_class", "velocity",
                                                 "recon_image", "recon_lidar", "recon_token"};
  return names;
}

namespace {

// Neumaier compensated sum of weight * part, so the total is the correctly rounded value.
double weighted_sum(const std::vector<std::pair<std::string, double>>& parts, const LossWeights& weights) {
  double total = 0.0, comp = 0.0;
  for (const auto& [name, v] : parts) {
    if (!std::isfinite(v)) throw std::runtime_error("combine_total: non-finite loss for task '" + name + "'");
    const double term = weights.get(name) * v;
    const double t = total + term;
    comp += std::abs(total) >= std::abs(term) ? (total - t) + term : (term - t) + total;
    total = t;
  }
  return total + comp;
}

}  // namespace

template <typename T>
Tensor<T> combine_total(const std::vector<std::pair<std::string, Tensor<T>>>& parts, const LossWeights& weights) {
  if (parts.empty()) throw std::invalid_argument("combine_total: no loss parts");
  std::vector<std::pair<std::string, double>> values;
  for (const auto& [name, part] : parts) values.emplace_back(name, static_cast<double>(part.item()));
  const double exact = weighted_sum(values, weights);
  Tensor<T> total;
  for (const auto& [name, part] : parts) {
    auto term = scale(part, static_cast<T>(weights.get(name)));
    total = total.defined() ? add(total, term) : term;
  }
  // Constant shift to the compensated value; gradients are unchanged.
  return add_scalar(total, static_cast<T>(exact - static_cast<double>(total.item())));
}

double combine_total_values(const std::vector<std::pair<std::string, double>>& parts, const LossWeights& weights) {
  return weighted_sum(parts, weights);
}

std::string loss_csv_header() {
  std::string h = "step";
  for (const auto& n : loss_part_names()) h += "," + n;
  return h + ",total";
}

std::string loss_csv_row(std::int64_t step, const std::map<std::string, double>& parts, double total) {
  std::ostringstream os;
  os << std::setprecision(9) << step;
  for (const auto& n : loss_part_names()) {
    os << ',';
    if (auto it = parts.find(n); it != parts.end()) os << it->second;
  }
  os << ',' << total;
  return os.str();
}

#define MF_INSTANTIATE_LOSSES(T)                                                                                   \
  template Tensor<T> waypoint_loss(const Tensor<T>&, const std::vector<double>&);                                  \
  template Tensor<T> mse(const Tensor<T>&, const std::vector<double>&);                                            \
  template Tensor<T> recon_loss(const Tensor<T>&, const Tensor<T>&, const std::vector<double>&,                    \
                                const std::vector<double>&, double, double);                                       \
  template LossValue<T> focal_loss(const Tensor<T>&, const std::vector<double>&, double, double);                  \
  template LossValue<T> cross_entropy(const Tensor<T>&, const std::vector<int>&);                                  \
  template LossValue<T> l1_loss(const Tensor<T>&, const std::vector<double>&, const std::vector<std::uint8_t>&);   \
  template Tensor<T> combine_total(const std::vector<std::pair<std::string, Tensor<T>>>&, const LossWeights&);

MF_INSTANTIATE_LOSSES(float)
MF_INSTANTIATE_LOSSES(double)

}  // namespace mf::train
