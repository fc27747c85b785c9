#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mf/autodiff/ops.hpp"

namespace mf::train {

template <typename T>
struct LossValue {
  Tensor<T> value;
  bool empty = false;  // no supervised positions; value is 0
};

/// sum_t |x_t - x_t^gt| + |y_t - y_t^gt| over pred/gt [T, 2].
template <typename T>
Tensor<T> waypoint_loss(const Tensor<T>& pred, const std::vector<double>& gt);

/// Mean squared error against a constant target.
template <typename T>
Tensor<T> mse(const Tensor<T>& pred, const std::vector<double>& target);

/// lambda_image * mean sq. error (image) + lambda_lidar * mean sq. error (lidar).
template <typename T>
Tensor<T> recon_loss(const Tensor<T>& pred_image, const Tensor<T>& pred_lidar, const std::vector<double>& image,
                     const std::vector<double>& lidar, double lambda_image, double lambda_lidar);

/// Penalty-reduced center heatmap focal loss on probabilities, alpha 2, beta 4,
/// normalized by the number of positive (== 1) target pixels.
template <typename T>
LossValue<T> focal_loss(const Tensor<T>& prob, const std::vector<double>& target, double alpha = 2.0,
                        double beta = 4.0);

/// logits [K, ...]; labels per position, -1 ignored. Mean over supervised positions.
template <typename T>
LossValue<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels);

/// Mean |pred - gt| over masked elements. An empty mask vector supervises everything;
/// a shorter mask repeats over the leading axis (per-pixel mask for a [C, H, W] map).
template <typename T>
LossValue<T> l1_loss(const Tensor<T>& pred, const std::vector<double>& gt, const std::vector<std::uint8_t>& mask = {});

/// Named weights. Keys beyond the paper's table: depth.
struct LossWeights {
  std::map<std::string, double> values = {
      {"wp", 1.0},        {"bev_seg", 1.0},     {"semantic_seg", 1.0}, {"bev_prediction", 1.0},
      {"detection", 0.2}, {"velocity", 0.2},    {"yaw_class", 0.2},    {"depth", 1.0},
      {"recon_image", 1.0}, {"recon_lidar", 1.0}, {"recon_token", 1.0}};

  double get(const std::string& name) const;
  void set(const std::string& name, double w);
};

/// Fixed column order for loss reports.
const std::vector<std::string>& loss_part_names();

/// total = sum of weight(name) * part over the provided (enabled) parts.
template <typename T>
Tensor<T> combine_total(const std::vector<std::pair<std::string, Tensor<T>>>& parts, const LossWeights& weights);

/// Scalar version used for reporting. Both versions use compensated summation.
double combine_total_values(const std::vector<std::pair<std::string, double>>& parts, const LossWeights& weights);

std::string loss_csv_header();
/// Missing parts are written as empty cells.
std::string loss_csv_row(std::int64_t step, const std::map<std::string, double>& parts, double total);

}  // namespace mf::train
