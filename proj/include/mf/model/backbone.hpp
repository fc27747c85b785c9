#pragma once

#include <optional>
#include <vector>

#include "mf/geometry/bev.hpp"
#include "mf/model/dims.hpp"
#include "mf/nn/layers.hpp"

namespace mf::model {

/// conv -> channel norm -> ReLU
template <typename T>
struct ConvBlock {
  nn::Conv<T> conv;
  nn::LayerNorm<T> norm;

  static ConvBlock make(ParamStore<T>& ps, const std::string& name, std::size_t cin, std::size_t cout,
                        std::size_t stride, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const { return relu(norm.channels(conv(x))); }
};

/// Three strided stages: /4 (two stride-2 blocks), /8, then a stride-1 widening block.
template <typename T>
struct BranchCnn {
  ConvBlock<T> s1a, s1b, s2, s3;

  static BranchCnn make(ParamStore<T>& ps, const std::string& name, std::size_t cin, const ModelDims& d, Rng& rng);
  Tensor<T> stage1(const Tensor<T>& x) const { return s1b(s1a(x)); }
  Tensor<T> stage2(const Tensor<T>& x) const { return s2(x); }
  Tensor<T> stage3(const Tensor<T>& x) const { return s3(x); }
};

template <typename T>
struct MbtResult {
  Tensor<T> image;  // [1, C, H, W]
  Tensor<T> lidar;  // [1, C, R, R]
  Tensor<T> f_mid;  // [cells, C]
  Tensor<T> f_mbt;  // [R*R, C]
};

/// Image-column to BEV translation followed by joint attention with the LiDAR map.
template <typename T>
struct MbtStage {
  geometry::PolarRayGrid grid;
  geometry::BevFrame frame;
  SparseMap to_bev, from_bev, cells_to_columns, column_broadcast;
  Tensor<T> grid_pe;  // [cells, C], constant
  std::size_t channels = 0, image_h = 0, image_w = 0, lidar_res = 0, rays_per_column = 0;

  nn::TransformerLayer<T> column_layer;
  nn::MultiHeadAttention<T> query_attn;
  nn::TransformerLayer<T> joint_layer;
  nn::Linear<T> m1, m2;

  static MbtStage make(ParamStore<T>& ps, const std::string& name, const ModelDims& d, std::size_t channels,
                       std::size_t image_h, std::size_t image_w, std::size_t lidar_res, geometry::DepthBand band,
                       std::size_t depth_cells, Rng& rng);

  /// Per-column encodings h: [W*H, C], rows grouped by column.
  Tensor<T> column_encode(const Tensor<T>& image) const;
  /// Grid queries against column keys/values: [cells, C], cell = ray * depth + j.
  Tensor<T> query_columns(const Tensor<T>& h, nn::AttentionRecord* record = nullptr) const;
  MbtResult<T> operator()(const Tensor<T>& image, const Tensor<T>& lidar) const;
};

template <typename T>
struct BranchFeatures {
  std::vector<Tensor<T>> image_stages;  // [1, C_s, H_s, W_s] after any MBT update
  std::vector<Tensor<T>> lidar_stages;
  Tensor<T> image;  // final maps
  Tensor<T> lidar;
};

template <typename T>
struct Backbone {
  ModelDims dims;
  BranchCnn<T> image_cnn, lidar_cnn;
  MbtStage<T> mbt1, mbt2;

  static Backbone make(ParamStore<T>& ps, const ModelDims& d, Rng& rng);
  /// image [3, H, W], lidar [33, R, R]
  BranchFeatures<T> operator()(const Tensor<T>& image, const Tensor<T>& lidar) const;
};

}  // namespace mf::model
