#pragma once

#include <cstddef>

namespace mf::model {

/// Architectural sizes. desk() is the small default; paper() restores the full shapes.
struct ModelDims {
  std::size_t image_h = 80;
  std::size_t image_w = 176;
  std::size_t lidar_res = 64;
  std::size_t lidar_channels = 33;
  double lidar_meters_per_pixel = 0.5;

  std::size_t c1 = 16;  // stage 1 channels
  std::size_t c2 = 32;  // stage 2 channels
  std::size_t c = 64;   // token width
  std::size_t heads = 4;
  std::size_t ffn_hidden = 128;
  std::size_t patch = 2;
  std::size_t encoder_layers = 4;
  std::size_t decoder_layers = 4;

  double fov_deg = 120.0;
  double max_depth_m = 32.0;
  std::size_t depth_cells_near = 25;
  std::size_t depth_cells_far = 13;
  double band_split = 0.625;
  double band_end = 0.95;

  std::size_t bev_aux_res = 32;
  std::size_t z_dim = 64;
  std::size_t z_token_channels = 8;  // per-token width before flattening into z
  std::size_t recon_channels = 32;
  std::size_t head_min_channels = 8;
  std::size_t waypoints = 4;
  std::size_t semantic_classes = 7;
  std::size_t bev_classes = 3;
  std::size_t yaw_bins = 12;

  static ModelDims desk() { return ModelDims{}; }
  static ModelDims paper();
  /// Very small shapes for finite-difference checks.
  static ModelDims tiny();

  /// Throws std::invalid_argument on inconsistent sizes.
  void validate() const;

  std::size_t num_azimuth() const { return image_w / 4; }
  std::size_t image_stage1_h() const { return image_h / 4; }
  std::size_t image_stage1_w() const { return image_w / 4; }
  std::size_t image_final_h() const { return image_h / 8; }
  std::size_t image_final_w() const { return image_w / 8; }
  std::size_t lidar_stage1() const { return lidar_res / 4; }
  std::size_t lidar_final() const { return lidar_res / 8; }
  std::size_t image_grid_h() const { return image_final_h() / patch; }
  std::size_t image_grid_w() const { return image_final_w() / patch; }
  std::size_t bev_grid() const { return lidar_final() / patch; }
  std::size_t image_tokens() const { return image_grid_h() * image_grid_w(); }
  std::size_t bev_tokens() const { return bev_grid() * bev_grid(); }
  std::size_t tokens() const { return image_tokens() + bev_tokens(); }
  double lidar_extent_m() const { return static_cast<double>(lidar_res) * lidar_meters_per_pixel; }
};

}  // namespace mf::model
