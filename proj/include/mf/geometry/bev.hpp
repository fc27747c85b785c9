#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "mf/autodiff/ops.hpp"
#include "mf/autodiff/tensor.hpp"

namespace mf::geometry {

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pinhole camera with square pixels and the principal point at the image center.
struct CameraModel {
  double horizontal_fov_deg = 120.0;
  std::size_t width = 704;
  std::size_t height = 160;
  double mount_height_m = 2.0;

  static CameraModel make(double fov_deg, std::size_t width, std::size_t height, double mount_height_m = 2.0);

  double focal_px() const;
  double cx() const { return static_cast<double>(width) / 2.0; }
  double cy() const { return static_cast<double>(height) / 2.0; }
};

/// Top-down ego raster. x is forward (up in the image), y is lateral (right).
/// The ego sits on the bottom row, center column.
struct BevFrame {
  std::size_t resolution = 256;
  double meters_per_pixel = 1.0 / 8.0;

  static BevFrame make(std::size_t resolution, double meters_per_pixel);
  /// Same physical extent, different pixel count.
  BevFrame rescaled(std::size_t new_resolution) const;

  double pixels_per_meter() const { return 1.0 / meters_per_pixel; }
  double ego_row() const { return static_cast<double>(resolution - 1); }
  double ego_col() const { return static_cast<double>(resolution / 2); }
  double forward_extent_m() const { return static_cast<double>(resolution) * meters_per_pixel; }
  /// Metric location of a pixel center.
  std::pair<double, double> pixel_to_meters(double row, double col) const;
};

struct PixelCoord {
  double row = 0.0;
  double col = 0.0;
  bool in_frame = false;
};

/// Linear map with ego at the bottom-center pixel, forward = up, lateral right = +col.
PixelCoord meters_to_pixels(double x_m, double y_m, const BevFrame& frame);

/// Oriented box on the ground plane, ego frame meters. yaw 0 points forward (+x).
struct Box {
  double x = 0.0, y = 0.0;
  double length = 4.5, width = 2.0;
  double yaw = 0.0;
};

/// True when the ego-frame point lies inside the box (half-open on the far edges).
bool box_contains(const Box& b, double x, double y);

struct DepthBand {
  double start = 0.0;
  double end = 0.625;
};

/// One ray per (down-sampled) image column; radii linearly spaced inside the band.
struct PolarRayGrid {
  CameraModel camera;
  std::size_t num_azimuth = 0;
  std::size_t num_depth = 0;
  DepthBand band;
  double max_depth_m = 32.0;
  std::vector<double> azimuth_rad;  // per ray, monotone increasing
  std::vector<double> radius_m;     // per depth cell, strictly increasing

  std::size_t cells() const { return num_azimuth * num_depth; }
  /// Cell (ray, depth) flattened as ray * num_depth + depth.
  std::pair<double, double> cell_bev_m(std::size_t ray, std::size_t depth) const;
  /// Continuous image column (in camera pixels) of ray k.
  double ray_column_px(std::size_t ray) const;
  /// Per-cell positional encoding [num_azimuth * num_depth, dim].
  std::vector<double> positional_encoding(std::size_t dim) const;
};

PolarRayGrid build_polar_ray_grid(const CameraModel& camera, std::size_t num_azimuth, std::size_t num_depth,
                                  DepthBand band, double max_depth_m);

/// Bilinear polar -> BEV interpolation weights. Output rows are BEV pixels in
/// row-major order; input rows are grid cells. Pixels outside the wedge or the
/// band get no entries (zero fill).
SparseMap polar_to_bev_map(const PolarRayGrid& grid, const BevFrame& frame);

/// values [num_azimuth, num_depth, C] -> [C, H, W]
template <typename T>
Tensor<T> polar_to_bev_resample(const Tensor<T>& values, const PolarRayGrid& grid, const BevFrame& frame);

/// Variant taking a precomputed map (values as [cells, C]); returns [H*W, C].
template <typename T>
Tensor<T> polar_to_bev_rows(const Tensor<T>& cell_rows, const SparseMap& map);

/// Sinusoidal encoding of two coordinates: first half of `dim` for a, second for b.
std::vector<double> sinusoidal_2d(double a, double b, std::size_t dim);

/// CSV rows: azimuth_deg, radius_m, bev_x_px, bev_y_px (pixel column, row).
std::string grid_to_csv(const PolarRayGrid& grid, const BevFrame& frame);

}  // namespace mf::geometry
