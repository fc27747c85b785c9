#include "mf/geometry/bev.hpp"

#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace mf::geometry {

CameraModel CameraModel::make(double fov_deg, std::size_t width, std::size_t height, double mount_height_m) {
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) {
    throw GeometryError("camera: horizontal fov must lie in (0, 180) degrees, got " + std::to_string(fov_deg));
  }
  if (width == 0 || height == 0) throw GeometryError("camera: empty image");
  return CameraModel{fov_deg, width, height, mount_height_m};
}

double CameraModel::focal_px() const {
  const double half = horizontal_fov_deg * std::numbers::pi / 360.0;
  return (static_cast<double>(width) / 2.0) / std::tan(half);
}

BevFrame BevFrame::make(std::size_t resolution, double meters_per_pixel) {
  if (resolution < 2 || !(meters_per_pixel > 0.0)) throw GeometryError("bev frame: invalid resolution or scale");
  return BevFrame{resolution, meters_per_pixel};
}

BevFrame BevFrame::rescaled(std::size_t new_resolution) const {
  return make(new_resolution, meters_per_pixel * static_cast<double>(resolution) / static_cast<double>(new_resolution));
}

std::pair<double, double> BevFrame::pixel_to_meters(double row, double col) const {
  return {(ego_row() - row) * meters_per_pixel, (col - ego_col()) * meters_per_pixel};
}

PixelCoord meters_to_pixels(double x_m, double y_m, const BevFrame& frame) {
  PixelCoord p;
  p.row = frame.ego_row() - x_m * frame.pixels_per_meter();
  p.col = frame.ego_col() + y_m * frame.pixels_per_meter();
  const double lim = static_cast<double>(frame.resolution) - 0.5;
  p.in_frame = p.row >= -0.5 && p.row < lim && p.col >= -0.5 && p.col < lim;
  return p;
}

bool box_contains(const Box& b, double x, double y) {
  const double dx = x - b.x, dy = y - b.y;
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double along = c * dx + s * dy;
  const double across = -s * dx + c * dy;
  return along >= -b.length / 2 && along < b.length / 2 && across >= -b.width / 2 && across < b.width / 2;
}

std::pair<double, double> PolarRayGrid::cell_bev_m(std::size_t ray, std::size_t depth) const {
  const double r = radius_m.at(depth);
  const double az = azimuth_rad.at(ray);
  return {r * std::cos(az), r * std::sin(az)};
}

double PolarRayGrid::ray_column_px(std::size_t ray) const {
  // Center of the ray's column band; exact for the middle ray when the count is odd.
  return static_cast<double>((2 * ray + 1) * camera.width) / static_cast<double>(2 * num_azimuth);
}

std::vector<double> PolarRayGrid::positional_encoding(std::size_t dim) const {
  std::vector<double> out;
  out.reserve(cells() * dim);
  for (std::size_t k = 0; k < num_azimuth; ++k) {
    for (std::size_t j = 0; j < num_depth; ++j) {
      auto pe = sinusoidal_2d(static_cast<double>(j), static_cast<double>(k), dim);
      out.insert(out.end(), pe.begin(), pe.end());
    }
  }
  return out;
}

PolarRayGrid build_polar_ray_grid(const CameraModel& camera, std::size_t num_azimuth, std::size_t num_depth,
                                  DepthBand band, double max_depth_m) {
  if (!(band.start >= 0.0 && band.end < 1.0 && band.start < band.end)) {
    throw GeometryError("polar grid: empty or invalid depth band [" + std::to_string(band.start) + ", " +
                        std::to_string(band.end) + ")");
  }
  if (num_azimuth < 2 || num_depth < 2) throw GeometryError("polar grid: need at least 2 rays and 2 depth cells");
  if (!(max_depth_m > 0.0)) throw GeometryError("polar grid: max depth must be positive");

  PolarRayGrid g;
  g.camera = camera;
  g.num_azimuth = num_azimuth;
  g.num_depth = num_depth;
  g.band = band;
  g.max_depth_m = max_depth_m;
  const double f = camera.focal_px();
  for (std::size_t k = 0; k < num_azimuth; ++k) {
    g.azimuth_rad.push_back(std::atan((g.ray_column_px(k) - camera.cx()) / f));
  }
  const double r0 = band.start * max_depth_m, r1 = band.end * max_depth_m;
  for (std::size_t j = 0; j < num_depth; ++j) {
    g.radius_m.push_back(r0 + (r1 - r0) * static_cast<double>(j) / static_cast<double>(num_depth - 1));
  }
  return g;
}

SparseMap polar_to_bev_map(const PolarRayGrid& grid, const BevFrame& frame) {
  if (frame.forward_extent_m() < grid.radius_m.back()) {
    throw GeometryError("polar_to_bev: frame extent " + std::to_string(frame.forward_extent_m()) +
                        " m is smaller than the wedge depth " + std::to_string(grid.radius_m.back()) + " m");
  }
  const double f = grid.camera.focal_px();
  const double cx = grid.camera.cx();
  const double col_step = static_cast<double>(grid.camera.width) / static_cast<double>(grid.num_azimuth);
  const double r0 = grid.radius_m.front();
  const double dr = grid.radius_m[1] - grid.radius_m[0];
  const double last_ray = static_cast<double>(grid.num_azimuth - 1);
  const double last_depth = static_cast<double>(grid.num_depth - 1);

  SparseMap map;
  map.rows_in = grid.cells();
  for (std::size_t row = 0; row < frame.resolution; ++row) {
    for (std::size_t col = 0; col < frame.resolution; ++col) {
      const auto [x, y] = frame.pixel_to_meters(static_cast<double>(row), static_cast<double>(col));
      std::vector<std::pair<std::size_t, double>> entries;
      if (x > 0.0) {
        // Image column hit by the pixel's bearing; tan(az) = y / x.
        const double s = (cx + f * y / x) / col_step - 0.5;
        const double t = (std::hypot(x, y) - r0) / dr;
        if (s >= 0.0 && s <= last_ray && t >= 0.0 && t <= last_depth) {
          const std::size_t k0 = std::min(static_cast<std::size_t>(s), grid.num_azimuth - 2);
          const std::size_t j0 = std::min(static_cast<std::size_t>(t), grid.num_depth - 2);
          const double fs = s - static_cast<double>(k0);
          const double ft = t - static_cast<double>(j0);
          auto cell = [&](std::size_t k, std::size_t j) { return k * grid.num_depth + j; };
          entries = {{cell(k0, j0), (1 - fs) * (1 - ft)},
                     {cell(k0, j0 + 1), (1 - fs) * ft},
                     {cell(k0 + 1, j0), fs * (1 - ft)},
                     {cell(k0 + 1, j0 + 1), fs * ft}};
        }
      }
      map.add_row(entries);
    }
  }
  return map;
}

template <typename T>
Tensor<T> polar_to_bev_rows(const Tensor<T>& cell_rows, const SparseMap& map) {
  return sparse_map(cell_rows, map);
}

template <typename T>
Tensor<T> polar_to_bev_resample(const Tensor<T>& values, const PolarRayGrid& grid, const BevFrame& frame) {
  if (values.rank() != 3 || values.dim(0) != grid.num_azimuth || values.dim(1) != grid.num_depth) {
    throw GeometryError("polar_to_bev: values " + shape_str(values.shape()) + " do not match grid (" +
                        std::to_string(grid.num_azimuth) + ", " + std::to_string(grid.num_depth) + ")");
  }
  const std::size_t c = values.dim(2);
  const auto map = polar_to_bev_map(grid, frame);
  auto rows = sparse_map(reshape(values, {grid.cells(), c}), map);
  return reshape(transpose(rows), {c, frame.resolution, frame.resolution});
}

std::vector<double> sinusoidal_2d(double a, double b, std::size_t dim) {
  if (dim % 4 != 0) throw GeometryError("sinusoidal_2d: dimension must be a multiple of 4");
  std::vector<double> pe(dim);
  const std::size_t quarter = dim / 4;
  for (std::size_t i = 0; i < quarter; ++i) {
    const double freq = 1.0 / std::pow(10000.0, static_cast<double>(4 * i) / static_cast<double>(dim));
    pe[2 * i] = std::sin(a * freq);
    pe[2 * i + 1] = std::cos(a * freq);
    pe[dim / 2 + 2 * i] = std::sin(b * freq);
    pe[dim / 2 + 2 * i + 1] = std::cos(b * freq);
  }
  return pe;
}

std::string grid_to_csv(const PolarRayGrid& grid, const BevFrame& frame) {
  std::ostringstream os;
  os << "azimuth_deg,radius_m,bev_x_px,bev_y_px\n" << std::setprecision(9);
  for (std::size_t k = 0; k < grid.num_azimuth; ++k) {
    for (std::size_t j = 0; j < grid.num_depth; ++j) {
      const auto [x, y] = grid.cell_bev_m(k, j);
      const auto px = meters_to_pixels(x, y, frame);
      os << grid.azimuth_rad[k] * 180.0 / std::numbers::pi << ',' << grid.radius_m[j] << ',' << px.col << ','
         << px.row << '\n';
    }
  }
  return os.str();
}

template Tensor<float> polar_to_bev_resample(const Tensor<float>&, const PolarRayGrid&, const BevFrame&);
template Tensor<double> polar_to_bev_resample(const Tensor<double>&, const PolarRayGrid&, const BevFrame&);
template Tensor<float> polar_to_bev_rows(const Tensor<float>&, const SparseMap&);
template Tensor<double> polar_to_bev_rows(const Tensor<double>&, const SparseMap&);

}  // namespace mf::geometry
