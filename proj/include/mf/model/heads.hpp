#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mf/geometry/bev.hpp"
#include "mf/model/dims.hpp"
#include "mf/nn/layers.hpp"

namespace mf::model {

inline const std::array<const char*, 7> kSemanticClasses = {"unlabeled",  "vehicle",      "road",    "red light",
                                                            "pedestrian", "lane marking", "sidewalk"};
inline const std::array<const char*, 3> kBevClasses = {"road", "lane marking", "others"};

/// Reassembles a token grid and upsamples it by repeated 2x transposed convolutions.
template <typename T>
struct UpsampleDecoder {
  std::vector<nn::ConvUp<T>> ups;
  nn::Conv<T> out;

  static UpsampleDecoder make(ParamStore<T>& ps, const std::string& name, std::size_t cin, std::size_t steps,
                              std::size_t min_channels, std::size_t cout, Rng& rng, bool halve = true);
  /// x [1, C, h, w] -> [1, cout, h * 2^steps, w * 2^steps]
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct ImageAux {
  Tensor<T> depth;     // [H, W], in (0, 1)
  Tensor<T> semantic;  // [7, H, W] logits
};

template <typename T>
struct ImageAuxHead {
  std::size_t grid_h = 0, grid_w = 0, classes = 7;
  UpsampleDecoder<T> decoder;

  static ImageAuxHead make(ParamStore<T>& ps, const ModelDims& d, Rng& rng);
  /// tokens [grid_h * grid_w, C]
  ImageAux<T> operator()(const Tensor<T>& tokens) const;
};

template <typename T>
struct BevAux {
  Tensor<T> segmentation;  // [3, A, A] logits
  Tensor<T> position;      // [1, A, A] in (0, 1)
  Tensor<T> orientation;   // [12, A, A] logits
  Tensor<T> regression;    // [5, A, A]
};

template <typename T>
struct BevAuxHead {
  std::size_t grid = 0, classes = 3, yaw_bins = 12;
  UpsampleDecoder<T> decoder;

  static BevAuxHead make(ParamStore<T>& ps, const ModelDims& d, Rng& rng);
  BevAux<T> operator()(const Tensor<T>& tokens) const;
};

/// Token -> feature patch block, assembled by grid position, then upsampled to the sensor raster.
template <typename T>
struct ReconHead {
  std::size_t grid_h = 0, grid_w = 0, block = 0, channels = 0;
  nn::Linear<T> to_block;
  UpsampleDecoder<T> decoder;

  static ReconHead make(ParamStore<T>& ps, const std::string& name, std::size_t dim, std::size_t grid_h,
                        std::size_t grid_w, std::size_t block, std::size_t channels, std::size_t steps,
                        std::size_t out_channels, Rng& rng);
  /// tokens [grid_h * grid_w, C] -> [out_channels, H, W]
  Tensor<T> operator()(const Tensor<T>& tokens) const;
};

/// GRU cell with input size 4 (current waypoint, goal).
template <typename T>
struct GruCell {
  nn::Linear<T> input, hidden;
  std::size_t size = 0;

  static GruCell make(ParamStore<T>& ps, const std::string& name, std::size_t in, std::size_t hidden, Rng& rng);
  /// x [1, in], h [1, H] -> [1, H]
  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& h) const;
};

template <typename T>
struct WaypointHead {
  nn::Linear<T> reduce, z1, z2, init, delta, velocity;
  GruCell<T> gru;
  std::size_t steps = 4;

  static WaypointHead make(ParamStore<T>& ps, const ModelDims& d, Rng& rng);
  /// Joint tokens -> z [1, z_dim].
  Tensor<T> observation(const Tensor<T>& image_tokens, const Tensor<T>& bev_tokens) const;
  /// z [1, Z], goal in ego meters -> waypoints [T, 2] starting after w_0 = (0, 0).
  Tensor<T> waypoints(const Tensor<T>& z, double goal_x, double goal_y, std::size_t steps) const;
  Tensor<T> speed(const Tensor<T>& z) const { return velocity(z); }
};

struct DetectionTargets {
  std::size_t res = 0;
  std::vector<double> position;     // [A*A]
  std::vector<int> orientation;     // [A*A], class at centers, -1 elsewhere
  std::vector<double> regression;   // [5, A, A]: length, width, row offset, col offset, yaw offset
  std::vector<std::uint8_t> center; // [A*A]
  std::size_t skipped = 0;
};

double gaussian_sigma_px(const geometry::Box& box, const geometry::BevFrame& frame);
int yaw_bin(double yaw_rad, std::size_t bins = 12);
double yaw_bin_center(int bin, std::size_t bins = 12);
DetectionTargets encode_detection_targets(const std::vector<geometry::Box>& boxes, const geometry::BevFrame& frame);

}  // namespace mf::model
