#include "mf/model/backbone.hpp"

#include <stdexcept>

namespace mf::model {

template <typename T>
ConvBlock<T> ConvBlock<T>::make(ParamStore<T>& ps, const std::string& name, std::size_t cin, std::size_t cout,
                                std::size_t stride, Rng& rng) {
  ConvBlock b;
  b.conv = nn::Conv<T>::make(ps, name + ".conv", cin, cout, 3, stride, 1, rng);
  b.norm = nn::LayerNorm<T>::make(ps, name + ".norm", cout, rng);
  return b;
}

template <typename T>
BranchCnn<T> BranchCnn<T>::make(ParamStore<T>& ps, const std::string& name, std::size_t cin, const ModelDims& d,
                                Rng& rng) {
  BranchCnn b;
  b.s1a = ConvBlock<T>::make(ps, name + ".s1a", cin, d.c1, 2, rng);
  b.s1b = ConvBlock<T>::make(ps, name + ".s1b", d.c1, d.c1, 2, rng);
  b.s2 = ConvBlock<T>::make(ps, name + ".s2", d.c1, d.c2, 2, rng);
  b.s3 = ConvBlock<T>::make(ps, name + ".s3", d.c2, d.c, 1, rng);
  return b;
}

template <typename T>
MbtStage<T> MbtStage<T>::make(ParamStore<T>& ps, const std::string& name, const ModelDims& d, std::size_t channels,
                              std::size_t image_h, std::size_t image_w, std::size_t lidar_res,
                              geometry::DepthBand band, std::size_t depth_cells, Rng& rng) {
  MbtStage m;
  m.channels = channels;
  m.image_h = image_h;
  m.image_w = image_w;
  m.lidar_res = lidar_res;
  const std::size_t num_az = d.num_azimuth();
  if (image_w == 0 || num_az % image_w != 0) {
    throw std::invalid_argument("mbt: ray count " + std::to_string(num_az) + " is not a multiple of map width " +
                                std::to_string(image_w));
  }
  m.rays_per_column = num_az / image_w;
  const auto camera = geometry::CameraModel::make(d.fov_deg, d.image_w, d.image_h);
  m.grid = geometry::build_polar_ray_grid(camera, num_az, depth_cells, band, d.max_depth_m);
  m.frame = geometry::BevFrame::make(d.lidar_res, d.lidar_meters_per_pixel).rescaled(lidar_res);
  m.to_bev = geometry::polar_to_bev_map(m.grid, m.frame);
  m.from_bev = m.to_bev.transposed();

  const std::size_t per_column = m.rays_per_column * depth_cells;
  m.cells_to_columns.rows_in = m.grid.cells();
  for (std::size_t w = 0; w < image_w; ++w) {
    std::vector<std::pair<std::size_t, double>> row;
    for (std::size_t i = 0; i < per_column; ++i) row.emplace_back(w * per_column + i, 1.0 / double(per_column));
    m.cells_to_columns.add_row(row);
  }
  m.column_broadcast.rows_in = image_w;
  for (std::size_t h = 0; h < image_h; ++h)
    for (std::size_t w = 0; w < image_w; ++w) m.column_broadcast.add_row({{w, 1.0}});

  const auto pe = m.grid.positional_encoding(channels);
  m.grid_pe = Tensor<T>({m.grid.cells(), channels}, std::vector<T>(pe.begin(), pe.end()));

  m.column_layer = nn::TransformerLayer<T>::make(ps, name + ".column", channels, d.heads, 2 * channels, rng);
  m.query_attn = nn::MultiHeadAttention<T>::make(ps, name + ".query", channels, d.heads, rng);
  m.joint_layer = nn::TransformerLayer<T>::make(ps, name + ".joint", channels, d.heads, 2 * channels, rng);
  m.m1 = nn::Linear<T>::make(ps, name + ".m1", channels, channels, rng);
  m.m2 = nn::Linear<T>::make(ps, name + ".m2", channels, channels, rng);
  return m;
}

template <typename T>
Tensor<T> MbtStage<T>::column_encode(const Tensor<T>& image) const {
  if (image.rank() != 4 || image.dim(1) != channels || image.dim(2) != image_h || image.dim(3) != image_w) {
    throw TensorError("mbt: image map " + shape_str(image.shape()) + " does not match stage (1, " +
                      std::to_string(channels) + ", " + std::to_string(image_h) + ", " + std::to_string(image_w) +
                      ")");
  }
  auto cols = reshape(permute(reshape(image, {channels, image_h, image_w}), {2, 1, 0}), {image_w * image_h, channels});
  return column_layer(cols, image_w);
}

template <typename T>
Tensor<T> MbtStage<T>::query_columns(const Tensor<T>& h, nn::AttentionRecord* record) const {
  return query_attn(grid_pe, h, image_w, record);
}

template <typename T>
MbtResult<T> MbtStage<T>::operator()(const Tensor<T>& image, const Tensor<T>& lidar) const {
  if (lidar.rank() != 4 || lidar.dim(1) != channels || lidar.dim(2) != lidar_res || lidar.dim(3) != lidar_res) {
    throw TensorError("mbt: lidar map " + shape_str(lidar.shape()) + " does not match stage");
  }
  MbtResult<T> r;
  auto h = column_encode(image);
  r.f_mid = query_columns(h);
  r.f_mbt = sparse_map(r.f_mid, to_bev);
  const std::size_t bev = lidar_res * lidar_res;
  auto joint = joint_layer(concat<T>({r.f_mbt, nn::map_to_rows(lidar)}, 0));
  auto parts = split(joint, 0, {bev, bev});
  r.lidar = add(lidar, nn::rows_to_map(m1(parts[1]), lidar_res, lidar_res));
  auto columns = sparse_map(sparse_map(parts[0], from_bev), cells_to_columns);
  auto spread = sparse_map(m2(columns), column_broadcast);
  r.image = add(image, nn::rows_to_map(spread, image_h, image_w));
  return r;
}

template <typename T>
Backbone<T> Backbone<T>::make(ParamStore<T>& ps, const ModelDims& d, Rng& rng) {
  d.validate();
  Backbone b;
  b.dims = d;
  b.image_cnn = BranchCnn<T>::make(ps, "image_cnn", 3, d, rng);
  b.lidar_cnn = BranchCnn<T>::make(ps, "lidar_cnn", d.lidar_channels, d, rng);
  b.mbt1 = MbtStage<T>::make(ps, "mbt1", d, d.c1, d.image_stage1_h(), d.image_stage1_w(), d.lidar_stage1(),
                             {0.0, d.band_split}, d.depth_cells_near, rng);
  b.mbt2 = MbtStage<T>::make(ps, "mbt2", d, d.c2, d.image_final_h(), d.image_final_w(), d.lidar_final(),
                             {d.band_split, d.band_end}, d.depth_cells_far, rng);
  return b;
}

template <typename T>
BranchFeatures<T> Backbone<T>::operator()(const Tensor<T>& image, const Tensor<T>& lidar) const {
  const Shape want_image{3, dims.image_h, dims.image_w};
  const Shape want_lidar{dims.lidar_channels, dims.lidar_res, dims.lidar_res};
  if (image.shape() != want_image || lidar.shape() != want_lidar) {
    throw TensorError("encode_branches: expected image " + shape_str(want_image) + " and lidar " +
                      shape_str(want_lidar) + ", got " + shape_str(image.shape()) + " and " +
                      shape_str(lidar.shape()));
  }
  BranchFeatures<T> f;
  // Sensors arrive in [0, 1]; center them before the first convolution.
  auto im = image_cnn.stage1(reshape(scale(add_scalar(image, T(-0.5)), T(4)), {1, 3, dims.image_h, dims.image_w}));
  auto li = lidar_cnn.stage1(
      reshape(scale(add_scalar(lidar, T(-0.5)), T(4)), {1, dims.lidar_channels, dims.lidar_res, dims.lidar_res}));
  auto m = mbt1(im, li);
  f.image_stages.push_back(m.image);
  f.lidar_stages.push_back(m.lidar);
  im = image_cnn.stage2(m.image);
  li = lidar_cnn.stage2(m.lidar);
  m = mbt2(im, li);
  f.image_stages.push_back(m.image);
  f.lidar_stages.push_back(m.lidar);
  f.image = image_cnn.stage3(m.image);
  f.lidar = lidar_cnn.stage3(m.lidar);
  f.image_stages.push_back(f.image);
  f.lidar_stages.push_back(f.lidar);
  return f;
}

template struct ConvBlock<float>;
template struct ConvBlock<double>;
template struct BranchCnn<float>;
template struct BranchCnn<double>;
template struct MbtStage<float>;
template struct MbtStage<double>;
template struct Backbone<float>;
template struct Backbone<double>;

}  // namespace mf::model
